#include "csiloc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "csiloc/error.hpp"

namespace csiloc {

using nlohmann::json;

Grid GridConfig::build(const Room& room) const {
  return Grid::rectangular({room.x_min, room.x_max, room.y_min, room.y_max, side_count});
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.train.epochs = 60;
  cfg.train.learning_rate = 3e-4;
  cfg.finetune.epochs = 30;
  cfg.finetune.learning_rate = 1e-3;
  return cfg;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::Config, msg); };
  // Building the simulator also checks the delay budget, which depends on the scatterers.
  ChannelSimulator{sim};
  check(sim.ap_count() >= 1, "at least one access point is required");
  check(train_set.count >= 1 && test_set.count >= 1, "split counts must be >= 1");
  check(grid.side_count >= 2, "grid.side_count must be >= 2");
  check(label.epsilon >= 0.0 && label.max_iters >= 1 && label.tol > 0.0,
        "label settings must be non-negative with max_iters >= 1 and tol > 0");
  train.validate();
  finetune.validate();
  check(!hidden_layers.empty(), "hidden_layers must not be empty");
  for (int h : hidden_layers) check(h >= 1, "hidden layer widths must be >= 1");
  check(!output_dir.empty(), "output_dir must not be empty");
}

namespace {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  fail(ErrorCode::Config, "unknown optimizer '" + s + "'");
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"optimizer", optimizer_name(t.optimizer)},
          {"seed", t.seed},
          {"bn_momentum", t.bn_momentum}};
}

void train_from_json(const json& j, TrainConfig& t) {
  t.epochs = j.at("epochs").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  t.seed = j.at("seed").get<std::uint64_t>();
  t.bn_momentum = j.at("bn_momentum").get<double>();
}

json split_to_json(const SplitConfig& s) {
  return {{"trajectory", to_string(s.trajectory)},
          {"count", s.count},
          {"trajectory_seed", s.trajectory_seed},
          {"first_snapshot", s.first_snapshot}};
}

void split_from_json(const json& j, SplitConfig& s) {
  try {
    s.trajectory = parse_trajectory_kind(j.at("trajectory").get<std::string>());
  } catch (const Error& e) {
    fail(ErrorCode::Config, e.what());
  }
  s.count = j.at("count").get<int>();
  s.trajectory_seed = j.at("trajectory_seed").get<std::uint64_t>();
  s.first_snapshot = j.at("first_snapshot").get<std::uint64_t>();
}

json to_json(const RunConfig& c) {
  json aps = json::array();
  for (const auto& ap : c.sim.access_points) {
    aps.push_back({{"x", ap.position.x()}, {"y", ap.position.y()}, {"axis", ap.array_axis}});
  }
  json fusion = json::array();
  for (auto m : c.fusion) fusion.push_back(to_string(m));
  const auto& s = c.sim;
  json sim = {
      {"subcarriers", s.subcarriers},
      {"used_subcarriers", s.used_subcarriers},
      {"cp_length", s.cp_length},
      {"tx_antennas", s.tx_antennas},
      {"rx_antennas", s.rx_antennas},
      {"access_points", aps},
      {"array_spacing", s.array_spacing},
      {"paths_per_link", s.paths_per_link},
      {"snr_db", s.snr_db ? json(*s.snr_db) : json(nullptr)},
      {"impairments",
       {{"delay_range", s.impairments.delay_range},
        {"phase_range", s.impairments.phase_range},
        {"gain_range_db", s.impairments.gain_range_db}}},
      {"sample_rate_hz", s.sample_rate_hz},
      {"carrier_hz", s.carrier_hz},
      {"sync_offset", s.sync_offset},
      {"room",
       {{"x_min", s.room.x_min}, {"x_max", s.room.x_max}, {"y_min", s.room.y_min},
        {"y_max", s.room.y_max}}},
  };
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"sim", sim},
      {"train_set", split_to_json(c.train_set)},
      {"test_set", split_to_json(c.test_set)},
      {"features", {{"delay_method", c.delay_method == DelayMethod::Pinv ? "pinv" : "ifft"}}},
      {"grid", {{"side_count", c.grid.side_count}}},
      {"label",
       {{"epsilon", c.label.epsilon},
        {"max_iters", c.label.max_iters},
        {"tol", c.label.tol},
        {"method", c.label_method == LabelMethod::Rect ? "rect" : "general"}}},
      {"train", train_to_json(c.train)},
      {"hidden_layers", c.hidden_layers},
      {"finetune", train_to_json(c.finetune)},
      {"fusion", fusion},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = j.at("output_dir").get<std::string>();

  const json& s = j.at("sim");
  c.sim.subcarriers = s.at("subcarriers").get<int>();
  c.sim.used_subcarriers = s.at("used_subcarriers").get<std::vector<int>>();
  c.sim.cp_length = s.at("cp_length").get<int>();
  c.sim.tx_antennas = s.at("tx_antennas").get<int>();
  c.sim.rx_antennas = s.at("rx_antennas").get<int>();
  c.sim.access_points.clear();
  for (const auto& ap : s.at("access_points")) {
    require(ap.is_object(), ErrorCode::Config, "access_points entries must be objects");
    for (const auto& [key, _] : ap.items()) {
      require(key == "x" || key == "y" || key == "axis", ErrorCode::Config,
              "unknown key 'sim.access_points[]." + key + "'");
    }
    c.sim.access_points.push_back(
        {Eigen::Vector2d(ap.at("x").get<double>(), ap.at("y").get<double>()),
         ap.value("axis", 0.0)});
  }
  c.sim.array_spacing = s.at("array_spacing").get<double>();
  c.sim.paths_per_link = s.at("paths_per_link").get<int>();
  if (s.at("snr_db").is_null()) {
    c.sim.snr_db.reset();
  } else {
    c.sim.snr_db = s.at("snr_db").get<double>();
  }
  const json& imp = s.at("impairments");
  c.sim.impairments.delay_range = imp.at("delay_range").get<int>();
  c.sim.impairments.phase_range = imp.at("phase_range").get<double>();
  c.sim.impairments.gain_range_db = imp.at("gain_range_db").get<double>();
  c.sim.sample_rate_hz = s.at("sample_rate_hz").get<double>();
  c.sim.carrier_hz = s.at("carrier_hz").get<double>();
  c.sim.sync_offset = s.at("sync_offset").get<int>();
  const json& room = s.at("room");
  c.sim.room = {room.at("x_min").get<double>(), room.at("x_max").get<double>(),
                room.at("y_min").get<double>(), room.at("y_max").get<double>()};
  c.sim.seed = c.seed;

  split_from_json(j.at("train_set"), c.train_set);
  split_from_json(j.at("test_set"), c.test_set);

  const auto method = j.at("features").at("delay_method").get<std::string>();
  require(method == "pinv" || method == "ifft", ErrorCode::Config,
          "features.delay_method must be 'pinv' or 'ifft'");
  c.delay_method = method == "pinv" ? DelayMethod::Pinv : DelayMethod::Ifft;

  c.grid.side_count = j.at("grid").at("side_count").get<int>();

  const json& l = j.at("label");
  c.label.epsilon = l.at("epsilon").get<double>();
  c.label.max_iters = l.at("max_iters").get<int>();
  c.label.tol = l.at("tol").get<double>();
  const auto lm = l.at("method").get<std::string>();
  require(lm == "rect" || lm == "general", ErrorCode::Config,
          "label.method must be 'rect' or 'general'");
  c.label_method = lm == "rect" ? LabelMethod::Rect : LabelMethod::General;

  train_from_json(j.at("train"), c.train);
  c.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  train_from_json(j.at("finetune"), c.finetune);
  c.fusion.clear();
  for (const auto& m : j.at("fusion")) {
    try {
      c.fusion.push_back(parse_fusion_method(m.get<std::string>()));
    } catch (const Error& e) {
      fail(ErrorCode::Config, e.what());
    }
  }
  return c;
}

// Overlays user values onto the defaults; objects merge key by key, anything
// else replaces. Keys absent from the defaults are rejected.
void merge_strict(json& base, const json& user, const std::string& where) {
  require(user.is_object(), ErrorCode::Config,
          (where.empty() ? std::string("config") : "'" + where + "'") + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string name = where.empty() ? key : where + "." + key;
    require(base.contains(key), ErrorCode::Config, "unknown key '" + name + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, value, name);
    } else {
      slot = value;
    }
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Config, std::string("malformed config: ") + e.what());
  }
  json merged = to_json(RunConfig::defaults());
  merge_strict(merged, user, "");
  RunConfig cfg;
  try {
    cfg = from_json(merged);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("invalid config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Config, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string to_canonical_json(const RunConfig& cfg) { return to_json(cfg).dump(); }

}  // namespace csiloc
