#include "csiloc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "csiloc/error.hpp"

namespace csiloc {

using nlohmann::json;

int worker_count() {
  if (const char* env = std::getenv("CSILOC_WORKERS"); env != nullptr && *env != '\0') {
    int n = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, n);
    require(ec == std::errc() && ptr == end && n >= 1, ErrorCode::Config,
            std::string("CSILOC_WORKERS must be a positive integer, got '") + env + "'");
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    // Static contiguous partition: the result never depends on scheduling.
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    threads.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

InputSelector InputSelector::parse(const std::string& text) {
  if (text == "stacked") return {true, 0, -1};
  auto number = [&](std::string_view s) {
    int v = -1;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size() && v >= 0, ErrorCode::Config,
            "bad link '" + text + "', expected AP:TX, AP or stacked");
    return v;
  };
  const auto colon = text.find(':');
  if (colon == std::string::npos) return {false, number(text), -1};
  const std::string_view view(text);
  return {false, number(view.substr(0, colon)), number(view.substr(colon + 1))};
}

std::string InputSelector::to_string() const {
  if (stacked) return "stacked";
  return tx < 0 ? std::to_string(ap) : std::to_string(ap) + ":" + std::to_string(tx);
}

std::string link_label(int ap, int tx) {
  return "ap" + std::to_string(ap + 1) + "-tx" + std::to_string(tx + 1);
}

SelectedData select_inputs(const Dataset& ds, const InputSelector& sel) {
  require(ds.features.has_value(), ErrorCode::Io, "dataset has no features; run featurize first");
  const FeatureBlock& f = *ds.features;
  SelectedData out;
  std::vector<std::size_t> picks;

  if (!sel.stacked) {
    Eigen::Index offset = 0;
    Eigen::Index width = f.values.rows();
    if (sel.tx >= 0) {
      require(f.per_tx, ErrorCode::Config, "link " + sel.to_string() + " needs per-TX features");
      require(sel.tx < f.tx_blocks, ErrorCode::Config, "TX index out of range in " + sel.to_string());
      width = f.values.rows() / f.tx_blocks;
      offset = sel.tx * width;
    }
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      if (ds.samples[i].ap_index == sel.ap) picks.push_back(i);
    }
    require(!picks.empty(), ErrorCode::Io, "no samples for AP " + std::to_string(sel.ap));
    out.features.resize(width, static_cast<Eigen::Index>(picks.size()));
    for (std::size_t j = 0; j < picks.size(); ++j) {
      out.features.col(j) = f.values.col(picks[j]).segment(offset, width);
    }
  } else {
    int aps = 0;
    for (const auto& s : ds.samples) aps = std::max(aps, s.ap_index + 1);
    std::vector<std::uint64_t> order;
    std::map<std::uint64_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      auto& g = groups[ds.samples[i].timestamp];
      if (g.empty()) {
        order.push_back(ds.samples[i].timestamp);
        g.assign(aps, ds.samples.size());
      }
      g[ds.samples[i].ap_index] = i;
    }
    const Eigen::Index width = f.values.rows();
    out.features.resize(width * aps, static_cast<Eigen::Index>(order.size()));
    for (std::size_t j = 0; j < order.size(); ++j) {
      const auto& g = groups[order[j]];
      for (int b = 0; b < aps; ++b) {
        require(g[b] < ds.samples.size(), ErrorCode::Io,
                "snapshot " + std::to_string(order[j]) + " lacks AP " + std::to_string(b));
        out.features.col(j).segment(b * width, width) = f.values.col(g[b]);
      }
      picks.push_back(g[0]);
    }
  }

  out.positions.resize(ds.dims, static_cast<Eigen::Index>(picks.size()));
  for (std::size_t j = 0; j < picks.size(); ++j) {
    out.positions.col(j) = ds.samples[picks[j]].true_position;
    out.snapshots.push_back(ds.samples[picks[j]].timestamp);
  }
  if (ds.labels) {
    out.labels = Eigen::MatrixXd(ds.labels->rows(), static_cast<Eigen::Index>(picks.size()));
    for (std::size_t j = 0; j < picks.size(); ++j) out.labels->col(j) = ds.labels->col(picks[j]);
  }
  return out;
}

RunConfig dataset_config(const Dataset& ds) {
  require(!ds.config.empty(), ErrorCode::Io, "file carries no run configuration");
  return parse_run_config(ds.config);
}

Dataset simulate_split(const RunConfig& cfg, Split split) {
  cfg.validate();
  const SplitConfig& s = split == Split::Train ? cfg.train_set : cfg.test_set;
  const auto trajectory = make_trajectory(s.trajectory, cfg.sim.room, s.count, s.trajectory_seed);
  Dataset ds;
  ds.config = to_canonical_json(cfg);
  ds.subcarriers = cfg.sim.subcarriers;
  ds.rx = cfg.sim.rx_antennas;
  ds.tx = cfg.sim.tx_antennas;
  ds.dims = 2;
  ds.samples = synth_dataset(trajectory, cfg.sim, s.first_snapshot);
  round_csi_to_float(ds.samples);
  return ds;
}

void featurize(Dataset& ds, bool per_tx) {
  const RunConfig cfg = dataset_config(ds);
  const FeatureConfig fc = cfg.features();
  const int block = per_tx_feature_length(fc.taps, ds.rx);
  FeatureBlock f;
  f.per_tx = per_tx;
  f.tx_blocks = per_tx ? ds.tx : 1;
  f.values.resize(static_cast<Eigen::Index>(block) * ds.tx,
                  static_cast<Eigen::Index>(ds.samples.size()));
  // Build the shared transform once before the workers start.
  if (ds.subcarriers > 0) cached_delay_transform(ds.subcarriers, fc.used, fc.taps);
  parallel_for(ds.samples.size(), [&](std::size_t i) {
    const CsiTensor& h = ds.samples[i].h;
    if (per_tx) {
      const auto blocks = per_tx_feature_vectors(h, fc);
      for (std::size_t m = 0; m < blocks.size(); ++m) {
        f.values.col(i).segment(static_cast<Eigen::Index>(m) * block, block) = blocks[m];
      }
    } else {
      f.values.col(i) = feature_vector(h, fc);
    }
  });
  ds.features = std::move(f);
}

void label(Dataset& ds, std::optional<int> side_count) {
  RunConfig cfg = dataset_config(ds);
  if (side_count) {
    cfg.grid.side_count = *side_count;
    cfg.validate();
    ds.config = to_canonical_json(cfg);
  }
  const Grid g = cfg.grid.build(cfg.sim.room);
  Eigen::MatrixXd labels(g.count(), static_cast<Eigen::Index>(ds.samples.size()));
  parallel_for(ds.samples.size(), [&](std::size_t i) {
    const Eigen::VectorXd& x = ds.samples[i].true_position;
    labels.col(i) = cfg.label_method == LabelMethod::Rect
                        ? min_variance_pmf_rect(x, g).mass()
                        : min_variance_pmf(x, g, cfg.label).map.mass();
  });
  ds.grid = g;
  ds.labels = std::move(labels);
}

namespace {

std::uint64_t selector_seed(const RunConfig& cfg, const InputSelector& sel) {
  const std::uint64_t slot = sel.stacked ? 0xffffu : static_cast<std::uint64_t>(sel.ap) * 256 + (sel.tx + 1);
  return cfg.train.seed * 1000003u + slot;
}

InputSelector model_input(const ModelFile& mf) {
  try {
    return InputSelector::parse(json::parse(mf.config).at("input").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("model metadata is malformed: ") + e.what());
  }
}

RunConfig model_run_config(const ModelFile& mf) {
  try {
    return parse_run_config(json::parse(mf.config).at("run").dump());
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("model metadata is malformed: ") + e.what());
  }
}

std::vector<ProbabilityMap> maps_of(const MapExchange& x, Eigen::Index u) {
  const Eigen::Index k = x.grid.count();
  std::vector<ProbabilityMap> maps;
  maps.reserve(x.links);
  for (int b = 0; b < x.links; ++b) maps.emplace_back(x.maps.col(u).segment(b * k, k));
  return maps;
}

}  // namespace

ModelFile train_model(const Dataset& ds, const InputSelector& sel) {
  const RunConfig cfg = dataset_config(ds);
  require(ds.grid.has_value() && ds.labels.has_value(), ErrorCode::Io,
          "dataset has no labels; run label first");
  const SelectedData data = select_inputs(ds, sel);

  std::vector<int> sizes{static_cast<int>(data.features.rows())};
  sizes.insert(sizes.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  sizes.push_back(ds.grid->count());
  const std::uint64_t seed = selector_seed(cfg, sel);

  ModelFile mf;
  mf.grid = *ds.grid;
  mf.model = MlpPositioner::init(sizes, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  train(mf.model, data.features, *data.labels, tc);
  mf.config = json{{"input", sel.to_string()}, {"run", json::parse(ds.config)}}.dump();
  return mf;
}

MapExchange link_maps(const std::vector<ModelFile>& models, const Dataset& ds) {
  require(!models.empty(), ErrorCode::InvalidArgument, "at least one model is required");
  MapExchange x{models.front().grid, static_cast<int>(models.size()), {}, {}};
  const Eigen::Index k = x.grid.count();
  for (std::size_t b = 0; b < models.size(); ++b) {
    require(models[b].grid == x.grid, ErrorCode::Io, "models were trained on different grids");
    const SelectedData data = select_inputs(ds, model_input(models[b]));
    if (b == 0) {
      x.snapshots = data.snapshots;
      x.maps.resize(k * x.links, static_cast<Eigen::Index>(data.snapshots.size()));
    }
    require(data.snapshots == x.snapshots, ErrorCode::Io,
            "models see different snapshots; fusion needs aligned links");
    MlpPositioner model = models[b].model;
    model.set_mode(Mode::Infer);
    x.maps.middleRows(static_cast<Eigen::Index>(b) * k, k) = model.forward(data.features);
  }
  return x;
}

MeanVarExchange mean_variance(const MapExchange& maps) {
  const int d = maps.grid.dims();
  MeanVarExchange mv{maps.links, d, maps.snapshots, {}};
  mv.values.resize(2 * d * maps.links, maps.maps.cols());
  parallel_for(static_cast<std::size_t>(maps.maps.cols()), [&](std::size_t u) {
    const auto per_link = maps_of(maps, static_cast<Eigen::Index>(u));
    for (int b = 0; b < maps.links; ++b) {
      const PositionEstimate e = estimate_from_map(per_link[b], maps.grid);
      mv.values.col(u).segment(2 * d * b, d) = e.mean;
      mv.values.col(u).segment(2 * d * b + d, d) = e.diag_cov;
    }
  });
  return mv;
}

FusionWeights finetune_fusion(const std::vector<ModelFile>& models, const Dataset& train_set) {
  require(models.size() >= 2, ErrorCode::InvalidArgument, "fusion fine-tuning needs >= 2 models");
  const RunConfig cfg = model_run_config(models.front());
  const MapExchange x = link_maps(models, train_set);
  const SelectedData first = select_inputs(train_set, model_input(models.front()));
  return fusion_finetune_maps(x.maps, first.positions, x.grid, x.links, cfg.finetune);
}

EstimateFile fuse_maps(const MapExchange& x, FusionMethod method, const FusionWeights* weights) {
  if (method == FusionMethod::GaussianConflation) return fuse_gaussian(mean_variance(x));
  EstimateFile est{method == FusionMethod::None ? "single" : to_string(method), x.snapshots, {}};
  est.positions.resize(x.grid.dims(), x.maps.cols());
  if (method == FusionMethod::None) {
    require(x.links == 1, ErrorCode::Config, "fusion 'none' needs exactly one model");
  }
  if (method == FusionMethod::Nn) {
    require(weights != nullptr, ErrorCode::Config, "nn fusion needs trained fusion weights");
    require(weights->links == x.links, ErrorCode::DimensionMismatch,
            "fusion weights were trained for a different number of links");
  }
  parallel_for(static_cast<std::size_t>(x.maps.cols()), [&](std::size_t u) {
    const auto maps = maps_of(x, static_cast<Eigen::Index>(u));
    Eigen::VectorXd pos;
    switch (method) {
      case FusionMethod::None: pos = expected_location(maps.front(), x.grid); break;
      case FusionMethod::Average: pos = fuse_average(maps, x.grid); break;
      case FusionMethod::ProbConflation:
        pos = expected_location(conflate_probability(maps), x.grid);
        break;
      case FusionMethod::Nn: pos = fuse_nn(*weights, maps); break;
      case FusionMethod::GaussianConflation: break;
    }
    est.positions.col(u) = pos;
  });
  return est;
}

EstimateFile fuse_gaussian(const MeanVarExchange& mv) {
  const int d = mv.dims;
  EstimateFile est{to_string(FusionMethod::GaussianConflation), mv.snapshots, {}};
  est.positions.resize(d, mv.values.cols());
  parallel_for(static_cast<std::size_t>(mv.values.cols()), [&](std::size_t u) {
    std::vector<PositionEstimate> per_link;
    for (int b = 0; b < mv.links; ++b) {
      per_link.push_back({mv.values.col(u).segment(2 * d * b, d),
                          mv.values.col(u).segment(2 * d * b + d, d)});
    }
    est.positions.col(u) = conflate_gaussian(per_link).mean;
  });
  return est;
}

EvalReport evaluate_estimates(const EstimateFile& est, const Dataset& truth) {
  std::map<std::uint64_t, const Eigen::VectorXd*> by_snapshot;
  for (const auto& s : truth.samples) by_snapshot.emplace(s.timestamp, &s.true_position);
  Eigen::MatrixXd truths(est.positions.rows(), est.positions.cols());
  for (std::size_t u = 0; u < est.snapshots.size(); ++u) {
    const auto it = by_snapshot.find(est.snapshots[u]);
    require(it != by_snapshot.end(), ErrorCode::Io,
            "no ground truth for snapshot " + std::to_string(est.snapshots[u]));
    require(it->second->size() == truths.rows(), ErrorCode::DimensionMismatch,
            "estimate and truth dimensions differ");
    truths.col(u) = *it->second;
  }
  return evaluate(est.positions, truths, est.method);
}

void stage_simulate(const RunConfig& cfg, Split split, const fs::path& out) {
  write_dataset(out, simulate_split(cfg, split));
}

void stage_featurize(const fs::path& in, const fs::path& out, bool per_tx) {
  Dataset ds = read_dataset(in);
  featurize(ds, per_tx);
  write_dataset(out, ds);
}

void stage_label(const fs::path& in, const fs::path& out, std::optional<int> side_count) {
  Dataset ds = read_dataset(in);
  label(ds, side_count);
  write_dataset(out, ds);
}

void stage_train(const fs::path& in, const fs::path& out, const InputSelector& sel) {
  save_model(out, train_model(read_dataset(in), sel));
}

namespace {

std::vector<ModelFile> load_models(const std::vector<fs::path>& paths) {
  std::vector<ModelFile> models;
  for (const auto& p : paths) models.push_back(load_model(p));
  return models;
}

}  // namespace

void stage_finetune(const std::vector<fs::path>& models, const fs::path& train_set,
                    const fs::path& out) {
  save_fusion_weights(out, finetune_fusion(load_models(models), read_dataset(train_set)));
}

void stage_exchange(const std::vector<fs::path>& models, const fs::path& test_set,
                    FusionMethod method, const fs::path& out) {
  const MapExchange x = link_maps(load_models(models), read_dataset(test_set));
  if (method == FusionMethod::GaussianConflation) {
    write_meanvar_exchange(out, mean_variance(x));
  } else {
    write_map_exchange(out, x);
  }
}

void stage_fuse(const fs::path& exchange, FusionMethod method,
                const std::optional<fs::path>& weights, const fs::path& out) {
  if (method == FusionMethod::GaussianConflation) {
    write_estimates(out, fuse_gaussian(read_meanvar_exchange(exchange)));
    return;
  }
  std::optional<FusionWeights> w;
  if (weights) w = load_fusion_weights(*weights);
  write_estimates(out, fuse_maps(read_map_exchange(exchange), method, w ? &*w : nullptr));
}

EvalReport stage_eval(const fs::path& estimates, const fs::path& truth) {
  return evaluate_estimates(read_estimates(estimates), read_dataset(truth));
}

ReproResult run_repro(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  auto note = [&](const std::string& msg) {
    if (!log) return;
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%7.1fs] ", t);
    *log << stamp << msg << std::endl;
  };

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const fs::path train_raw = dir / "train_raw.csil";
  const fs::path test_raw = dir / "test_raw.csil";
  const fs::path train_feat = dir / "train_features.csil";
  const fs::path test_feat = dir / "test_features.csil";
  const fs::path train_set = dir / "train.csil";

  stage_simulate(cfg, Split::Train, train_raw);
  stage_simulate(cfg, Split::Test, test_raw);
  note("simulated " + std::to_string(cfg.train_set.count) + " training and " +
       std::to_string(cfg.test_set.count) + " test positions");
  stage_featurize(train_raw, train_feat, true);
  stage_featurize(test_raw, test_feat, true);
  stage_label(train_feat, train_set, std::nullopt);
  note("features and labels ready (grid " + std::to_string(cfg.grid.side_count) + "x" +
       std::to_string(cfg.grid.side_count) + ")");

  ReproResult result;
  auto evaluate_single = [&](const fs::path& model, const std::string& name) {
    const fs::path exchange = dir / ("maps_" + name + ".csil");
    const fs::path estimates = dir / ("estimates_" + name + ".csil");
    stage_exchange({model}, test_feat, FusionMethod::None, exchange);
    stage_fuse(exchange, FusionMethod::None, std::nullopt, estimates);
    EvalReport r = stage_eval(estimates, test_raw);
    r.method = name;
    note(name + ": test MDE " + std::to_string(r.mde) + " m");
    result.reports.push_back(std::move(r));
  };

  std::vector<fs::path> link_models;
  std::vector<std::string> names;
  std::vector<InputSelector> selectors;
  for (int ap = 0; ap < cfg.sim.ap_count(); ++ap) {
    for (int tx = 0; tx < cfg.sim.tx_antennas; ++tx) {
      names.push_back(link_label(ap, tx));
      link_models.push_back(dir / ("model_" + names.back() + ".csil"));
      selectors.push_back({false, ap, tx});
    }
  }
  names.push_back(kStackedLabel);
  selectors.push_back({true, 0, -1});
  std::vector<fs::path> all_models = link_models;
  all_models.push_back(dir / "model_stacked.csil");
  // Independent seeds per model, so concurrent training stays deterministic.
  parallel_for(all_models.size(),
               [&](std::size_t i) { stage_train(train_set, all_models[i], selectors[i]); });
  note("trained " + std::to_string(all_models.size()) + " models");
  for (std::size_t i = 0; i < all_models.size(); ++i) evaluate_single(all_models[i], names[i]);

  const bool multi = link_models.size() >= 2;
  const fs::path weights = dir / "fusion_weights.csil";
  const bool need_nn =
      std::find(cfg.fusion.begin(), cfg.fusion.end(), FusionMethod::Nn) != cfg.fusion.end();
  if (multi && need_nn) {
    stage_finetune(link_models, train_set, weights);
    note("fusion layer fine-tuned");
  }
  for (FusionMethod m : cfg.fusion) {
    if (m == FusionMethod::None || !multi) continue;
    const std::string name = to_string(m);
    const fs::path exchange = dir / ("exchange_" + name + ".csil");
    const fs::path estimates = dir / ("estimates_" + name + ".csil");
    stage_exchange(link_models, test_feat, m, exchange);
    stage_fuse(exchange, m, m == FusionMethod::Nn ? std::optional<fs::path>(weights) : std::nullopt,
               estimates);
    EvalReport r = stage_eval(estimates, test_raw);
    note(name + ": test MDE " + std::to_string(r.mde) + " m");
    result.reports.push_back(std::move(r));
    result.exchange_files.emplace_back(name, exchange);
  }

  emit_report(dir / "report.csv", result.reports, ReportFormat::Csv);
  emit_report(dir / "report.json", result.reports, ReportFormat::Json);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (log) *log << format_table(result.reports);
  note("done");
  return result;
}

}  // namespace csiloc
