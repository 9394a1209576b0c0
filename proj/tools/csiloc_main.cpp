// Command-line driver for the positioning pipeline. Every stage reads and
// writes csiloc container files; see README.md for the byte layout.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csiloc/error.hpp"
#include "csiloc/pipeline.hpp"

namespace {

using namespace csiloc;

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int report_error(std::string_view code, int exit_code, const std::string& message) {
  std::cerr << "csiloc: error code=" << code << " exit=" << exit_code << " message=\""
            << one_line(message) << "\"\n";
  return exit_code;
}

RunConfig config_or_defaults(const std::string& path) {
  return path.empty() ? RunConfig::defaults() : load_run_config(path);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  fail(ErrorCode::Config, "split must be 'train' or 'test'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSI fingerprinting positioning with probability-map fusion"};
  app.require_subcommand(1);

  std::string config_path;
  std::string split = "train";
  std::string out;
  auto* simulate = app.add_subcommand("simulate", "Simulate a train or test split");
  simulate->add_option("-c,--config", config_path, "JSON run configuration");
  simulate->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  simulate->add_option("-o,--out", out, "Output dataset")->required();

  std::string in;
  bool per_tx = false;
  auto* featurize = app.add_subcommand("featurize", "Compute CSI features");
  featurize->add_option("input", in, "Input dataset")->required();
  featurize->add_option("-o,--out", out, "Output dataset")->required();
  featurize->add_flag("--per-tx", per_tx, "One independently normalized block per TX antenna");

  std::optional<int> side;
  auto* label = app.add_subcommand("label", "Attach minimum-variance probability-map labels");
  label->add_option("input", in, "Featurized dataset")->required();
  label->add_option("-o,--out", out, "Output dataset")->required();
  label->add_option("--side", side, "Grid side count (overrides the config)");

  std::string link;
  bool stacked = false;
  auto* train = app.add_subcommand("train", "Train one positioning network");
  train->add_option("input", in, "Labeled dataset")->required();
  train->add_option("-o,--out", out, "Output model")->required();
  auto* link_opt = train->add_option("--link", link, "AP:TX (0-based) or AP for a whole row");
  auto* stacked_opt = train->add_flag("--stacked", stacked, "Concatenate every link's features");
  link_opt->excludes(stacked_opt);

  std::vector<std::string> models;
  std::string dataset;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune the NN fusion layer");
  finetune->add_option("models", models, "Per-link models")->required();
  finetune->add_option("--train", dataset, "Labeled training dataset")->required();
  finetune->add_option("-o,--out", out, "Output fusion weights")->required();

  std::string fusion = "none";
  std::string weights;
  std::string exchange;
  auto* fuse = app.add_subcommand("fuse", "Estimate positions from one or more models");
  fuse->add_option("models", models, "Models, one per link")->required();
  fuse->add_option("--test", dataset, "Featurized test dataset")->required();
  fuse->add_option("--fusion", fusion, "none, average, prob-conflation, gaussian-conflation, nn")
      ->check(CLI::IsMember({"none", "average", "prob-conflation", "gaussian-conflation", "nn"}));
  fuse->add_option("--weights", weights, "Fusion weights for --fusion nn");
  fuse->add_option("--exchange", exchange, "Fusion-stage input file (default: <out>.exchange)");
  fuse->add_option("-o,--out", out, "Output estimates")->required();

  std::string truth;
  std::string format = "csv";
  auto* eval = app.add_subcommand("eval", "Score estimates against ground truth");
  eval->add_option("estimates", in, "Estimates file")->required();
  eval->add_option("--truth", truth, "Dataset with true positions")->required();
  eval->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  eval->add_option("-o,--out", out, "Report file (default: stdout)");

  std::string out_dir;
  auto* repro = app.add_subcommand("repro", "Run the full synthetic experiment");
  repro->add_option("-c,--config", config_path, "JSON run configuration");
  repro->add_option("--out-dir", out_dir, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    return report_error("usage", 2, e.what());
  }

  try {
    if (*simulate) {
      stage_simulate(config_or_defaults(config_path), parse_split(split), out);
    } else if (*featurize) {
      stage_featurize(in, out, per_tx);
    } else if (*label) {
      stage_label(in, out, side);
    } else if (*train) {
      require(stacked || !link.empty(), ErrorCode::Config, "train needs --link or --stacked");
      stage_train(in, out, stacked ? InputSelector{true, 0, -1} : InputSelector::parse(link));
    } else if (*finetune) {
      stage_finetune({models.begin(), models.end()}, dataset, out);
    } else if (*fuse) {
      const FusionMethod method = parse_fusion_method(fusion);
      const fs::path x = exchange.empty() ? fs::path(out + ".exchange") : fs::path(exchange);
      stage_exchange({models.begin(), models.end()}, dataset, method, x);
      stage_fuse(x, method, weights.empty() ? std::nullopt : std::optional<fs::path>(weights), out);
    } else if (*eval) {
      const EvalReport r = stage_eval(in, truth);
      const ReportFormat f = parse_report_format(format);
      if (out.empty()) {
        std::cout << format_reports({r}, f);
      } else {
        emit_report(out, {r}, f);
      }
    } else if (*repro) {
      RunConfig cfg = config_or_defaults(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const ReproResult result = run_repro(cfg, &std::cout);
      std::cout << "report: " << (fs::path(cfg.output_dir) / "report.csv").string() << "\n";
      std::cout << "elapsed: " << result.seconds << " s\n";
    }
  } catch (const Error& e) {
    return report_error(to_string(e.code()), exit_code_for(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error("io", 3, e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 4, e.what());
  }
  return 0;
}
