#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csiloc/config.hpp"
#include "csiloc/dataset_io.hpp"
#include "csiloc/metrics.hpp"

namespace csiloc {

namespace fs = std::filesystem;

/// Worker count from CSILOC_WORKERS, else the hardware concurrency (>= 1).
int worker_count();

/// Runs fn(i) for i in [0, n) on worker_count() threads; rethrows the first error.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Which features a model consumes: one (AP, TX) link, one AP's whole row, or
/// every AP's row concatenated per snapshot.
struct InputSelector {
  bool stacked = false;
  int ap = 0;
  /// TX block within a per-TX feature row; -1 takes the whole row.
  int tx = -1;

  static InputSelector parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const InputSelector&) const = default;
};

/// Samples selected from a dataset for one input, in dataset order.
struct SelectedData {
  Eigen::MatrixXd features;
  Eigen::MatrixXd positions;
  std::vector<std::uint64_t> snapshots;
  /// Present when the dataset has labels.
  std::optional<Eigen::MatrixXd> labels;
};

SelectedData select_inputs(const Dataset& ds, const InputSelector& sel);

enum class Split { Train, Test };

/// Simulated split with CSI only; config holds the canonical run config.
Dataset simulate_split(const RunConfig& cfg, Split split);

/// Adds features computed from the stored CSI.
void featurize(Dataset& ds, bool per_tx);

/// Adds labels on the configured grid; side_count overrides the config when set.
void label(Dataset& ds, std::optional<int> side_count = std::nullopt);

/// Run configuration stored in a dataset or model file.
RunConfig dataset_config(const Dataset& ds);

ModelFile train_model(const Dataset& ds, const InputSelector& sel);

/// Stacked maps (links * K) x N from frozen models, with snapshot ids checked to agree.
MapExchange link_maps(const std::vector<ModelFile>& models, const Dataset& ds);

/// Per link: D means then D diagonal variances, computed from the maps.
MeanVarExchange mean_variance(const MapExchange& maps);

FusionWeights finetune_fusion(const std::vector<ModelFile>& models, const Dataset& train_set);

EstimateFile fuse_maps(const MapExchange& maps, FusionMethod method,
                       const FusionWeights* weights = nullptr);
EstimateFile fuse_gaussian(const MeanVarExchange& mv);

/// Truth positions looked up by snapshot id.
EvalReport evaluate_estimates(const EstimateFile& est, const Dataset& truth);

// File-level stages used by the CLI; each writes exactly its declared output.
void stage_simulate(const RunConfig& cfg, Split split, const fs::path& out);
void stage_featurize(const fs::path& in, const fs::path& out, bool per_tx);
void stage_label(const fs::path& in, const fs::path& out, std::optional<int> side_count);
void stage_train(const fs::path& in, const fs::path& out, const InputSelector& sel);
void stage_finetune(const std::vector<fs::path>& models, const fs::path& train_set,
                    const fs::path& out);
/// Writes the fusion-stage input: a MAPS file, or an MVAR file for Gaussian conflation.
void stage_exchange(const std::vector<fs::path>& models, const fs::path& test_set,
                    FusionMethod method, const fs::path& out);
/// Reads only the exchange file (plus weights for nn fusion) and writes estimates.
void stage_fuse(const fs::path& exchange, FusionMethod method,
                const std::optional<fs::path>& weights, const fs::path& out);
EvalReport stage_eval(const fs::path& estimates, const fs::path& truth);

struct ReproResult {
  /// Per-link rows, then the stacked model, then one row per fusion method.
  std::vector<EvalReport> reports;
  /// Exchange files written for each fusion method, keyed by method name.
  std::vector<std::pair<std::string, fs::path>> exchange_files;
  double seconds = 0.0;
};

/// Full synthetic experiment through the file stages under cfg.output_dir.
ReproResult run_repro(const RunConfig& cfg, std::ostream* log = nullptr);

/// Method labels used in reports.
std::string link_label(int ap, int tx);
inline constexpr const char* kStackedLabel = "stacked";

}  // namespace csiloc
