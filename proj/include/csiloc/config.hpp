#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csiloc/channel_sim.hpp"
#include "csiloc/csi_features.hpp"
#include "csiloc/fusion.hpp"
#include "csiloc/label_solver.hpp"
#include "csiloc/neural.hpp"

namespace csiloc {

struct SplitConfig {
  TrajectoryKind trajectory = TrajectoryKind::Lawnmower;
  int count = 2000;
  std::uint64_t trajectory_seed = 1;
  /// Snapshot id of the first position; keeps packet draws of different splits apart.
  std::uint64_t first_snapshot = 0;
};

struct GridConfig {
  int side_count = 22;
  /// Rectangular grid spanning the room.
  Grid build(const Room& room) const;
};

enum class LabelMethod { Rect, General };

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  SimConfig sim = SimConfig::desk_scale();
  SplitConfig train_set;
  SplitConfig test_set{TrajectoryKind::RandomWalk, 400, 2, 1u << 20};
  DelayMethod delay_method = DelayMethod::Pinv;
  GridConfig grid;
  LabelConfig label;
  LabelMethod label_method = LabelMethod::Rect;
  TrainConfig train;
  std::vector<int> hidden_layers{512, 256, 128, 64};
  TrainConfig finetune;
  std::vector<FusionMethod> fusion{FusionMethod::Average, FusionMethod::ProbConflation,
                                   FusionMethod::GaussianConflation, FusionMethod::Nn};

  /// Desk-scale experiment defaults.
  static RunConfig defaults();

  FeatureConfig features() const { return {sim.used_subcarriers, sim.cp_length, delay_method}; }

  /// Throws Config on any violated invariant.
  void validate() const;
};

/// Parses a JSON configuration over the defaults. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON: every field present, keys sorted, no whitespace.
std::string to_canonical_json(const RunConfig& cfg);

}  // namespace csiloc
