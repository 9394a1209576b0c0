#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csiloc/channel_sim.hpp"
#include "csiloc/fusion.hpp"
#include "csiloc/grid_map.hpp"
#include "csiloc/neural.hpp"

namespace csiloc {

inline constexpr std::uint16_t kFormatVersion = 1;

/// What a container holds; stored in the file header.
enum class FileKind : std::uint16_t {
  Dataset = 1,
  Model = 2,
  FusionWeights = 3,
  Maps = 4,
  MeanVariance = 5,
  Estimates = 6,
};

/// Tagged, checksummed section of a container file.
struct Section {
  std::string tag;  // exactly 4 ASCII characters
  std::vector<std::uint8_t> payload;
};

/**
 * Container layout (all integers little-endian):
 *   "CSIL" | u16 version | u16 kind | u32 section count
 *   per section: 4-byte tag | u64 payload length | payload | u32 CRC-32 of payload
 */
std::vector<std::uint8_t> encode_container(FileKind kind, const std::vector<Section>& sections);
std::vector<Section> decode_container(const std::vector<std::uint8_t>& bytes, FileKind expected);

void write_container(const std::filesystem::path& path, FileKind kind,
                     const std::vector<Section>& sections);
std::vector<Section> read_container(const std::filesystem::path& path, FileKind expected);

/// Row-per-sample feature matrix, stored transposed (one column per sample).
struct FeatureBlock {
  Eigen::MatrixXd values;
  /// Rows are tx_blocks independently normalized per-TX features.
  bool per_tx = false;
  int tx_blocks = 1;

  bool operator==(const FeatureBlock&) const = default;
};

struct Dataset {
  /// Canonical JSON text of the run configuration; may be empty.
  std::string config;
  std::optional<Grid> grid;
  /// CSI dimensions; recorded even when there are no samples.
  int subcarriers = 0;
  int rx = 0;
  int tx = 0;
  int dims = 2;
  /// CSI is stored as float32; read-back tensors hold the rounded values.
  std::vector<CsiMeasurement> samples;
  std::optional<FeatureBlock> features;
  /// K x N label maps, one column per sample.
  std::optional<Eigen::MatrixXd> labels;
};

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

/// Rounds every CSI entry through float32, as write_dataset does.
void round_csi_to_float(std::vector<CsiMeasurement>& samples);

/// Trained network plus the metadata needed to use it.
struct ModelFile {
  std::string config;
  Grid grid{Eigen::MatrixXd::Zero(2, 1)};
  MlpPositioner model;
};

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

void save_fusion_weights(const std::filesystem::path& path, const FusionWeights& weights);
FusionWeights load_fusion_weights(const std::filesystem::path& path);

/**
 * Fusion-stage input with B' probability maps per sample: the MAPS section
 * holds exactly K * B' float64 values per sample after a fixed 16-byte header.
 */
struct MapExchange {
  Grid grid{Eigen::MatrixXd::Zero(2, 1)};
  int links = 0;
  std::vector<std::uint64_t> snapshots;
  /// (links * K) x N, link-major within each column.
  Eigen::MatrixXd maps;
};

/**
 * Fusion-stage input for Gaussian conflation: the MVAR section holds exactly
 * 2 * D * B' float64 values per sample (per link: D means, D variances).
 */
struct MeanVarExchange {
  int links = 0;
  int dims = 2;
  std::vector<std::uint64_t> snapshots;
  /// (links * 2 * D) x N.
  Eigen::MatrixXd values;
};

void write_map_exchange(const std::filesystem::path& path, const MapExchange& x);
MapExchange read_map_exchange(const std::filesystem::path& path);
void write_meanvar_exchange(const std::filesystem::path& path, const MeanVarExchange& x);
MeanVarExchange read_meanvar_exchange(const std::filesystem::path& path);

/// Fixed bytes in front of the per-sample values of MAPS and MVAR payloads.
inline constexpr std::size_t kExchangeHeaderBytes = 16;

struct EstimateFile {
  std::string method;
  std::vector<std::uint64_t> snapshots;
  /// D x N.
  Eigen::MatrixXd positions;
};

void write_estimates(const std::filesystem::path& path, const EstimateFile& e);
EstimateFile read_estimates(const std::filesystem::path& path);

}  // namespace csiloc
