#pragma once

// On-disk embedding dataset: a JSON manifest holding labels and geometry,
// plus one binary matrix file per encoder layer.
//
// Layer file layout (`layer_NN.bin`, all integers little-endian):
//
//   offset  size  field
//   0       4     magic "LPEB"
//   4       2     format version (u16) = 1
//   6       2     reserved, zero
//   8       4     n_items (u32)
//   12      4     dim (u32)
//   16      4*n*d float32 payload, row-major, one row per manifest item
//
// No trailing bytes are permitted.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace layerprobe {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDetectionClasses = 2;
inline constexpr int kSeverityClasses = 4;

struct Item {
  std::string id;
  std::string speaker;
  int detection = 0;  // 0 typical, 1 dysarthric
  int severity = 0;   // 0 typical, 1 mild, 2 moderate, 3 severe

  bool operator==(const Item&) const = default;
};

struct Manifest {
  std::string dataset_id;
  int dim = 0;
  std::vector<int> layers;
  std::vector<Item> items;

  std::vector<int> detection_labels() const;
  std::vector<int> severity_labels() const;

  bool operator==(const Manifest&) const = default;
};

struct LayerMatrix {
  int layer = 0;
  RowMatrixF values;

  std::size_t n_items() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

enum class IssueSeverity { error, warning };

struct Issue {
  IssueSeverity severity = IssueSeverity::error;
  std::string message;
  std::string location;
};

struct ValidationReport {
  std::vector<Issue> issues;

  bool ok() const;
  std::size_t error_count() const;
};

/// Invariant issues of an in-memory manifest; empty when the manifest is valid.
std::vector<Issue> check_manifest(const Manifest& manifest);

/// Parses manifest JSON text. Throws ParseError or InvariantError.
Manifest parse_manifest(const std::string& text);
Manifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const Manifest& manifest);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// `layer_07.bin` for layer 7.
std::string layer_file_name(int layer);

/// Reads a layer file and checks it against the manifest geometry.
/// Throws ParseError (magic, version, truncation, trailing bytes),
/// InvariantError (geometry mismatch, non-finite cell) or IoError.
LayerMatrix load_layer(const std::filesystem::path& path, const Manifest& manifest, int layer = 0);

/// Rejects non-finite values before anything is written.
void write_layer(const LayerMatrix& matrix, const std::filesystem::path& path);

/// Never throws on bad data; every problem becomes an issue.
ValidationReport validate_dataset(const Manifest& manifest, const std::filesystem::path& directory);

/// A manifest together with its layer matrices, loaded on demand from disk or
/// held in memory. Loaded matrices are immutable and shared read-only.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& directory, const std::filesystem::path& manifest_path);
  static Dataset open(const std::filesystem::path& directory);
  static Dataset in_memory(Manifest manifest, std::vector<LayerMatrix> layers);

  const Manifest& manifest() const { return *manifest_; }
  std::shared_ptr<const LayerMatrix> layer(int index) const;

  /// Writes manifest.json and one file per layer into `directory`.
  void save(const std::filesystem::path& directory) const;

 private:
  std::shared_ptr<const Manifest> manifest_;
  std::filesystem::path directory_;
  std::map<int, std::shared_ptr<const LayerMatrix>> resident_;
};

}  // namespace layerprobe
