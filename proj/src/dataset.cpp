#include "layerprobe/dataset.hpp"

#include "layerprobe/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace layerprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'L', 'P', 'E', 'B'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::string cell(std::size_t row, std::size_t col) {
  return "(" + std::to_string(row) + "," + std::to_string(col) + ")";
}

std::string item_location(std::size_t index, const std::string& field = {}) {
  std::string loc = "items[" + std::to_string(index) + "]";
  if (!field.empty()) loc += "." + field;
  return loc;
}

template <typename T>
T required(const json& object, const char* key, const std::string& location) {
  if (!object.is_object()) throw ParseError(location + ": expected an object");
  const auto it = object.find(key);
  if (it == object.end()) throw ParseError(location + ": missing field '" + key + "'");
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!it->is_number_integer()) throw ParseError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ParseError("");
    }
    return it->get<T>();
  } catch (const std::exception&) {
    throw ParseError(location + "." + key + ": wrong type");
  }
}

const char* class_name(int severity) {
  static constexpr std::array<const char*, 4> names = {"typical", "mild", "moderate", "severe"};
  return names[static_cast<std::size_t>(severity)];
}

}  // namespace

std::vector<int> Manifest::detection_labels() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.detection);
  return out;
}

std::vector<int> Manifest::severity_labels() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.severity);
  return out;
}

bool ValidationReport::ok() const { return error_count() == 0; }

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [](const Issue& issue) {
    return issue.severity == IssueSeverity::error;
  }));
}

std::vector<Issue> check_manifest(const Manifest& manifest) {
  std::vector<Issue> issues;
  auto error = [&](std::string message, std::string location) {
    issues.push_back({IssueSeverity::error, std::move(message), std::move(location)});
  };

  if (manifest.dim < 1) error("dim must be >= 1, got " + std::to_string(manifest.dim), "dim");
  if (manifest.layers.empty()) error("layer list is empty", "layers");
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    if (manifest.layers[i] < 0) error("layer index must be non-negative", "layers[" + std::to_string(i) + "]");
    if (i > 0 && manifest.layers[i] <= manifest.layers[i - 1])
      error("layers must be strictly increasing", "layers[" + std::to_string(i) + "]");
  }
  if (manifest.items.empty()) error("item list is empty", "items");

  std::set<std::string> seen;
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    const Item& item = manifest.items[i];
    const std::string where = item_location(i) + " id '" + item.id + "'";
    if (item.id.empty()) error("empty item id", item_location(i, "id"));
    if (!seen.insert(item.id).second) error("duplicate item id", where);
    if (item.detection != 0 && item.detection != 1)
      error("detection must be 0 or 1, got " + std::to_string(item.detection), where);
    if (item.severity < 0 || item.severity >= kSeverityClasses)
      error("severity must be in 0..3, got " + std::to_string(item.severity), where);
    else if ((item.detection == 0) != (item.severity == 0))
      error("detection=" + std::to_string(item.detection) + " inconsistent with severity=" +
                std::to_string(item.severity),
            where);
  }
  return issues;
}

Manifest parse_manifest(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }

  Manifest manifest;
  manifest.dataset_id = required<std::string>(root, "dataset_id", "manifest");
  manifest.dim = required<int>(root, "dim", "manifest");

  const auto layers = root.find("layers");
  if (layers == root.end() || !layers->is_array()) throw ParseError("manifest: 'layers' must be an array");
  for (std::size_t i = 0; i < layers->size(); ++i) {
    if (!(*layers)[i].is_number_integer()) throw ParseError("manifest.layers[" + std::to_string(i) + "]: wrong type");
    manifest.layers.push_back((*layers)[i].get<int>());
  }

  const auto items = root.find("items");
  if (items == root.end() || !items->is_array()) throw ParseError("manifest: 'items' must be an array");
  manifest.items.reserve(items->size());
  for (std::size_t i = 0; i < items->size(); ++i) {
    const json& node = (*items)[i];
    const std::string loc = item_location(i);
    manifest.items.push_back(Item{required<std::string>(node, "id", loc), required<std::string>(node, "speaker", loc),
                                  required<int>(node, "detection", loc), required<int>(node, "severity", loc)});
  }

  const auto issues = check_manifest(manifest);
  if (!issues.empty()) throw InvariantError(issues.front().message, issues.front().location);
  return manifest;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str());
}

std::string manifest_to_json(const Manifest& manifest) {
  json items = json::array();
  for (const auto& item : manifest.items) {
    items.push_back({{"id", item.id}, {"speaker", item.speaker}, {"detection", item.detection}, {"severity", item.severity}});
  }
  const json root = {{"dataset_id", manifest.dataset_id}, {"dim", manifest.dim}, {"layers", manifest.layers}, {"items", items}};
  return root.dump(2) + "\n";
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_json(manifest);
  if (!out) throw IoError("write failed for " + path.string());
}

std::string layer_file_name(int layer) {
  char name[32];
  std::snprintf(name, sizeof name, "layer_%02d.bin", layer);
  return name;
}

LayerMatrix load_layer(const fs::path& path, const Manifest& manifest, int layer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open layer file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string file = path.filename().string();

  if (bytes.size() < kHeaderBytes) throw ParseError(file + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin(), [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; }))
    throw ParseError(file + ": bad magic, expected LPEB");
  if (const auto version = read_u16(&bytes[4]); version != kFormatVersion)
    throw ParseError(file + ": unsupported format version " + std::to_string(version));
  if (read_u16(&bytes[6]) != 0) throw ParseError(file + ": reserved header bytes must be zero");

  const std::uint32_t n_items = read_u32(&bytes[8]);
  const std::uint32_t dim = read_u32(&bytes[12]);
  if (n_items != manifest.items.size())
    throw InvariantError("header n_items=" + std::to_string(n_items) + " but manifest has " +
                             std::to_string(manifest.items.size()) + " items",
                         file);
  if (static_cast<int>(dim) != manifest.dim)
    throw InvariantError("header dim=" + std::to_string(dim) + " but manifest dim is " + std::to_string(manifest.dim), file);

  const std::size_t expected = kHeaderBytes + std::size_t{4} * n_items * dim;
  if (bytes.size() < expected)
    throw ParseError(file + ": truncated payload (" + std::to_string(bytes.size()) + " of " + std::to_string(expected) + " bytes)");
  if (bytes.size() > expected)
    throw ParseError(file + ": " + std::to_string(bytes.size() - expected) + " trailing bytes");

  LayerMatrix matrix;
  matrix.layer = layer;
  matrix.values.resize(n_items, dim);
  const unsigned char* payload = bytes.data() + kHeaderBytes;
  float* out = matrix.values.data();
  for (std::size_t i = 0; i < std::size_t{n_items} * dim; ++i) {
    const float value = std::bit_cast<float>(read_u32(payload + 4 * i));
    if (!std::isfinite(value)) throw InvariantError(file + ": non-finite value", cell(i / dim, i % dim));
    out[i] = value;
  }
  return matrix;
}

void write_layer(const LayerMatrix& matrix, const fs::path& path) {
  const std::size_t rows = matrix.n_items();
  const std::size_t cols = matrix.dim();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (!std::isfinite(matrix.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))))
        throw InvariantError("refusing to write non-finite value", cell(r, c));

  std::vector<unsigned char> bytes;
  bytes.reserve(kHeaderBytes + 4 * rows * cols);
  bytes.insert(bytes.end(), kMagic.begin(), kMagic.end());
  bytes.push_back(kFormatVersion & 0xff);
  bytes.push_back(kFormatVersion >> 8);
  bytes.push_back(0);
  bytes.push_back(0);
  put_u32(bytes, static_cast<std::uint32_t>(rows));
  put_u32(bytes, static_cast<std::uint32_t>(cols));
  const float* data = matrix.values.data();
  for (std::size_t i = 0; i < rows * cols; ++i) put_u32(bytes, std::bit_cast<std::uint32_t>(data[i]));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write layer file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ValidationReport validate_dataset(const Manifest& manifest, const fs::path& directory) {
  ValidationReport report;
  report.issues = check_manifest(manifest);

  std::array<std::size_t, kSeverityClasses> severity_counts{};
  for (const auto& item : manifest.items)
    if (item.severity >= 0 && item.severity < kSeverityClasses) ++severity_counts[static_cast<std::size_t>(item.severity)];
  for (int c = 0; c < kSeverityClasses; ++c) {
    if (severity_counts[static_cast<std::size_t>(c)] < 5)
      report.issues.push_back({IssueSeverity::warning,
                               std::string("severity class '") + class_name(c) + "' has " +
                                   std::to_string(severity_counts[static_cast<std::size_t>(c)]) +
                                   " items; 5-fold cross-validation needs at least 5",
                               "items"});
  }

  std::error_code ec;
  if (!fs::is_directory(directory, ec)) {
    report.issues.push_back({IssueSeverity::error, "dataset directory does not exist", directory.string()});
    return report;
  }

  std::set<std::string> expected_files;
  for (const int layer : manifest.layers) {
    const std::string name = layer_file_name(layer);
    expected_files.insert(name);
    const fs::path path = directory / name;
    const std::string location = "layer " + std::to_string(layer);
    if (!fs::exists(path, ec)) {
      report.issues.push_back({IssueSeverity::error, "missing layer file " + name, location});
      continue;
    }
    try {
      (void)load_layer(path, manifest, layer);
    } catch (const InvariantError& e) {
      report.issues.push_back({IssueSeverity::error, e.what(), e.location()});
    } catch (const std::exception& e) {
      report.issues.push_back({IssueSeverity::error, e.what(), location});
    }
  }

  for (const auto& entry : fs::directory_iterator(directory, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("layer_") && name.ends_with(".bin") && !expected_files.contains(name))
      report.issues.push_back({IssueSeverity::warning, "layer file not listed in manifest", name});
  }
  return report;
}

Dataset Dataset::open(const fs::path& directory, const fs::path& manifest_path) {
  Dataset dataset;
  dataset.manifest_ = std::make_shared<const Manifest>(load_manifest(manifest_path));
  dataset.directory_ = directory;
  return dataset;
}

Dataset Dataset::open(const fs::path& directory) { return open(directory, directory / "manifest.json"); }

Dataset Dataset::in_memory(Manifest manifest, std::vector<LayerMatrix> layers) {
  if (const auto issues = check_manifest(manifest); !issues.empty())
    throw InvariantError(issues.front().message, issues.front().location);
  Dataset dataset;
  for (auto& matrix : layers) {
    const std::string where = "layer " + std::to_string(matrix.layer);
    if (std::find(manifest.layers.begin(), manifest.layers.end(), matrix.layer) == manifest.layers.end())
      throw InvariantError("layer not listed in manifest", where);
    if (matrix.n_items() != manifest.items.size() || static_cast<int>(matrix.dim()) != manifest.dim)
      throw InvariantError("matrix geometry disagrees with manifest", where);
    if (!matrix.values.allFinite()) throw InvariantError("non-finite value", where);
    const int index = matrix.layer;
    dataset.resident_[index] = std::make_shared<const LayerMatrix>(std::move(matrix));
  }
  for (const int layer : manifest.layers)
    if (!dataset.resident_.contains(layer)) throw InvariantError("no matrix supplied", "layer " + std::to_string(layer));
  dataset.manifest_ = std::make_shared<const Manifest>(std::move(manifest));
  return dataset;
}

std::shared_ptr<const LayerMatrix> Dataset::layer(int index) const {
  if (const auto it = resident_.find(index); it != resident_.end()) return it->second;
  if (std::find(manifest_->layers.begin(), manifest_->layers.end(), index) == manifest_->layers.end())
    throw PreconditionError("layer " + std::to_string(index) + " is not in the manifest");
  return std::make_shared<const LayerMatrix>(load_layer(directory_ / layer_file_name(index), *manifest_, index));
}

void Dataset::save(const fs::path& directory) const {
  fs::create_directories(directory);
  for (const int index : manifest_->layers) write_layer(*layer(index), directory / layer_file_name(index));
  // Manifest last: its presence marks a complete dataset.
  write_manifest(*manifest_, directory / "manifest.json");
}

}  // namespace layerprobe
