#include "support/synthetic.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <stdexcept>

namespace layerprobe::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
  path_ = fs::temp_directory_path() /
          ("layerprobe_" + tag + "_" + std::to_string(++counter) + "_" + std::to_string(rng.next() % 1000000007ULL));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Manifest make_manifest(const std::array<std::size_t, 4>& severity_counts, int dim, std::vector<int> layers,
                       std::uint64_t seed, std::string dataset_id) {
  std::vector<int> severities;
  for (int c = 0; c < 4; ++c) severities.insert(severities.end(), severity_counts[static_cast<std::size_t>(c)], c);
  Rng rng(seed);
  rng.shuffle(std::span<int>(severities));

  Manifest manifest;
  manifest.dataset_id = std::move(dataset_id);
  manifest.dim = dim;
  manifest.layers = std::move(layers);
  manifest.items.reserve(severities.size());
  for (std::size_t i = 0; i < severities.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "utt%06zu", i);
    const int severity = severities[i];
    manifest.items.push_back(Item{id, "spk" + std::to_string(severity) + std::to_string(i % 3), severity == 0 ? 0 : 1, severity});
  }
  return manifest;
}

RowMatrixD gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  RowMatrixD m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

Dataset planted_dataset(const PlantedSpec& spec) {
  if (!std::has_single_bit(static_cast<unsigned>(spec.dim)) || spec.dim < 8)
    throw std::invalid_argument("planted dim must be a power of two >= 8");
  std::vector<int> layers;
  for (int l = 1; l <= spec.n_layers; ++l) layers.push_back(l);
  Manifest manifest = make_manifest(spec.severity_counts, spec.dim, layers, spec.seed);

  // Sylvester-Hadamard rows 1..4: any two differ in exactly dim/2 signs, so
  // |mu_a - mu_b| = 2 * step * sqrt(dim / 2).
  const double step = spec.separation / (2.0 * std::sqrt(spec.dim / 2.0));
  Rng rng(spec.seed ^ 0x5eedULL);
  std::vector<LayerMatrix> matrices;
  for (const int layer : layers) {
    RowMatrixD values = gaussian_matrix(static_cast<Eigen::Index>(manifest.items.size()), spec.dim, rng);
    if (layer == spec.planted_layer) {
      for (std::size_t i = 0; i < manifest.items.size(); ++i) {
        const unsigned row = static_cast<unsigned>(manifest.items[i].severity) + 1;
        for (int j = 0; j < spec.dim; ++j) {
          const bool negative = std::popcount(row & static_cast<unsigned>(j)) % 2 == 1;
          values(static_cast<Eigen::Index>(i), j) += negative ? -step : step;
        }
      }
    }
    matrices.push_back(LayerMatrix{layer, values.cast<float>()});
  }
  return Dataset::in_memory(std::move(manifest), std::move(matrices));
}

Dataset noise_mixed(const Dataset& base, const std::vector<double>& mix, std::uint64_t seed, std::string dataset_id) {
  Manifest manifest = base.manifest();
  manifest.dataset_id = std::move(dataset_id);
  if (mix.size() != manifest.layers.size()) throw std::invalid_argument("one mixing weight per layer required");
  Rng rng(seed);
  std::vector<LayerMatrix> matrices;
  for (std::size_t l = 0; l < manifest.layers.size(); ++l) {
    const RowMatrixD source = base.layer(manifest.layers[l])->values.cast<double>();
    const RowMatrixD noise = gaussian_matrix(source.rows(), source.cols(), rng);
    const double a = mix[l];
    const RowMatrixD mixed = std::sqrt(1.0 - a * a) * source + a * noise;
    matrices.push_back(LayerMatrix{manifest.layers[l], mixed.cast<float>()});
  }
  return Dataset::in_memory(std::move(manifest), std::move(matrices));
}

}  // namespace layerprobe::testing
