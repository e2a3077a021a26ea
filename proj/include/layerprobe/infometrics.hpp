#pragma once

// Classifier-free informativeness measures over an N x D embedding matrix.
//
// Both k-NN mutual information estimators work one embedding dimension at a
// time and report the arithmetic mean over dimensions as the aggregate.
// Before neighbour search each value gets a deterministic jitter of amplitude
// 1e-10 * (dimension std, or 1 if the dimension is constant) so ties vanish.
// The jitter of item i in dimension j is keyed_normal(seed, key_i, j), where
// key_i defaults to i; pass item keys (for example hashed item ids) to make
// the jitter travel with the items under reordering.

#include "layerprobe/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace layerprobe {

struct MiResult {
  std::vector<double> per_dimension;  // nats, clamped at 0
  double aggregate = 0.0;             // mean of per_dimension
  int k = 3;
  std::uint64_t seed = 0;
};

struct SilhouetteResult {
  double score = 0.0;
  std::size_t n_used = 0;
  std::optional<std::uint64_t> subsample_seed;
};

/// psi(x) for x > 0: recurrence up to x >= 6, then the asymptotic series.
double digamma(double x);

/// Discrete-target estimator for one dimension, unclamped:
///   psi(N) - <psi(N_c)> + psi(k) - <psi(m_i)>
/// where d_i is the distance to the k-th nearest same-class neighbour and m_i
/// counts all points (self included) strictly closer than d_i.
double mi_discrete_raw(std::span<const double> values, std::span<const int> labels, int k);

/// KSG variant 1 for one pair of columns, unclamped:
///   psi(k) + psi(N) - <psi(n_x + 1) + psi(n_y + 1)>
/// with max-norm joint neighbourhoods and strict marginal counts.
double mi_continuous_raw(std::span<const double> x, std::span<const double> y, int k);

MiResult mi_discrete(const RowMatrixD& features, std::span<const int> labels, int k = 3, std::uint64_t seed = 0,
                     std::span<const std::uint64_t> item_keys = {});

/// Column j of x against column j of y. Columns are scaled to unit variance
/// before jitter and neighbour search.
MiResult mi_continuous(const RowMatrixD& x, const RowMatrixD& y, int k = 3, std::uint64_t seed = 0,
                       std::span<const std::uint64_t> item_keys = {});

/// Mean silhouette with Euclidean distances. Singleton clusters and points
/// with a = b = 0 score 0. With `max_points` below N, a seeded stratified
/// subsample of that size is scored instead.
SilhouetteResult silhouette(const RowMatrixD& features, std::span<const int> labels,
                            std::optional<std::size_t> max_points = std::nullopt, std::uint64_t seed = 0);

/// Per-item silhouette values s(i) over all rows.
std::vector<double> silhouette_samples(const RowMatrixD& features, std::span<const int> labels);

/// "dimension,value" header, then one row per dimension.
void write_mi_csv(const MiResult& result, std::ostream& out);
void write_mi_csv(const MiResult& result, const std::filesystem::path& path);

}  // namespace layerprobe
