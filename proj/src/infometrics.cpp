#include "layerprobe/infometrics.hpp"

#include "layerprobe/error.hpp"
#include "layerprobe/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace layerprobe {

double digamma(double x) {
  if (!(x > 0.0)) throw PreconditionError("digamma requires x > 0");
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli tail: 1/12, 1/120, 1/252, 1/240, 1/132, 691/32760, 1/12.
  const double tail =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
  return shift + std::log(x) - 0.5 * inv - tail;
}

namespace {

// psi(n) for n = 0..max_n; entry 0 is unused.
std::vector<double> integer_digamma(std::size_t max_n) {
  std::vector<double> table(max_n + 1, 0.0);
  for (std::size_t n = 1; n <= max_n; ++n) table[n] = digamma(static_cast<double>(n));
  return table;
}

// Number of entries v of `sorted` with |v - centre| < radius, or with
// v == centre when radius is zero. The matching entries are contiguous.
std::size_t count_within(std::span<const double> sorted, double centre, double radius) {
  const auto inside = [&](double v) {
    const double d = std::abs(v - centre);
    return radius > 0.0 ? d < radius : d <= 0.0;
  };
  const auto mid = std::lower_bound(sorted.begin(), sorted.end(), centre);
  const auto first = std::partition_point(sorted.begin(), mid, [&](double v) { return !inside(v); });
  const auto last = std::partition_point(mid, sorted.end(), inside);
  return static_cast<std::size_t>(last - first);
}

double column_std(const RowMatrixD& m, Eigen::Index col) {
  const double mean = m.col(col).mean();
  return std::sqrt((m.col(col).array() - mean).square().mean());
}

std::vector<double> jittered_column(const RowMatrixD& m, Eigen::Index col, double scale, std::uint64_t seed,
                                    std::span<const std::uint64_t> keys) {
  const double sd = column_std(m, col);
  const double amplitude = 1e-10 * (sd > 0.0 ? sd / scale : 1.0);
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint64_t key = keys.empty() ? i : keys[i];
    out[i] = m(static_cast<Eigen::Index>(i), col) / scale +
             amplitude * keyed_normal(seed, key, static_cast<std::uint64_t>(col));
  }
  return out;
}

void check_keys(std::span<const std::uint64_t> keys, Eigen::Index rows) {
  if (!keys.empty() && keys.size() != static_cast<std::size_t>(rows))
    throw PreconditionError("item key count does not match row count");
}

double discrete_estimate(std::span<const double> values, std::span<const int> labels, int k,
                         const std::vector<double>& psi) {
  const std::size_t n = values.size();
  std::map<int, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < n; ++i) classes[labels[i]].push_back(i);

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  const auto kk = static_cast<std::size_t>(k);
  double class_term = 0.0;
  double count_term = 0.0;
  std::vector<double> members;
  for (const auto& [label, indices] : classes) {
    members.clear();
    for (const std::size_t i : indices) members.push_back(values[i]);
    std::vector<std::size_t> order(indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return members[a] < members[b]; });
    std::vector<double> class_sorted(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) class_sorted[p] = members[order[p]];

    const std::size_t size = class_sorted.size();
    for (std::size_t p = 0; p < size; ++p) {
      const double centre = class_sorted[p];
      // Merge outward from p; the k-th step is the k-th nearest neighbour.
      std::size_t left = p, right = p + 1;
      double radius = 0.0;
      for (std::size_t step = 0; step < kk; ++step) {
        const double dl = left > 0 ? centre - class_sorted[left - 1] : std::numeric_limits<double>::infinity();
        const double dr = right < size ? class_sorted[right] - centre : std::numeric_limits<double>::infinity();
        if (dl <= dr) {
          radius = dl;
          --left;
        } else {
          radius = dr;
          ++right;
        }
      }
      count_term += psi[count_within(sorted, centre, radius)];
      class_term += psi[size];
    }
  }
  const auto nd = static_cast<double>(n);
  return psi[n] - class_term / nd + psi[kk] - count_term / nd;
}

void check_discrete(std::span<const int> labels, std::size_t n, int k) {
  if (k < 1) throw PreconditionError("k must be >= 1");
  if (labels.size() != n) throw PreconditionError("label count does not match row count");
  if (n < static_cast<std::size_t>(k) + 2) throw PreconditionError("need at least k + 2 points");
  std::map<int, std::size_t> sizes;
  for (const int label : labels) ++sizes[label];
  for (const auto& [label, size] : sizes)
    if (size <= static_cast<std::size_t>(k))
      throw PreconditionError("class " + std::to_string(label) + " has " + std::to_string(size) +
                              " members; the k-NN estimator needs more than k = " + std::to_string(k));
}

double ksg_estimate(std::span<const double> x, std::span<const double> y, int k, const std::vector<double>& psi) {
  const std::size_t n = x.size();
  const auto kk = static_cast<std::size_t>(k);
  std::vector<std::size_t> by_x(n);
  std::iota(by_x.begin(), by_x.end(), std::size_t{0});
  std::sort(by_x.begin(), by_x.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> xs(n), ys(y.begin(), y.end());
  for (std::size_t p = 0; p < n; ++p) xs[p] = x[by_x[p]];
  std::sort(ys.begin(), ys.end());

  std::vector<double> best;
  best.reserve(kk + 1);
  double marginal_term = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = by_x[p];
    best.clear();
    std::size_t left = p, right = p + 1;
    // Visit candidates in increasing |dx|; stop once |dx| cannot beat the k-th.
    while (left > 0 || right < n) {
      const double dl = left > 0 ? xs[p] - xs[left - 1] : std::numeric_limits<double>::infinity();
      const double dr = right < n ? xs[right] - xs[p] : std::numeric_limits<double>::infinity();
      const bool take_left = dl <= dr;
      const double dx = take_left ? dl : dr;
      if (best.size() == kk && dx >= best.back()) break;
      const std::size_t j = take_left ? by_x[--left] : by_x[right++];
      const double d = std::max(dx, std::abs(y[j] - y[i]));
      if (best.size() < kk || d < best.back()) {
        best.insert(std::upper_bound(best.begin(), best.end(), d), d);
        if (best.size() > kk) best.pop_back();
      }
    }
    const double radius = best.back();
    // Counts exclude the point itself.
    const std::size_t nx = count_within(xs, x[i], radius) - 1;
    const std::size_t ny = count_within(ys, y[i], radius) - 1;
    marginal_term += psi[nx + 1] + psi[ny + 1];
  }
  return psi[kk] + psi[n] - marginal_term / static_cast<double>(n);
}

MiResult finish(std::vector<double> per_dimension, int k, std::uint64_t seed) {
  MiResult result;
  for (double& v : per_dimension) v = std::max(0.0, v);
  double sum = 0.0;
  for (const double v : per_dimension) sum += v;
  result.aggregate = per_dimension.empty() ? 0.0 : sum / static_cast<double>(per_dimension.size());
  result.per_dimension = std::move(per_dimension);
  result.k = k;
  result.seed = seed;
  return result;
}

}  // namespace

double mi_discrete_raw(std::span<const double> values, std::span<const int> labels, int k) {
  check_discrete(labels, values.size(), k);
  return discrete_estimate(values, labels, k, integer_digamma(values.size()));
}

double mi_continuous_raw(std::span<const double> x, std::span<const double> y, int k) {
  if (x.size() != y.size()) throw PreconditionError("x and y lengths differ");
  if (k < 1) throw PreconditionError("k must be >= 1");
  if (x.size() < static_cast<std::size_t>(k) + 2) throw PreconditionError("need at least k + 2 points");
  return ksg_estimate(x, y, k, integer_digamma(x.size()));
}

MiResult mi_discrete(const RowMatrixD& features, std::span<const int> labels, int k, std::uint64_t seed,
                     std::span<const std::uint64_t> item_keys) {
  const auto n = static_cast<std::size_t>(features.rows());
  check_discrete(labels, n, k);
  check_keys(item_keys, features.rows());
  const auto psi = integer_digamma(n);
  std::vector<double> per_dimension(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index col = 0; col < features.cols(); ++col) {
    const auto values = jittered_column(features, col, 1.0, seed, item_keys);
    per_dimension[static_cast<std::size_t>(col)] = discrete_estimate(values, labels, k, psi);
  }
  return finish(std::move(per_dimension), k, seed);
}

MiResult mi_continuous(const RowMatrixD& x, const RowMatrixD& y, int k, std::uint64_t seed,
                       std::span<const std::uint64_t> item_keys) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw PreconditionError("shape mismatch: " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + " vs " +
                            std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
  if (k < 1) throw PreconditionError("k must be >= 1");
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < static_cast<std::size_t>(k) + 2) throw PreconditionError("need at least k + 2 points");
  check_keys(item_keys, x.rows());
  const auto psi = integer_digamma(n);
  std::vector<double> per_dimension(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    const double sx = column_std(x, col);
    const double sy = column_std(y, col);
    const auto xs = jittered_column(x, col, sx > 0.0 ? sx : 1.0, seed, item_keys);
    const auto ys = jittered_column(y, col, sy > 0.0 ? sy : 1.0, seed, item_keys);
    per_dimension[static_cast<std::size_t>(col)] = ksg_estimate(xs, ys, k, psi);
  }
  return finish(std::move(per_dimension), k, seed);
}

std::vector<double> silhouette_samples(const RowMatrixD& features, std::span<const int> labels) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) throw PreconditionError("label count does not match row count");
  if (n < 2) throw PreconditionError("silhouette needs at least 2 points");

  std::map<int, std::size_t> index_of;
  for (const int label : labels) index_of.emplace(label, 0);
  if (index_of.size() < 2) throw PreconditionError("silhouette needs at least 2 classes");
  std::size_t next = 0;
  for (auto& [label, index] : index_of) index = next++;
  const std::size_t clusters = index_of.size();

  std::vector<std::size_t> cluster(n);
  std::vector<std::size_t> sizes(clusters, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cluster[i] = index_of.at(labels[i]);
    ++sizes[cluster[i]];
  }

  // sums[i * clusters + c] = total distance from i to members of cluster c.
  std::vector<double> sums(n * clusters, 0.0);
  Eigen::VectorXd distances;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto rest = static_cast<Eigen::Index>(n - i - 1);
    distances = (features.bottomRows(rest).rowwise() - features.row(static_cast<Eigen::Index>(i))).rowwise().norm();
    for (Eigen::Index r = 0; r < rest; ++r) {
      const std::size_t j = i + 1 + static_cast<std::size_t>(r);
      sums[i * clusters + cluster[j]] += distances(r);
      sums[j * clusters + cluster[i]] += distances(r);
    }
  }

  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = cluster[i];
    if (sizes[own] < 2) continue;
    const double a = sums[i * clusters + own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clusters; ++c)
      if (c != own) b = std::min(b, sums[i * clusters + c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    if (denom > 0.0) s[i] = (b - a) / denom;
  }
  return s;
}

SilhouetteResult silhouette(const RowMatrixD& features, std::span<const int> labels, std::optional<std::size_t> max_points,
                            std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  SilhouetteResult result;
  if (max_points && *max_points < n) {
    if (*max_points < 2) throw PreconditionError("max_points must be >= 2");
    if (labels.size() != n) throw PreconditionError("label count does not match row count");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);

    // Largest-remainder quotas; ties go to the lower class id.
    std::vector<std::size_t> quota;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (const auto& [label, indices] : members) {
      const double exact = static_cast<double>(*max_points) * static_cast<double>(indices.size()) / static_cast<double>(n);
      quota.push_back(static_cast<std::size_t>(std::floor(exact)));
      remainders.emplace_back(exact - std::floor(exact), quota.size() - 1);
      assigned += quota.back();
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < *max_points; ++r, ++assigned) ++quota[remainders[r % remainders.size()].second];

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    std::size_t c = 0;
    for (auto& [label, indices] : members) {
      rng.shuffle(std::span<std::size_t>(indices));
      chosen.insert(chosen.end(), indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(std::min(quota[c++], indices.size())));
    }
    std::sort(chosen.begin(), chosen.end());

    RowMatrixD subset(static_cast<Eigen::Index>(chosen.size()), features.cols());
    std::vector<int> subset_labels(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      subset.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(chosen[i]));
      subset_labels[i] = labels[chosen[i]];
    }
    const auto s = silhouette_samples(subset, subset_labels);
    result.score = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    result.n_used = s.size();
    result.subsample_seed = seed;
    return result;
  }

  const auto s = silhouette_samples(features, labels);
  result.score = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  result.n_used = s.size();
  return result;
}

void write_mi_csv(const MiResult& result, std::ostream& out) {
  out << "dimension,value\n";
  char buffer[64];
  for (std::size_t d = 0; d < result.per_dimension.size(); ++d) {
    std::snprintf(buffer, sizeof buffer, "%zu,%.10g\n", d, result.per_dimension[d]);
    out << buffer;
  }
}

void write_mi_csv(const MiResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_mi_csv(result, out);
}

}  // namespace layerprobe
