#include "doctest.h"

#include "layerprobe/error.hpp"
#include "layerprobe/infometrics.hpp"
#include "layerprobe/random.hpp"
#include "support/synthetic.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace layerprobe;
using layerprobe::testing::gaussian_matrix;

namespace {

std::vector<int> balanced_labels(std::size_t n, Rng& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  rng.shuffle(std::span<int>(labels));
  return labels;
}

RowMatrixD column_of(std::span<const int> labels) {
  RowMatrixD x(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = labels[i];
  return x;
}

RowMatrixD rows(std::initializer_list<std::initializer_list<double>> values) {
  RowMatrixD m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (const double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("digamma") {
  CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-13));
  CHECK(digamma(2.0) == doctest::Approx(0.42278433509846713).epsilon(1e-13));
  CHECK(std::abs(digamma(10.0) - 2.25175258906672110764745616389) < 1e-12);
  CHECK(std::abs(digamma(3.7) - 1.16715353936151144094765086066) < 1e-12);
  CHECK(std::abs(digamma(100.5) - 4.6051743525818452118686787856) < 1e-12);
  CHECK(std::abs(digamma(0.001) - -1000.57557193181027965475671066) < 1e-9);
  CHECK_THROWS_AS((void)digamma(0.0), PreconditionError);
  CHECK_THROWS_AS((void)digamma(-1.0), PreconditionError);
}

TEST_CASE("discrete MI of a deterministic balanced binary feature is ln 2") {
  Rng rng(1);
  const auto labels = balanced_labels(1000, rng);
  const MiResult r = mi_discrete(column_of(labels), labels, 3, 42);
  CHECK(std::abs(r.aggregate - std::log(2.0)) <= 0.05);
  CHECK(r.per_dimension.size() == 1);
  CHECK(r.k == 3);
  CHECK(r.seed == 42);
}

TEST_CASE("discrete MI of an independent feature is near zero") {
  Rng rng(2);
  const auto labels = balanced_labels(1000, rng);
  const RowMatrixD x = gaussian_matrix(1000, 4, rng);
  const MiResult r = mi_discrete(x, labels, 3, 42);
  CHECK(r.aggregate <= 0.05);
  CHECK(r.aggregate >= 0.0);
  for (const double v : r.per_dimension) CHECK(v >= 0.0);
}

TEST_CASE("negative raw estimates clamp to zero") {
  // Labels alternate along the line, so same-class neighbours are far away
  // relative to all-class neighbours and the raw estimate goes negative.
  std::vector<double> values;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    values.push_back(i);
    labels.push_back(i % 2);
  }
  REQUIRE(mi_discrete_raw(values, labels, 1) < 0.0);
  RowMatrixD x(12, 1);
  for (int i = 0; i < 12; ++i) x(i, 0) = values[static_cast<std::size_t>(i)];
  CHECK(mi_discrete(x, labels, 1).aggregate == 0.0);
}

TEST_CASE("discrete MI preconditions") {
  const std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1};
  RowMatrixD x = RowMatrixD::Zero(7, 1);
  CHECK_THROWS_AS((void)mi_discrete(x, labels, 3), PreconditionError);  // class 1 has only k members
  CHECK_THROWS_AS((void)mi_discrete(x, std::vector<int>{0, 1}, 3), PreconditionError);
  // A constant dimension is resolved by jitter.
  const std::vector<int> ok = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const MiResult r = mi_discrete(RowMatrixD::Constant(10, 2, 3.0), ok, 3);
  for (const double v : r.per_dimension) CHECK(std::isfinite(v));
}

TEST_CASE("continuous MI oracles") {
  Rng rng(3);
  const RowMatrixD x = gaussian_matrix(1000, 3, rng);

  SUBCASE("self information is large") {
    CHECK(mi_continuous(x, x, 3, 42).aggregate >= 2.0);
  }
  SUBCASE("independent columns") {
    const RowMatrixD y = gaussian_matrix(1000, 3, rng);
    CHECK(mi_continuous(x, y, 3, 42).aggregate <= 0.05);
  }
  SUBCASE("bivariate Gaussian at rho = 0.9") {
    const double rho = 0.9;
    const RowMatrixD noise = gaussian_matrix(1000, 3, rng);
    const RowMatrixD y = rho * x + std::sqrt(1.0 - rho * rho) * noise;
    const double truth = -0.5 * std::log(1.0 - rho * rho);
    CHECK(truth == doctest::Approx(0.8303656034108255).epsilon(1e-12));
    const MiResult r = mi_continuous(y, x, 3, 42);
    for (const double v : r.per_dimension) CHECK(std::abs(v - truth) <= 0.1);
  }
  CHECK_THROWS_AS((void)mi_continuous(x, RowMatrixD::Zero(999, 3), 3), PreconditionError);
}

TEST_CASE("MI travels with keyed items under reordering") {
  Rng rng(4);
  const std::size_t n = 300;
  const auto labels = balanced_labels(n, rng);
  RowMatrixD x = gaussian_matrix(static_cast<Eigen::Index>(n), 2, rng);
  for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), 0) += 1.5 * labels[i];
  const RowMatrixD y = x + 0.3 * gaussian_matrix(static_cast<Eigen::Index>(n), 2, rng);
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = hash_string("item" + std::to_string(i));

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  RowMatrixD xp(x.rows(), x.cols()), yp(y.rows(), y.cols());
  std::vector<int> lp(n);
  std::vector<std::uint64_t> kp(n);
  for (std::size_t i = 0; i < n; ++i) {
    xp.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(perm[i]));
    yp.row(static_cast<Eigen::Index>(i)) = y.row(static_cast<Eigen::Index>(perm[i]));
    lp[i] = labels[perm[i]];
    kp[i] = keys[perm[i]];
  }
  const MiResult a = mi_discrete(x, labels, 3, 9, keys);
  const MiResult b = mi_discrete(xp, lp, 3, 9, kp);
  for (std::size_t j = 0; j < a.per_dimension.size(); ++j)
    CHECK(a.per_dimension[j] == doctest::Approx(b.per_dimension[j]).epsilon(1e-12));
  const MiResult c = mi_continuous(x, y, 3, 9, keys);
  const MiResult d = mi_continuous(xp, yp, 3, 9, kp);
  for (std::size_t j = 0; j < c.per_dimension.size(); ++j)
    CHECK(c.per_dimension[j] == doctest::Approx(d.per_dimension[j]).epsilon(1e-12));
}

TEST_CASE("discrete MI is stable under monotone transforms") {
  Rng rng(5);
  const auto labels = balanced_labels(1000, rng);
  RowMatrixD x = gaussian_matrix(1000, 3, rng);
  for (Eigen::Index i = 0; i < 1000; ++i) x(i, 0) += 1.0 * labels[static_cast<std::size_t>(i)];
  x.col(2) = column_of(labels).col(0);

  RowMatrixD t = x;
  t.col(0) = x.col(0).array().exp();
  t.col(1) = 3.0 * x.col(1).array() + 7.0;
  t.col(2) = x.col(2).array().cube() * 5.0 - 1.0;
  const MiResult a = mi_discrete(x, labels, 3, 42);
  const MiResult b = mi_discrete(t, labels, 3, 42);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(a.per_dimension[j] - b.per_dimension[j]) <= 0.05);
}

TEST_CASE("MI is deterministic given the seed") {
  Rng rng(6);
  const auto labels = balanced_labels(200, rng);
  const RowMatrixD x = gaussian_matrix(200, 3, rng);
  CHECK(mi_discrete(x, labels, 3, 1).per_dimension == mi_discrete(x, labels, 3, 1).per_dimension);
  CHECK(mi_continuous(x, x, 3, 1).per_dimension == mi_continuous(x, x, 3, 1).per_dimension);
}

TEST_CASE("silhouette worked examples") {
  const std::vector<int> two = {0, 0, 1, 1};
  CHECK(silhouette(rows({{0, 0}, {0, 0}, {10, 10}, {10, 10}}), two).score == 1.0);

  const RowMatrixD line = rows({{0}, {1}, {5}, {6}});
  const auto samples = silhouette_samples(line, two);
  CHECK(samples[0] == doctest::Approx(9.0 / 11.0).epsilon(1e-12));
  CHECK(samples[1] == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  CHECK(samples[2] == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  CHECK(samples[3] == doctest::Approx(9.0 / 11.0).epsilon(1e-12));
  const SilhouetteResult r = silhouette(line, two);
  CHECK(std::abs(r.score - 79.0 / 99.0) < 1e-9);
  CHECK(r.n_used == 4);
  CHECK_FALSE(r.subsample_seed.has_value());

  CHECK(silhouette(RowMatrixD::Constant(4, 3, 2.5), two).score == 0.0);

  // Singleton cluster scores 0; the other two points each get (b - a) / b.
  const auto s = silhouette_samples(rows({{0}, {1}, {10}}), std::vector<int>{0, 0, 1});
  CHECK(s[2] == 0.0);
  CHECK(s[0] == doctest::Approx((10.0 - 1.0) / 10.0));
  CHECK(s[1] == doctest::Approx((9.0 - 1.0) / 9.0));

  CHECK_THROWS_AS((void)silhouette(line, std::vector<int>{0, 0, 0, 0}), PreconditionError);
  CHECK_THROWS_AS((void)silhouette(rows({{1}}), std::vector<int>{0}), PreconditionError);
}

TEST_CASE("silhouette invariants") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 30;
    RowMatrixD x = gaussian_matrix(n, 3, rng);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(rng.uniform_below(3));
    labels[0] = 0;
    labels[1] = 1;
    const double base = silhouette(x, labels).score;
    CHECK(base >= -1.0);
    CHECK(base <= 1.0);

    // Rigid motion: orthonormal basis from a QR factorisation, plus a shift.
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(3, 3, rng)).householderQ();
    RowMatrixD moved = x * q;
    moved.rowwise() += Eigen::RowVector3d(5.0, -2.0, 100.0);
    CHECK(std::abs(silhouette(moved, labels).score - base) < 1e-9);

    std::vector<std::size_t> perm(labels.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    RowMatrixD xp(n, 3);
    std::vector<int> lp(labels.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      xp.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(perm[i]));
      lp[i] = labels[perm[i]];
    }
    CHECK(std::abs(silhouette(xp, lp).score - base) < 1e-9);
  }
}

TEST_CASE("silhouette subsampling") {
  Rng rng(8);
  const RowMatrixD x = gaussian_matrix(500, 4, rng);
  std::vector<int> labels(500);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i < 400 ? 0 : 1;

  const SilhouetteResult a = silhouette(x, labels, 100, 3);
  CHECK(a.n_used == 100);
  REQUIRE(a.subsample_seed.has_value());
  CHECK(*a.subsample_seed == 3);
  CHECK(silhouette(x, labels, 100, 3).score == a.score);
  CHECK(silhouette(x, labels, 100, 4).score != a.score);

  const SilhouetteResult full = silhouette(x, labels, 1000, 3);
  CHECK(full.n_used == 500);
  CHECK_FALSE(full.subsample_seed.has_value());
  CHECK_THROWS_AS((void)silhouette(x, labels, 1, 3), PreconditionError);
}

TEST_CASE("per-dimension CSV") {
  MiResult r;
  r.per_dimension = {0.5, 0.25};
  r.aggregate = 0.375;
  std::ostringstream out;
  write_mi_csv(r, out);
  CHECK(out.str() == "dimension,value\n0,0.5\n1,0.25\n");
}
