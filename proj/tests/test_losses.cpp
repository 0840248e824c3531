#include "cift/losses.hpp"

#include "support.hpp"

#include <doctest.h>

#include <map>

using namespace cift;

TEST_CASE("cross-entropy") {
  CHECK(losses::cross_entropy(Matrix::Zero(3, 4), Labels{0, 1, 3}) == doctest::Approx(1.386294361).epsilon(1e-9));
  Matrix hot = Matrix::Zero(2, 3);
  hot(0, 1) = 1e6;
  hot(1, 2) = 1e6;
  CHECK(losses::cross_entropy(hot, Labels{1, 2}) < 1e-12);
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix y = testing::random_matrix(6, 5, rng, 4.0);
    const Labels l = testing::cyclic_labels(6, 5);
    CHECK(std::abs(losses::cross_entropy(y, l) - testing::reference_ce(y, l)) < 1e-10);
    const Matrix shifted = y.colwise() + testing::random_matrix(6, 1, rng, 10.0).col(0);
    CHECK(std::abs(losses::cross_entropy(shifted, l) - losses::cross_entropy(y, l)) < 1e-9);
  }
  CHECK_THROWS_AS(losses::cross_entropy(Matrix::Zero(2, 3), Labels{0, 3}), ParameterError);
  CHECK_THROWS_AS(losses::cross_entropy(Matrix::Zero(2, 3), Labels{-1, 0}), ParameterError);
}

TEST_CASE("heterogeneous centers") {
  Rng rng(2);
  const Matrix f = testing::random_matrix(3, 2, rng);
  const auto single = losses::hetero_centers(f, Labels{4, 1, 7});
  CHECK(single.ids == std::vector<int>{1, 4, 7});
  CHECK(single.values.row(0) == f.row(1));
  CHECK(single.values.row(1) == f.row(0));

  Matrix uw(2, 2);
  uw << 1, 2, 3, 6;
  CHECK(losses::hetero_centers(uw, Labels{0, 0}).values.row(0) == RowVector{{2.0, 4.0}});

  const Matrix x = testing::random_matrix(40, 3, rng);
  const Labels l = testing::cyclic_labels(40, 8);
  const auto c = losses::hetero_centers(x, l);
  std::map<int, RowVector> sum;
  std::map<int, int> cnt;
  for (int i = 0; i < 40; ++i) {
    auto [it, fresh] = sum.try_emplace(l[static_cast<std::size_t>(i)], RowVector::Zero(3));
    it->second += x.row(i);
    ++cnt[l[static_cast<std::size_t>(i)]];
  }
  for (int k = 0; k < 8; ++k) CHECK((c.values.row(k) - sum[k] / cnt[k]).cwiseAbs().maxCoeff() < 1e-14);

  // Permuting samples leaves the centers unchanged.
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  Matrix xp(40, 3);
  Labels lp(40);
  for (int i = 0; i < 40; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    lp[static_cast<std::size_t>(i)] = l[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  CHECK((losses::hetero_centers(xp, lp).values - c.values).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(losses::hetero_centers(Matrix(0, 2), Labels{}), DegenerateInputError);
}

TEST_CASE("HCC loss hand cases") {
  // Samples sit on their centers, and the centers are rho apart or further.
  Matrix x(4, 2);
  x << 0, 0, 0, 0, 3, 0, 3, 0;
  CHECK(losses::hcc_loss(x, Labels{0, 0, 1, 1}, Distance::kEuclidean, 0.6) == 0.0);

  Matrix y(2, 2);
  y << 0, 0, 0.3, 0;
  CHECK(losses::hcc_loss(y, Labels{0, 1}, Distance::kEuclidean, 0.6) == doctest::Approx(0.3).epsilon(1e-14));

  Matrix same = Matrix::Zero(2, 4);
  CHECK(losses::hcc_loss(same, Labels{0, 1}, Distance::kKL, 6.0) == doctest::Approx(6.0));

  CHECK_THROWS_AS(losses::hcc_loss(y, Labels{1, 1}, Distance::kEuclidean, 0.6), DegenerateInputError);
  CHECK_THROWS_AS(losses::hcc_loss(y, Labels{0, 1}, Distance::kEuclidean, 0.0), ParameterError);
}

TEST_CASE("HCC loss against a direct evaluation") {
  Rng rng(3);
  for (Distance dist : {Distance::kEuclidean, Distance::kKL}) {
    for (bool anchor : {true, false}) {
      const Matrix x = testing::random_matrix(12, 5, rng);
      const Labels l = testing::cyclic_labels(12, 3);
      const double rho = dist == Distance::kEuclidean ? 0.6 : 6.0;
      auto d = [&](const RowVector& a, const RowVector& c) {
        if (dist == Distance::kEuclidean) return (a - c).norm();
        auto lsm = [](const RowVector& v) {
          const double m = v.maxCoeff();
          return RowVector(v.array() - m - std::log((v.array() - m).exp().sum()));
        };
        const RowVector la = lsm(a), lc = lsm(c);
        return (la.array().exp() * (la - lc).array()).sum();
      };
      double total = 0.0;
      for (int i = 0; i < 12; ++i) {
        std::vector<RowVector> centers(3, RowVector::Zero(5));
        std::vector<int> counts(3, 0);
        for (int j = 0; j < 12; ++j) {
          centers[static_cast<std::size_t>(l[j])] += x.row(j);
          ++counts[static_cast<std::size_t>(l[j])];
        }
        const int own = l[static_cast<std::size_t>(i)];
        RowVector own_c = centers[static_cast<std::size_t>(own)] / counts[static_cast<std::size_t>(own)];
        if (!anchor) own_c = (centers[static_cast<std::size_t>(own)] - x.row(i)) / (counts[static_cast<std::size_t>(own)] - 1);
        double term = d(x.row(i), own_c), hinge = 0.0;
        for (int k = 0; k < 3; ++k) {
          if (k == own) continue;
          hinge += std::max(rho - d(x.row(i), centers[static_cast<std::size_t>(k)] / counts[static_cast<std::size_t>(k)]), 0.0);
        }
        total += term + hinge / 2.0;
      }
      CHECK(losses::hcc_loss(x, l, dist, rho, anchor) == doctest::Approx(total / 12.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("HCC loss is non-negative and non-increasing as a negative center recedes") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = testing::random_matrix(8, 3, rng, 0.3);
    CHECK(losses::hcc_loss(x, testing::cyclic_labels(8, 4), Distance::kEuclidean, 0.6) >= 0.0);
    CHECK(losses::hcc_loss(x, testing::cyclic_labels(8, 4), Distance::kKL, 6.0) >= 0.0);
  }
  Matrix two(2, 2);
  two << 0, 0, 0.05, 0;
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 20; ++step) {
    two(1, 0) = 0.05 * (step + 1);
    const double v = losses::hcc_loss(two, Labels{0, 1}, Distance::kEuclidean, 0.6);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("loss gradients match finite differences away from kinks") {
  Rng rng(5);
  const Labels l = testing::cyclic_labels(10, 3);
  for (int variant = 0; variant < 3; ++variant) {
    const Matrix x = testing::random_matrix(10, 4, rng, 0.5);
    auto f = [&](const cift::ad::Var& v) {
      if (variant == 0) return losses::cross_entropy(v, l);
      if (variant == 1) return losses::hcc_loss(v, l, Distance::kEuclidean, 0.6);
      return losses::hcc_loss(v, l, Distance::kKL, 6.0);
    };
    ad::Tape t;
    ad::Var v = t.parameter(x);
    ad::Var out = f(v);
    t.backward(out);
    const Matrix g = t.grad(v);
    const std::uint64_t sig = t.signature();
    double worst = 0.0;
    Matrix p = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double orig = p.data()[i];
      double vals[2];
      bool kink = false;
      for (int s = 0; s < 2; ++s) {
        p.data()[i] = orig + (s == 0 ? 1e-6 : -1e-6);
        ad::Tape tt;
        vals[s] = f(tt.constant(p)).scalar();
        kink |= tt.signature() != sig;
      }
      p.data()[i] = orig;
      if (kink) continue;
      const double num = (vals[0] - vals[1]) / 2e-6;
      worst = std::max(worst, std::abs(num - g.data()[i]) / std::max({std::abs(num), std::abs(g.data()[i]), 1e-8}));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("total loss assembly") {
  const auto zero = losses::total_loss(0, 0, 0, 0, 0);
  CHECK(zero.total == 0.0);
  const auto b = losses::total_loss(1, 2, 3, 4, 5);
  CHECK(b.total == 15.0);
  CHECK(b.tie == 5.0);
  try {
    losses::total_loss(1, 2, std::nan(""), 4, 5);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("ce_graph") != std::string::npos);
  }
  CHECK_THROWS_AS(losses::total_loss(0, 0, 0, 0, INFINITY), NumericalError);
  CHECK(losses::csv_header() == "step,ce_backbone,me_backbone,ce_graph,me_graph,tie,total");
  CHECK(losses::csv_row(3, b) == "3,1,2,3,4,5,15");
}
