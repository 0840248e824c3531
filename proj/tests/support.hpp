#pragma once

// Shared oracles for the tests. Everything here is written independently of
// the library code it checks.

#include "cift/autodiff.hpp"
#include "cift/rng.hpp"
#include "cift/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace testing {

inline cift::Matrix random_matrix(int rows, int cols, cift::Rng& rng, double scale = 1.0) {
  cift::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline cift::Labels cyclic_labels(int n, int classes) {
  cift::Labels l(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) l[static_cast<std::size_t>(i)] = i % classes;
  return l;
}

// Mean softmax cross-entropy, written from the textbook formula.
inline double reference_ce(const cift::Matrix& logits, const cift::Labels& labels) {
  double total = 0.0;
  for (int i = 0; i < logits.rows(); ++i) {
    double m = logits.row(i).maxCoeff(), z = 0.0;
    for (int j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - m);
    total += -(logits(i, labels[static_cast<std::size_t>(i)]) - m - std::log(z));
  }
  return total / static_cast<double>(logits.rows());
}

// Average precision by enumerating every cutoff: precision@r at each rank r
// holding a positive. Ranking uses the gallery index as tie-breaker.
inline double brute_force_ap(const std::vector<double>& dist, const std::vector<int>& gallery_labels, int label) {
  const int n = static_cast<int>(dist.size());
  std::vector<int> rank_of(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    int r = 0;
    for (int t = 0; t < n; ++t) {
      if (dist[t] < dist[j] || (dist[t] == dist[j] && t < j)) ++r;
    }
    rank_of[static_cast<std::size_t>(j)] = r;
  }
  double sum = 0.0;
  int positives = 0;
  for (int j = 0; j < n; ++j) {
    if (gallery_labels[j] != label) continue;
    ++positives;
    int hits_up_to = 0;
    for (int t = 0; t < n; ++t) {
      if (gallery_labels[t] == label && rank_of[t] <= rank_of[j]) ++hits_up_to;
    }
    sum += static_cast<double>(hits_up_to) / (rank_of[j] + 1);
  }
  return sum / positives;
}

// Central differences of f at x against an analytic gradient. Returns the
// max relative error with a 1e-8 floor.
inline double fd_max_rel_error(const std::function<double(const cift::Matrix&)>& f, const cift::Matrix& x,
                               const cift::Matrix& grad, double eps = 1e-6) {
  double worst = 0.0;
  cift::Matrix p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = p.data()[i];
    p.data()[i] = orig + eps;
    const double fp = f(p);
    p.data()[i] = orig - eps;
    const double fm = f(p);
    p.data()[i] = orig;
    const double num = (fp - fm) / (2 * eps);
    const double ana = grad.data()[i];
    worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8}));
  }
  return worst;
}

// Scalar reduction sum(op(x) .* r) on a fresh tape; returns value and gradient.
struct TapeProbe {
  std::function<cift::ad::Var(cift::ad::Var)> op;
  cift::Matrix weights;

  double value(const cift::Matrix& x) const {
    cift::ad::Tape t;
    return cift::ad::sum(cift::ad::hadamard(op(t.constant(x)), t.constant(weights))).scalar();
  }
  cift::Matrix grad(const cift::Matrix& x) const {
    cift::ad::Tape t;
    cift::ad::Var v = t.parameter(x);
    cift::ad::Var loss = cift::ad::sum(cift::ad::hadamard(op(v), t.constant(weights)));
    t.backward(loss);
    return t.grad(v);
  }
};

}  // namespace testing
