#include "cift/metrics.hpp"

#include "cift/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cift::metrics {

namespace {

Matrix log_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}

Matrix distance_matrix(const Matrix& x, Distance distance) {
  const Eigen::Index n = x.rows();
  Matrix d(n, n);
  if (distance == Distance::kEuclidean) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  } else {
    const Matrix lp = log_softmax(x);
    const Matrix p = lp.array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (p.row(i).array() * (lp.row(i) - lp.row(j)).array()).sum();
  }
  return d;
}

void check_labels(const Matrix& m, const Labels& labels, const char* what) {
  if (static_cast<Eigen::Index>(labels.size()) != m.rows()) {
    throw ParameterError(std::string(what) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(m.rows()) + " rows");
  }
}

}  // namespace

double margin_quality(const Matrix& x, const Labels& labels, Distance distance) {
  check_labels(x, labels, "margin_quality");
  const Eigen::Index n = x.rows();
  const Matrix d = distance_matrix(x, distance);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double pos = 0.0, neg = 0.0;
    int np = 0, nn = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        pos += d(i, j);
        ++np;
      } else {
        neg += d(i, j);
        ++nn;
      }
    }
    if (np == 0 || nn == 0) {
      throw DegenerateInputError("margin_quality: sample " + std::to_string(i) +
                                 " lacks a positive or a negative");
    }
    // The mean over the positive x negative product splits into two means.
    total += neg / nn - pos / np;
  }
  return total / static_cast<double>(n);
}

double affinity_quality(const Matrix& a, const Labels& labels) {
  if (a.rows() != a.cols()) throw ParameterError("affinity_quality: matrix must be square");
  check_labels(a, labels, "affinity_quality");
  const Eigen::Index n = a.rows();
  int good = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    bool has_pos = false, has_neg = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        min_pos = std::min(min_pos, a(i, j));
        has_pos = true;
      } else {
        max_neg = std::max(max_neg, a(i, j));
        has_neg = true;
      }
    }
    if (!has_pos || !has_neg) {
      throw DegenerateInputError("affinity_quality: row " + std::to_string(i) +
                                 " lacks a positive or a negative");
    }
    if (min_pos > max_neg) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(n);
}

double affinity_error_ratio(const Matrix& a, const Labels& row_labels, const Labels& col_labels,
                            int top) {
  check_labels(a, row_labels, "affinity_error_ratio");
  if (static_cast<Eigen::Index>(col_labels.size()) != a.cols()) {
    throw ParameterError("affinity_error_ratio: column label count differs from columns");
  }
  if (top < 1 || top > a.cols()) {
    throw ParameterError("affinity_error_ratio: top=" + std::to_string(top) + " outside [1, " +
                         std::to_string(a.cols()) + "]");
  }
  if (a.rows() == 0) throw DegenerateInputError("affinity_error_ratio: empty matrix");
  std::vector<int> order(static_cast<std::size_t>(a.cols()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return a(i, x) > a(i, y); });
    int wrong = 0;
    for (int r = 0; r < top; ++r) {
      if (col_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] !=
          row_labels[static_cast<std::size_t>(i)]) {
        ++wrong;
      }
    }
    total += static_cast<double>(wrong) / top;
  }
  return total / static_cast<double>(a.rows());
}

double affinity_error_ratio(const Matrix& a, const Labels& labels, int top) {
  return affinity_error_ratio(a, labels, labels, top);
}

RetrievalResult cmc_map(const Matrix& dist, const Labels& query_labels,
                        const Labels& gallery_labels) {
  check_labels(dist, query_labels, "cmc_map");
  if (static_cast<Eigen::Index>(gallery_labels.size()) != dist.cols()) {
    throw ParameterError("cmc_map: gallery label count differs from columns");
  }
  if (dist.rows() == 0 || dist.cols() == 0) throw DegenerateInputError("cmc_map: empty distance matrix");
  const Eigen::Index ng = dist.cols();
  RetrievalResult r;
  r.cmc.assign(static_cast<std::size_t>(ng), 0.0);
  std::vector<int> order(static_cast<std::size_t>(ng));
  double ap_sum = 0.0;
  for (Eigen::Index q = 0; q < dist.rows(); ++q) {
    const int ql = query_labels[static_cast<std::size_t>(q)];
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return dist(q, x) < dist(q, y); });
    int hits = 0;
    double precision_sum = 0.0;
    Eigen::Index first_hit = -1;
    for (Eigen::Index rank = 0; rank < ng; ++rank) {
      if (gallery_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])] == ql) {
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        if (first_hit < 0) first_hit = rank;
      }
    }
    if (hits == 0) {
      throw DegenerateInputError("cmc_map: query " + std::to_string(q) + " has no gallery positive");
    }
    for (Eigen::Index rank = first_hit; rank < ng; ++rank) r.cmc[static_cast<std::size_t>(rank)] += 1.0;
    ap_sum += precision_sum / hits;
  }
  const double nq = static_cast<double>(dist.rows());
  for (double& c : r.cmc) c /= nq;
  r.map = ap_sum / nq;
  return r;
}

std::string to_json(const QualityReport& q) {
  nlohmann::json j{{"q_x", q.q_x},
                   {"q_y", q.q_y},
                   {"q_a", q.q_a},
                   {"affinity_error_ratio", q.affinity_error_ratio}};
  return j.dump(2);
}

std::string to_json(const RetrievalResult& r) {
  nlohmann::json j{{"cmc", r.cmc}, {"map", r.map}};
  if (!r.cmc.empty()) j["rank1"] = r.cmc.front();
  return j.dump(2);
}

std::string cmc_csv(const RetrievalResult& r) {
  std::ostringstream os;
  os << "rank,cmc\n";
  for (std::size_t i = 0; i < r.cmc.size(); ++i) os << i + 1 << ',' << io::format_double(r.cmc[i]) << '\n';
  return os.str();
}

}  // namespace cift::metrics
