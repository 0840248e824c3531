#include "cift/losses.hpp"

#include "cift/io.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cift::losses {

namespace {

struct ClassIndex {
  std::vector<int> ids;
  std::vector<int> slot;  // per row: index into ids
  std::vector<int> count;
};

ClassIndex index_classes(const Labels& labels) {
  ClassIndex ci;
  std::map<int, int> pos;
  for (int l : labels) pos.emplace(l, 0);
  int s = 0;
  for (auto& [id, p] : pos) {
    p = s++;
    ci.ids.push_back(id);
  }
  ci.count.assign(ci.ids.size(), 0);
  for (int l : labels) {
    ci.slot.push_back(pos[l]);
    ++ci.count[static_cast<std::size_t>(pos[l])];
  }
  return ci;
}

}  // namespace

void LossWeightsConfig::validate() const {
  if (!(rho_eu > 0.0) || !(rho_kl > 0.0)) throw ParameterError("HCC margins must be > 0");
}

ad::Var cross_entropy(ad::Var logits, const Labels& labels) {
  const Eigen::Index n = logits.rows(), c = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ParameterError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  if (n == 0) throw DegenerateInputError("cross_entropy: empty batch");
  Matrix pick = Matrix::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= c) {
      throw ParameterError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                           std::to_string(c) + ")");
    }
    pick(i, l) = 1.0;
  }
  ad::Tape& t = *logits.tape;
  ad::Var logp = ad::log_softmax_rows(logits);
  return ad::scale(ad::sum(ad::hadamard(logp, t.constant(std::move(pick)))), -1.0 / static_cast<double>(n));
}

double cross_entropy(const Matrix& logits, const Labels& labels) {
  ad::Tape t;
  return cross_entropy(t.constant(logits), labels).scalar();
}

Centers hetero_centers(const Matrix& features, const Labels& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw ParameterError("hetero_centers: label count differs from rows");
  }
  if (labels.empty()) throw DegenerateInputError("hetero_centers: no samples");
  const ClassIndex ci = index_classes(labels);
  Centers c;
  c.ids = ci.ids;
  c.values = Matrix::Zero(static_cast<Eigen::Index>(ci.ids.size()), features.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    c.values.row(ci.slot[i]) += features.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t s = 0; s < ci.ids.size(); ++s) c.values.row(static_cast<Eigen::Index>(s)) /= ci.count[s];
  return c;
}

ad::Var hcc_loss(ad::Var input, const Labels& labels, Distance distance, double rho,
                 bool include_anchor) {
  const Eigen::Index n = input.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ParameterError("hcc_loss: label count differs from rows");
  if (!(rho > 0.0)) throw ParameterError("hcc_loss: margin must be > 0");
  const ClassIndex ci = index_classes(labels);
  const Eigen::Index p = static_cast<Eigen::Index>(ci.ids.size());
  if (p < 2) throw DegenerateInputError("hcc_loss: needs at least two identities in the batch");

  ad::Tape& t = *input.tape;
  Matrix avg = Matrix::Zero(p, n);
  Matrix own = Matrix::Zero(n, p);
  Matrix neg = Matrix::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = ci.slot[static_cast<std::size_t>(i)];
    avg(s, i) = 1.0 / ci.count[static_cast<std::size_t>(s)];
    own(i, s) = 1.0;
    neg.row(i).setConstant(1.0 / static_cast<double>(p - 1));
    neg(i, s) = 0.0;
  }
  ad::Var centers = ad::matmul(t.constant(std::move(avg)), input);

  // Own-class centers, one row per anchor, when the anchor is left out.
  ad::Var own_centers;
  if (!include_anchor) {
    Matrix loo = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int s = ci.slot[static_cast<std::size_t>(i)];
      const int m = ci.count[static_cast<std::size_t>(s)];
      if (m < 2) throw DegenerateInputError("hcc_loss: anchor-excluded center of a singleton class");
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i && ci.slot[static_cast<std::size_t>(j)] == s) loo(i, j) = 1.0 / (m - 1);
      }
    }
    own_centers = ad::matmul(t.constant(std::move(loo)), input);
  }

  ad::Var d_all;  // n x p
  ad::Var d_pos;  // n x 1
  if (distance == Distance::kEuclidean) {
    d_all = ad::pairwise_distances(input, centers);
    d_pos = include_anchor ? ad::row_sum(ad::hadamard(d_all, t.constant(own)))
                           : ad::row_norms(ad::sub(input, own_centers));
  } else {
    ad::Var logp = ad::log_softmax_rows(input);
    ad::Var prob = ad::exp(logp);
    ad::Var neg_entropy = ad::row_sum(ad::hadamard(prob, logp));  // n x 1
    ad::Var logq = ad::log_softmax_rows(centers);
    ad::Var cross = ad::matmul_nt(prob, logq);  // n x p
    d_all = ad::sub(ad::matmul(neg_entropy, t.constant(Matrix::Ones(1, p))), cross);
    if (include_anchor) {
      d_pos = ad::row_sum(ad::hadamard(d_all, t.constant(own)));
    } else {
      ad::Var logq_own = ad::log_softmax_rows(own_centers);
      d_pos = ad::row_sum(ad::hadamard(prob, ad::sub(logp, logq_own)));
    }
  }
  // Own-class entries are zeroed before the hinge, so they sit at rho (always
  // active) and never register as a kink; the weights then drop them.
  Matrix neg_support = (neg.array() > 0.0).cast<double>().matrix();
  ad::Var margin = ad::add_scalar(ad::scale(ad::hadamard(d_all, t.constant(std::move(neg_support))), -1.0), rho);
  ad::Var d_neg = ad::row_sum(ad::hadamard(ad::relu(margin), t.constant(std::move(neg))));
  return ad::mean(ad::add(d_pos, d_neg));
}

double hcc_loss(const Matrix& input, const Labels& labels, Distance distance, double rho,
                bool include_anchor) {
  ad::Tape t;
  return hcc_loss(t.constant(input), labels, distance, rho, include_anchor).scalar();
}

LossBreakdown total_loss(double ce_backbone, double me_backbone, double ce_graph, double me_graph,
                         double tie) {
  const std::pair<const char*, double> parts[] = {{"ce_backbone", ce_backbone},
                                                  {"me_backbone", me_backbone},
                                                  {"ce_graph", ce_graph},
                                                  {"me_graph", me_graph},
                                                  {"tie", tie}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite loss term: ") + name);
  }
  LossBreakdown b{ce_backbone, me_backbone, ce_graph, me_graph, tie, 0.0};
  b.total = ce_backbone + me_backbone + ce_graph + me_graph + tie;
  return b;
}

std::string csv_header() { return "step,ce_backbone,me_backbone,ce_graph,me_graph,tie,total"; }

std::string csv_row(long step, const LossBreakdown& b) {
  std::string s = std::to_string(step);
  for (double v : {b.ce_backbone, b.me_backbone, b.ce_graph, b.me_graph, b.tie, b.total}) {
    s += ',';
    s += io::format_double(v);
  }
  return s;
}

}  // namespace cift::losses
