#include "cift/cri.hpp"

#include "cift/losses.hpp"

#include <cmath>

namespace cift::cri {

InterventionParams InterventionParams::standard(int dim, int num_mc_samples) {
  InterventionParams p;
  p.mu = RowVector::Zero(dim);
  p.log_sigma = RowVector::Zero(dim);
  p.num_mc_samples = num_mc_samples;
  p.validate();
  return p;
}

InterventionParams InterventionParams::from_sigma(const RowVector& mu, const RowVector& sigma,
                                                  int num_mc_samples) {
  if (mu.size() != sigma.size()) throw ParameterError("intervention mu and sigma lengths differ");
  if (!(sigma.array() > 0.0).all()) throw ParameterError("intervention sigma must be > 0");
  InterventionParams p;
  p.mu = mu;
  p.log_sigma = sigma.array().log().matrix();
  p.num_mc_samples = num_mc_samples;
  p.validate();
  return p;
}

void InterventionParams::validate() const {
  if (mu.size() != log_sigma.size()) throw ParameterError("intervention mu and sigma lengths differ");
  if (num_mc_samples < 1) throw ParameterError("num_mc_samples must be >= 1");
  if (!mu.allFinite() || !log_sigma.allFinite()) throw ParameterError("intervention parameters not finite");
}

Matrix draw_noise(int n, int d, Rng& rng) {
  Matrix z(n, d);
  // Row-major fill so the draw order does not depend on storage order.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = rng.normal();
  return z;
}

ad::Var intervened(ad::Var noise, ad::Var mu, ad::Var log_sigma) {
  return ad::add_row(ad::mul_row(noise, ad::exp(log_sigma)), mu);
}

Matrix sample_intervened(const InterventionParams& p, int n, int d, Rng& rng) {
  p.validate();
  if (p.mu.size() != d) throw ParameterError("sample_intervened: shape does not match parameters");
  ad::Tape t;
  return intervened(t.constant(draw_noise(n, d, rng)), t.constant(p.mu), t.constant(p.log_sigma)).value();
}

ad::Var group_logits(ad::Var v_stack, ad::Var a_stack, const h2ft::TransferConfig& cfg,
                     bool heterogeneous, ad::Var weight, ad::Var bias) {
  ad::Var features;
  if (heterogeneous) {
    const Eigen::Index n = v_stack.rows() - 1;
    ad::Var vq = ad::slice_rows(v_stack, 0, 1), vg = ad::slice_rows(v_stack, 1, n);
    ad::Var aq = ad::slice_rows(a_stack, 0, 1), ag = ad::slice_rows(a_stack, 1, n);
    h2ft::HetOut h = h2ft::het(vq, vg, aq, ag, cfg.tau_het, cfg.k);
    h2ft::HomOut g = h2ft::hom(vg, ag, cfg.tau_hom, cfg.k);
    const std::array<ad::Var, 2> parts{h.f_q, g.f};
    features = ad::vstack(parts);
  } else {
    features = h2ft::single_graph(v_stack, a_stack, cfg.tau_hom, cfg.k).f;
  }
  return h2ft::classify(features, weight, bias);
}

Matrix group_inputs(const h2ft::QueryGroup& group) {
  Matrix x(group.gallery.rows() + 1, group.gallery.cols());
  x.row(0) = group.query.feature;
  x.bottomRows(group.gallery.rows()) = group.gallery;
  return x;
}

namespace {

struct HeadVars {
  h2ft::EnhanceStats stats;
  ad::Var gamma, beta, weight, bias;
};

HeadVars head_vars(ad::Tape& t, const GraphHead& head) {
  head.enhance.validate();
  return {h2ft::running_stats(t, head.enhance), t.constant(head.enhance.gamma),
          t.constant(head.enhance.beta), t.constant(head.classifier.weight),
          t.constant(head.classifier.bias)};
}

}  // namespace

Matrix factual_output(const h2ft::QueryGroup& group, const GraphHead& head) {
  ad::Tape t;
  HeadVars h = head_vars(t, head);
  ad::Var v = h2ft::apply_enhance(t.constant(group_inputs(group)), h.stats, h.gamma, h.beta);
  return group_logits(v, v, head.transfer, head.heterogeneous, h.weight, h.bias).value();
}

Matrix counterfactual_output_from(const h2ft::QueryGroup& group, const GraphHead& head,
                                  const Matrix& x_star) {
  const Matrix x = group_inputs(group);
  if (x_star.rows() != x.rows() || x_star.cols() != x.cols()) {
    throw ParameterError("counterfactual_output: intervened inputs must match the group shape");
  }
  ad::Tape t;
  HeadVars h = head_vars(t, head);
  ad::Var v = h2ft::apply_enhance(t.constant(x), h.stats, h.gamma, h.beta);
  ad::Var a = h2ft::apply_enhance(t.constant(x_star), h.stats, h.gamma, h.beta);
  return group_logits(v, a, head.transfer, head.heterogeneous, h.weight, h.bias).value();
}

Matrix counterfactual_output(const h2ft::QueryGroup& group, const GraphHead& head,
                             const InterventionParams& ip, Rng& rng) {
  ip.validate();
  const int n = static_cast<int>(group.gallery.rows()) + 1;
  const int d = static_cast<int>(group.gallery.cols());
  Matrix acc;
  for (int s = 0; s < ip.num_mc_samples; ++s) {
    Matrix y = counterfactual_output_from(group, head, sample_intervened(ip, n, d, rng));
    if (s == 0) {
      acc = std::move(y);
    } else {
      acc += y;
    }
  }
  return acc / static_cast<double>(ip.num_mc_samples);
}

TieOutput total_indirect_effect(const h2ft::QueryGroup& group, const GraphHead& head,
                                const InterventionParams& ip, Rng& rng) {
  TieOutput out;
  out.y_factual = factual_output(group, head);
  out.y_counterfactual_mean = counterfactual_output(group, head, ip, rng);
  out.y_tie = tie(out.y_factual, out.y_counterfactual_mean);
  return out;
}

ad::Var tie(ad::Var factual, ad::Var counterfactual_mean) { return ad::sub(factual, counterfactual_mean); }

Matrix tie(const Matrix& factual, const Matrix& counterfactual_mean) {
  if (factual.rows() != counterfactual_mean.rows() || factual.cols() != counterfactual_mean.cols()) {
    throw ParameterError("tie: factual and counterfactual shapes differ");
  }
  return factual - counterfactual_mean;
}

double tie_loss(const Matrix& y_tie, const Labels& labels) {
  return losses::cross_entropy(y_tie, labels);
}

}  // namespace cift::cri
