#pragma once

// Counterfactual relation intervention.
//
// The counterfactual pass keeps the factual messages v(X) but computes the
// affinities from intervened inputs X* = sigma * Z + mu, Z ~ N(0, I). The
// total indirect effect is the factual output minus the mean counterfactual
// output, and its cross-entropy is the intervention loss.

#include "cift/autodiff.hpp"
#include "cift/h2ft.hpp"
#include "cift/rng.hpp"
#include "cift/types.hpp"

namespace cift::cri {

struct InterventionParams {
  RowVector mu;
  RowVector log_sigma;  // sigma = exp(log_sigma) > 0
  int num_mc_samples = 1;

  // mu = 0, sigma = 1.
  static InterventionParams standard(int dim, int num_mc_samples = 1);
  // Throws ParameterError unless every sigma entry is > 0.
  static InterventionParams from_sigma(const RowVector& mu, const RowVector& sigma,
                                       int num_mc_samples = 1);
  RowVector sigma() const { return log_sigma.array().exp().matrix(); }
  void validate() const;
};

/// Standard normal draws of shape n x d.
Matrix draw_noise(int n, int d, Rng& rng);
/// Reparameterized sample, differentiable in mu and log_sigma.
ad::Var intervened(ad::Var noise, ad::Var mu, ad::Var log_sigma);
Matrix sample_intervened(const InterventionParams& p, int n, int d, Rng& rng);

/// Everything the graph head needs to turn a group into logits.
struct GraphHead {
  h2ft::EnhanceParams enhance;
  h2ft::Classifier classifier;
  h2ft::TransferConfig transfer;
  // false: one square graph over [query; gallery] instead of the het/hom split.
  bool heterogeneous = true;
};

/// Logits for [query; gallery] of one group. Messages come from `v_stack`,
/// affinities from `a_stack`; both are (n+1) x d with the query first.
ad::Var group_logits(ad::Var v_stack, ad::Var a_stack, const h2ft::TransferConfig& cfg,
                     bool heterogeneous, ad::Var weight, ad::Var bias);

Matrix group_inputs(const h2ft::QueryGroup& group);

Matrix factual_output(const h2ft::QueryGroup& group, const GraphHead& head);
/// Counterfactual logits with an explicit intervened input matrix x_star of
/// the same shape as group_inputs(group).
Matrix counterfactual_output_from(const h2ft::QueryGroup& group, const GraphHead& head,
                                  const Matrix& x_star);
/// Mean over ip.num_mc_samples draws of X*.
Matrix counterfactual_output(const h2ft::QueryGroup& group, const GraphHead& head,
                             const InterventionParams& ip, Rng& rng);

struct TieOutput {
  Matrix y_factual;
  Matrix y_counterfactual_mean;
  Matrix y_tie;
};

TieOutput total_indirect_effect(const h2ft::QueryGroup& group, const GraphHead& head,
                                const InterventionParams& ip, Rng& rng);

ad::Var tie(ad::Var factual, ad::Var counterfactual_mean);
Matrix tie(const Matrix& factual, const Matrix& counterfactual_mean);
double tie_loss(const Matrix& y_tie, const Labels& labels);

}  // namespace cift::cri
