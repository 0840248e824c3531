#pragma once

// Identity cross-entropy, the heterogeneous center contrastive (HCC) loss and
// the five-term objective.

#include "cift/autodiff.hpp"
#include "cift/types.hpp"

#include <string>
#include <vector>

namespace cift::losses {

struct LossWeightsConfig {
  double rho_eu = 0.6;
  double rho_kl = 6.0;
  // Whether an anchor's own feature contributes to its positive center.
  bool include_anchor = true;

  void validate() const;
};

ad::Var cross_entropy(ad::Var logits, const Labels& labels);
double cross_entropy(const Matrix& logits, const Labels& labels);

struct Centers {
  std::vector<int> ids;  // ascending
  Matrix values;         // one row per id
};

/// Mean of every row sharing a label, both modalities pooled.
Centers hetero_centers(const Matrix& features, const Labels& labels);

/// mean_i [ D(I_i, C_own) + mean_{k != own} max(rho - D(I_i, C_k), 0) ].
/// kKL compares softmax(I_i) against softmax(mean logits of the class) with
/// forward KL(anchor || center).
ad::Var hcc_loss(ad::Var input, const Labels& labels, Distance distance, double rho,
                 bool include_anchor = true);
double hcc_loss(const Matrix& input, const Labels& labels, Distance distance, double rho,
                bool include_anchor = true);

struct LossBreakdown {
  double ce_backbone = 0.0;
  double me_backbone = 0.0;
  double ce_graph = 0.0;
  double me_graph = 0.0;
  double tie = 0.0;
  double total = 0.0;
};

/// Plain sum of the five parts. Throws NumericalError naming the first
/// non-finite part.
LossBreakdown total_loss(double ce_backbone, double me_backbone, double ce_graph, double me_graph,
                         double tie);

std::string csv_header();
std::string csv_row(long step, const LossBreakdown& b);

}  // namespace cift::losses
