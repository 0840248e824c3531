#pragma once

// Homogeneous and heterogeneous feature transfer.
//
// A balanced batch of n visible and n infrared samples is split into 2n
// groups, each one query against the n samples of the other modality. The
// query aggregates over [v(query); v(gallery)] through a 1 x (n+1) affinity;
// the gallery aggregates only over itself through an n x n affinity, so the
// query never leaks into gallery features.

#include "cift/autodiff.hpp"
#include "cift/datagen.hpp"
#include "cift/types.hpp"

#include <vector>

namespace cift::h2ft {

inline constexpr double kVarianceFloor = 1e-5;

/// BNNeck-style enhancement v(.): per-column standardization then affine.
struct EnhanceParams {
  RowVector gamma;
  RowVector beta;
  RowVector running_mean;
  RowVector running_var;
  double momentum = 0.1;

  static EnhanceParams identity(int dim);
  int dim() const { return static_cast<int>(gamma.size()); }
  void validate() const;
};

struct EnhanceStats {
  ad::Var mean;     // 1 x d
  ad::Var inv_std;  // 1 x d
};

// Batch mean and biased variance, variance floored at kVarianceFloor.
EnhanceStats batch_stats(ad::Var x);
EnhanceStats running_stats(ad::Tape& tape, const EnhanceParams& p);
ad::Var apply_enhance(ad::Var x, const EnhanceStats& stats, ad::Var gamma, ad::Var beta);

/// Training mode standardizes by batch statistics and folds them into the
/// running averages; inference mode uses the running averages. Training
/// needs at least two rows.
Matrix enhance(const Matrix& x, EnhanceParams& p, bool training);

struct Classifier {
  Matrix weight;  // d x C
  RowVector bias;  // 1 x C
};

ad::Var classify(ad::Var features, ad::Var weight, ad::Var bias);

struct QueryGroup {
  datagen::Sample query;
  Matrix gallery;  // n x d, modality opposite to the query
  Labels gallery_labels;
  Modality gallery_modality = Modality::kInfrared;
  int query_index = 0;  // position of the query in the batch
  int gallery_offset = 0;  // first batch row of the gallery half
};

/// Visible queries first (over the infrared half), then infrared queries.
std::vector<QueryGroup> build_groups(const datagen::TrainingBatch& batch);

struct TransferConfig {
  double tau_het = 0.2;
  double tau_hom = 0.4;
  int k = 4;
};

struct HetOut {
  ad::Var f_q;    // 1 x d
  ad::Var a_het;  // 1 x (n+1)
};

struct HomOut {
  ad::Var f;  // n x d
  ad::Var a;  // n x n
};

// Messages travel along `v_*`; affinities are computed from `a_*`. Passing the
// same variables for both gives the factual transfer; the counterfactual pass
// swaps in intervened affinity inputs while keeping the messages.
HetOut het(ad::Var v_query, ad::Var v_gallery, ad::Var a_query, ad::Var a_gallery, double tau,
           int k);
HomOut hom(ad::Var v_gallery, ad::Var a_gallery, double tau, int k);
// Single square graph over every row (the whole-batch baseline, or one group
// without the homogeneous/heterogeneous split).
HomOut single_graph(ad::Var v, ad::Var a, double tau, int k);

struct HetResult {
  RowVector f_q;
  Matrix a_het;
};

struct HomResult {
  Matrix f;
  Matrix a;
};

// Plain-matrix forms; enhancement uses the running statistics.
HetResult het_transfer(const RowVector& query, const Matrix& gallery, const EnhanceParams& p,
                       double tau_het, int k);
HomResult hom_transfer(const Matrix& gallery, const EnhanceParams& p, double tau_hom, int k);
HomResult gft_transfer(const datagen::TrainingBatch& batch, const EnhanceParams& p, double tau,
                       int k);

}  // namespace cift::h2ft
