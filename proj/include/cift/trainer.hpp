#pragma once

// Desk-scale end-to-end training: an affine backbone stand-in, the graph
// module, both classifiers and the intervention distribution, trained with the
// five-term objective by SGD.

#include "cift/cri.hpp"
#include "cift/datagen.hpp"
#include "cift/h2ft.hpp"
#include "cift/losses.hpp"
#include "cift/metrics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cift::trainer {

// Component switches in the order the ablation lattice enables them.
struct Ablation {
  bool gft = true;  // any graph transfer at all
  bool ubs = true;  // 1:n query groups instead of one whole-batch graph
  bool h2g = true;  // separate heterogeneous/homogeneous graphs per group
  bool cri = true;  // counterfactual intervention term
};

enum class GraphMode { kNone, kGft, kUbsGft, kH2ft };

// Throws ParameterError for combinations outside the lattice (ubs without
// gft, h2g without ubs, cri without gft).
GraphMode graph_mode(const Ablation& a);
std::string to_string(GraphMode m);

struct TrainConfig {
  int epochs = 12;
  int steps_per_epoch = 20;
  double lr_base = 0.05;
  int warmup_epochs = 1;
  std::vector<int> decay_epochs{6, 10};
  double decay_factor = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
  int k = 4;
  double tau_hom = 0.4;
  double tau_het = 0.2;
  Ablation ablation;
  std::uint64_t seed = 0;
  int mc_samples = 1;
  int batch_identities = 8;
  int batch_per_modality = 4;
  int embed_dim = 32;
  int train_identities = 0;  // 0: first half of the dataset's identities
  int eval_shots = 4;
  losses::LossWeightsConfig loss;

  void validate() const;
};

struct Affine {
  Matrix weight;  // d_in x d
  RowVector bias;
};

struct Model {
  Affine backbone;
  h2ft::EnhanceParams enhance;
  h2ft::Classifier backbone_classifier;
  h2ft::Classifier graph_classifier;
  cri::InterventionParams intervention;

  static Model init(int input_dim, int embed_dim, int num_classes, std::uint64_t seed);
  int input_dim() const { return static_cast<int>(backbone.weight.rows()); }
  int embed_dim() const { return static_cast<int>(backbone.weight.cols()); }
  int num_classes() const { return static_cast<int>(backbone_classifier.weight.cols()); }
  bool all_finite() const;
};

/// Learnable parameter groups in declaration order (running statistics are
/// buffers, not parameters).
inline constexpr int kNumParamGroups = 10;
const std::vector<std::string>& param_group_names();
// Row vectors are viewed as 1 x d matrices over the same storage.
std::vector<Eigen::Map<Matrix>> param_groups(Model& m);
std::vector<Eigen::Map<const Matrix>> param_groups(const Model& m);

/// Linear ramp 0 -> lr_base over the warmup steps, then lr_base times
/// decay_factor for every decay epoch already reached.
double lr_schedule(long step, const TrainConfig& cfg);

struct ForwardResult {
  losses::LossBreakdown breakdown;
  std::uint64_t signature = 0;
  std::vector<Matrix> grads;  // per parameter group, empty unless requested
  RowVector batch_mean;       // backbone feature statistics of the batch
  RowVector batch_var;
};

/// One forward pass (and backward when `with_grads`). `noise_seed` fixes the
/// intervention draws, so repeated calls with equal inputs agree exactly.
ForwardResult forward(const Model& model, const datagen::TrainingBatch& batch,
                      const TrainConfig& cfg, std::uint64_t noise_seed, bool with_grads);

struct SgdState {
  std::vector<Matrix> velocity;
};

/// Forward, backward and an SGD update with learning rate `lr`. Updates the
/// running statistics when the graph is active.
losses::LossBreakdown train_step(Model& model, SgdState& state, const datagen::TrainingBatch& batch,
                                 const TrainConfig& cfg, double lr, Rng& rng);

struct GroupCheck {
  std::string name;
  int checked = 0;
  int skipped = 0;  // perturbation crossed a piecewise boundary
  double max_rel_error = 0.0;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::vector<GroupCheck> groups;
};

/// Central differences against the analytic gradient on up to
/// `per_group` random entries of every parameter group. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
FiniteDiffReport finite_diff_check(const Model& model, const datagen::TrainingBatch& batch,
                                   const TrainConfig& cfg, double eps = 1e-5, int per_group = 200,
                                   std::uint64_t seed = 0);

struct Evaluation {
  metrics::RetrievalResult vis2ir;
  metrics::RetrievalResult ir2vis;
  metrics::QualityReport quality;
};

/// Retrieval in both directions on unbalanced scenarios (one query against
/// the whole gallery), plus affinity and margin quality.
Evaluation evaluate(const Model& model, const datagen::Dataset& test, const TrainConfig& cfg,
                    std::uint64_t seed);

struct Artifacts {
  Model model;
  std::vector<losses::LossBreakdown> losses;
  Evaluation evaluation;
};

/// Trains on the first cfg.train_identities identities, evaluates on the
/// rest. Writes the artifact files when `out_dir` is non-empty.
Artifacts run_experiment(const TrainConfig& cfg, const datagen::Dataset& dataset,
                         const std::string& out_dir = "");

// Little-endian model file: "CIFTMDL1", u32 input_dim, u32 embed_dim,
// u32 num_classes, then f64 arrays in param order (matrices row-major) with
// the enhancement running statistics and momentum after beta.
std::string serialize_model(const Model& m);
Model deserialize_model(const std::string& bytes);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace cift::trainer
