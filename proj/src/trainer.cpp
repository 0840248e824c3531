#include "cift/trainer.hpp"

#include "cift/affinity.hpp"
#include "cift/io.hpp"
#include "cift/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace cift::trainer {

GraphMode graph_mode(const Ablation& a) {
  if (a.ubs && !a.gft) throw ParameterError("ablation: ubs requires gft");
  if (a.h2g && !a.ubs) throw ParameterError("ablation: h2g requires ubs");
  if (a.cri && !a.gft) throw ParameterError("ablation: cri requires a graph (gft)");
  if (!a.gft) return GraphMode::kNone;
  if (!a.ubs) return GraphMode::kGft;
  return a.h2g ? GraphMode::kH2ft : GraphMode::kUbsGft;
}

std::string to_string(GraphMode m) {
  switch (m) {
    case GraphMode::kNone: return "backbone";
    case GraphMode::kGft: return "gft";
    case GraphMode::kUbsGft: return "gft+ubs";
    case GraphMode::kH2ft: return "h2ft";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 1 || steps_per_epoch < 1) throw ParameterError("epochs and steps_per_epoch must be >= 1");
  if (!(lr_base > 0.0)) throw ParameterError("lr_base must be > 0");
  if (warmup_epochs < 0) throw ParameterError("warmup_epochs must be >= 0");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw ParameterError("decay_factor must lie in (0, 1)");
  for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= decay_epochs[i - 1]) throw ParameterError("decay_epochs must be strictly increasing");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ParameterError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ParameterError("weight_decay must be >= 0");
  if (k < 1) throw ParameterError("k must be >= 1");
  if (!(tau_hom > 0.0) || !(tau_het > 0.0)) throw ParameterError("temperatures must be > 0");
  if (mc_samples < 1) throw ParameterError("mc_samples must be >= 1");
  if (batch_identities < 2 || batch_per_modality < 1) {
    throw ParameterError("batch needs >= 2 identities and >= 1 sample per modality");
  }
  if (embed_dim < 2) throw ParameterError("embed_dim must be >= 2");
  if (train_identities < 0) throw ParameterError("train_identities must be >= 0");
  if (eval_shots < 1) throw ParameterError("eval_shots must be >= 1");
  loss.validate();
  const GraphMode mode = graph_mode(ablation);
  const int n = batch_identities * batch_per_modality;
  if (mode == GraphMode::kGft && k > 2 * n) throw ParameterError("k exceeds the batch size");
  if (mode == GraphMode::kUbsGft && k > n + 1) throw ParameterError("k exceeds the group size");
  if (mode == GraphMode::kH2ft && k > n) throw ParameterError("k exceeds the gallery size of a group");
}

Model Model::init(int input_dim, int embed_dim, int num_classes, std::uint64_t seed) {
  if (input_dim < 1 || embed_dim < 2 || num_classes < 2) throw ParameterError("Model::init: bad dimensions");
  Rng root(seed);
  Rng wr = root.split(1), cb = root.split(2), cg = root.split(3);
  Model m;
  const double ws = 1.0 / std::sqrt(static_cast<double>(input_dim));
  m.backbone.weight.resize(input_dim, embed_dim);
  for (int i = 0; i < input_dim; ++i)
    for (int j = 0; j < embed_dim; ++j) m.backbone.weight(i, j) = ws * wr.normal();
  m.backbone.bias = RowVector::Zero(embed_dim);
  m.enhance = h2ft::EnhanceParams::identity(embed_dim);
  auto init_cls = [&](Rng& r) {
    h2ft::Classifier c;
    c.weight.resize(embed_dim, num_classes);
    for (int i = 0; i < embed_dim; ++i)
      for (int j = 0; j < num_classes; ++j) c.weight(i, j) = 0.01 * r.normal();
    c.bias = RowVector::Zero(num_classes);
    return c;
  };
  m.backbone_classifier = init_cls(cb);
  m.graph_classifier = init_cls(cg);
  m.intervention = cri::InterventionParams::standard(embed_dim);
  return m;
}

bool Model::all_finite() const {
  for (const auto& p : param_groups(*this)) {
    if (!p.allFinite()) return false;
  }
  return enhance.running_mean.allFinite() && enhance.running_var.allFinite();
}

const std::vector<std::string>& param_group_names() {
  static const std::vector<std::string> names{
      "backbone.weight",          "backbone.bias",          "enhance.gamma",
      "enhance.beta",             "backbone_classifier.weight", "backbone_classifier.bias",
      "graph_classifier.weight",  "graph_classifier.bias",  "intervention.mu",
      "intervention.log_sigma"};
  return names;
}

namespace {

Eigen::Map<Matrix> view(Matrix& m) { return {m.data(), m.rows(), m.cols()}; }
Eigen::Map<Matrix> view(RowVector& r) { return {r.data(), 1, r.size()}; }
Eigen::Map<const Matrix> view(const Matrix& m) { return {m.data(), m.rows(), m.cols()}; }
Eigen::Map<const Matrix> view(const RowVector& r) { return {r.data(), 1, r.size()}; }

template <class M, class Out>
Out groups_of(M& m) {
  return {view(m.backbone.weight),          view(m.backbone.bias),
          view(m.enhance.gamma),            view(m.enhance.beta),
          view(m.backbone_classifier.weight), view(m.backbone_classifier.bias),
          view(m.graph_classifier.weight),  view(m.graph_classifier.bias),
          view(m.intervention.mu),          view(m.intervention.log_sigma)};
}

}  // namespace

std::vector<Eigen::Map<Matrix>> param_groups(Model& m) {
  return groups_of<Model, std::vector<Eigen::Map<Matrix>>>(m);
}

std::vector<Eigen::Map<const Matrix>> param_groups(const Model& m) {
  return groups_of<const Model, std::vector<Eigen::Map<const Matrix>>>(m);
}

double lr_schedule(long step, const TrainConfig& cfg) {
  if (step < 0) throw ParameterError("lr_schedule: negative step");
  const long warmup = static_cast<long>(cfg.warmup_epochs) * cfg.steps_per_epoch;
  if (step < warmup) return cfg.lr_base * static_cast<double>(step) / static_cast<double>(warmup);
  const long epoch = step / cfg.steps_per_epoch;
  double lr = cfg.lr_base;
  for (int d : cfg.decay_epochs) {
    if (d <= epoch) lr *= cfg.decay_factor;
  }
  return lr;
}

namespace {

struct Params {
  ad::Var w, b, gamma, beta, wb, bb, wg, bg, mu, log_sigma;
  std::array<ad::Var, kNumParamGroups> all() const {
    return {w, b, gamma, beta, wb, bb, wg, bg, mu, log_sigma};
  }
};

Params make_params(ad::Tape& t, const Model& m, bool trainable) {
  auto mk = [&](const Matrix& v) { return trainable ? t.parameter(v) : t.constant(v); };
  const auto g = param_groups(m);
  return {mk(g[0]), mk(g[1]), mk(g[2]), mk(g[3]), mk(g[4]),
          mk(g[5]), mk(g[6]), mk(g[7]), mk(g[8]), mk(g[9])};
}

h2ft::TransferConfig transfer_of(const TrainConfig& cfg) {
  h2ft::TransferConfig tc;
  tc.tau_het = cfg.tau_het;
  tc.tau_hom = cfg.tau_hom;
  tc.k = cfg.k;
  return tc;
}

struct GraphRows {
  ad::Var logits;
  Labels labels;
};

// Rows [query; gallery] of group i, as batch row indices.
std::vector<int> group_rows(int i, int n) {
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(n + 1));
  rows.push_back(i);
  const int off = i < n ? n : 0;
  for (int j = 0; j < n; ++j) rows.push_back(off + j);
  return rows;
}

// Graph logits for every group (or the whole batch for kGft). `a` supplies
// the affinity inputs; when `a_per_group` is set it holds one (n+1)-row
// matrix per group instead of batch-aligned rows.
ad::Var graph_logits(GraphMode mode, ad::Var v, ad::Var a, const std::vector<ad::Var>* a_per_group,
                     const TrainConfig& cfg, const Params& p) {
  const int n = static_cast<int>(v.rows()) / 2;
  const h2ft::TransferConfig tc = transfer_of(cfg);
  if (mode == GraphMode::kGft) {
    return h2ft::classify(h2ft::single_graph(v, a, cfg.tau_hom, cfg.k).f, p.wg, p.bg);
  }
  std::vector<ad::Var> parts;
  parts.reserve(static_cast<std::size_t>(2 * n));
  if (mode == GraphMode::kUbsGft || a_per_group != nullptr) {
    for (int i = 0; i < 2 * n; ++i) {
      const std::vector<int> rows = group_rows(i, n);
      ad::Var vs = ad::gather_rows(v, rows);
      ad::Var as = a_per_group ? (*a_per_group)[static_cast<std::size_t>(i)] : ad::gather_rows(a, rows);
      parts.push_back(cri::group_logits(vs, as, tc, mode == GraphMode::kH2ft, p.wg, p.bg));
    }
    return ad::vstack(parts);
  }
  // Factual H2FT: the homogeneous output of each half is shared by the n
  // groups that use it as gallery.
  std::array<ad::Var, 2> v_half{ad::slice_rows(v, 0, n), ad::slice_rows(v, n, n)};
  std::array<ad::Var, 2> a_half{ad::slice_rows(a, 0, n), ad::slice_rows(a, n, n)};
  std::array<ad::Var, 2> hom_out;
  for (int h = 0; h < 2; ++h) hom_out[h] = h2ft::hom(v_half[h], a_half[h], cfg.tau_hom, cfg.k).f;
  for (int i = 0; i < 2 * n; ++i) {
    const int g = i < n ? 1 : 0;
    h2ft::HetOut het = h2ft::het(ad::slice_rows(v, i, 1), v_half[g], ad::slice_rows(a, i, 1),
                                 a_half[g], cfg.tau_het, cfg.k);
    parts.push_back(h2ft::classify(het.f_q, p.wg, p.bg));
    parts.push_back(h2ft::classify(hom_out[g], p.wg, p.bg));
  }
  return ad::vstack(parts);
}

Labels graph_labels(GraphMode mode, const Labels& y) {
  if (mode == GraphMode::kGft) return y;
  const int n = static_cast<int>(y.size()) / 2;
  Labels out;
  out.reserve(static_cast<std::size_t>(2 * n * (n + 1)));
  for (int i = 0; i < 2 * n; ++i) {
    for (int r : group_rows(i, n)) out.push_back(y[static_cast<std::size_t>(r)]);
  }
  return out;
}

}  // namespace

ForwardResult forward(const Model& model, const datagen::TrainingBatch& batch, const TrainConfig& cfg,
                      std::uint64_t noise_seed, bool with_grads) {
  const GraphMode mode = graph_mode(cfg.ablation);
  const Matrix x = datagen::features(batch.samples);
  const Labels y = datagen::labels(batch.samples);
  if (x.cols() != model.input_dim()) throw ParameterError("forward: batch dim differs from the model");
  for (int label : y) {
    if (label < 0 || label >= model.num_classes()) throw ParameterError("forward: label outside the classifier");
  }
  ad::Tape t;
  const Params p = make_params(t, model, with_grads);
  ad::Var xv = t.constant(x);
  ad::Var fb = ad::add_row(ad::matmul(xv, p.w), p.b);
  ad::Var yb = h2ft::classify(fb, p.wb, p.bb);
  const auto& lc = cfg.loss;
  ad::Var ce_b = losses::cross_entropy(yb, y);
  ad::Var me_b = ad::add(losses::hcc_loss(fb, y, Distance::kEuclidean, lc.rho_eu, lc.include_anchor),
                         losses::hcc_loss(yb, y, Distance::kKL, lc.rho_kl, lc.include_anchor));
  ad::Var ce_g = t.constant(Matrix::Zero(1, 1));
  ad::Var me_g = ce_g;
  ad::Var tie = ce_g;

  ForwardResult r;
  if (mode != GraphMode::kNone) {
    h2ft::EnhanceStats stats = h2ft::batch_stats(fb);
    r.batch_mean = stats.mean.value();
    r.batch_var = (fb.value().rowwise() - r.batch_mean).array().square().colwise().mean().matrix();
    ad::Var v = h2ft::apply_enhance(fb, stats, p.gamma, p.beta);
    ad::Var yg = graph_logits(mode, v, v, nullptr, cfg, p);
    const Labels yl = graph_labels(mode, y);
    ce_g = losses::cross_entropy(yg, yl);
    me_g = losses::hcc_loss(yg, yl, Distance::kKL, lc.rho_kl, lc.include_anchor);
    if (cfg.ablation.cri) {
      const int n2 = static_cast<int>(x.rows());
      const int d = model.embed_dim();
      const Rng root(noise_seed);
      ad::Var cf_sum;
      for (int s = 0; s < cfg.mc_samples; ++s) {
        Rng rng = root.split(static_cast<std::uint64_t>(s));
        auto star = [&](int rows) {
          ad::Var z = t.constant(cri::draw_noise(rows, d, rng));
          return h2ft::apply_enhance(cri::intervened(z, p.mu, p.log_sigma), stats, p.gamma, p.beta);
        };
        ad::Var ycf;
        if (mode == GraphMode::kGft) {
          ycf = graph_logits(mode, v, star(n2), nullptr, cfg, p);
        } else {
          std::vector<ad::Var> a_groups;
          a_groups.reserve(static_cast<std::size_t>(n2));
          for (int i = 0; i < n2; ++i) a_groups.push_back(star(n2 / 2 + 1));
          ycf = graph_logits(mode, v, v, &a_groups, cfg, p);
        }
        cf_sum = s == 0 ? ycf : ad::add(cf_sum, ycf);
      }
      ad::Var cf_mean = ad::scale(cf_sum, 1.0 / cfg.mc_samples);
      tie = losses::cross_entropy(cri::tie(yg, cf_mean), yl);
    }
  }
  r.breakdown = losses::total_loss(ce_b.scalar(), me_b.scalar(), ce_g.scalar(), me_g.scalar(), tie.scalar());
  if (with_grads) {
    ad::Var total = ad::add(ad::add(ad::add(ce_b, me_b), ad::add(ce_g, me_g)), tie);
    t.backward(total);
    for (const ad::Var& v : p.all()) r.grads.push_back(t.grad(v));
  }
  r.signature = t.signature();
  return r;
}

losses::LossBreakdown train_step(Model& model, SgdState& state, const datagen::TrainingBatch& batch,
                                 const TrainConfig& cfg, double lr, Rng& rng) {
  const std::uint64_t noise_seed = rng.engine()();
  ForwardResult r = forward(model, batch, cfg, noise_seed, true);
  auto params = param_groups(model);
  if (state.velocity.empty()) {
    for (const auto& g : params) state.velocity.push_back(Matrix::Zero(g.rows(), g.cols()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix g = r.grads[i];
    if (cfg.weight_decay > 0.0) g += cfg.weight_decay * Matrix(params[i]);
    state.velocity[i] = cfg.momentum * state.velocity[i] + g;
    params[i] -= lr * state.velocity[i];
  }
  if (graph_mode(cfg.ablation) != GraphMode::kNone) {
    auto& e = model.enhance;
    e.running_mean = (1.0 - e.momentum) * e.running_mean + e.momentum * r.batch_mean;
    e.running_var = (1.0 - e.momentum) * e.running_var + e.momentum * r.batch_var.cwiseMax(h2ft::kVarianceFloor);
  }
  if (!model.all_finite()) throw NumericalError("train_step: parameters became non-finite");
  return r.breakdown;
}

FiniteDiffReport finite_diff_check(const Model& model, const datagen::TrainingBatch& batch,
                                   const TrainConfig& cfg, double eps, int per_group, std::uint64_t seed) {
  if (!(eps > 0.0) || per_group < 1) throw ParameterError("finite_diff_check: eps and per_group must be > 0");
  Rng rng(seed);
  const std::uint64_t noise_seed = rng.engine()();
  const ForwardResult base = forward(model, batch, cfg, noise_seed, true);
  FiniteDiffReport rep;
  Model probe = model;
  auto params = param_groups(probe);
  for (int gi = 0; gi < kNumParamGroups; ++gi) {
    GroupCheck gc;
    gc.name = param_group_names()[static_cast<std::size_t>(gi)];
    auto& p = params[static_cast<std::size_t>(gi)];
    const Matrix& grad = base.grads[static_cast<std::size_t>(gi)];
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    if (static_cast<int>(idx.size()) > per_group) idx.resize(static_cast<std::size_t>(per_group));
    for (Eigen::Index e : idx) {
      double* slot = p.data() + e;
      const double orig = *slot;
      *slot = orig + eps;
      const ForwardResult plus = forward(probe, batch, cfg, noise_seed, false);
      *slot = orig - eps;
      const ForwardResult minus = forward(probe, batch, cfg, noise_seed, false);
      *slot = orig;
      if (plus.signature != base.signature || minus.signature != base.signature) {
        ++gc.skipped;
        continue;
      }
      const double num = (plus.breakdown.total - minus.breakdown.total) / (2.0 * eps);
      const double ana = grad.data()[e];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8});
      gc.max_rel_error = std::max(gc.max_rel_error, rel);
      ++gc.checked;
    }
    rep.max_rel_error = std::max(rep.max_rel_error, gc.max_rel_error);
    rep.groups.push_back(gc);
  }
  return rep;
}

namespace {

Matrix cosine_distance(const Matrix& q, const Matrix& g) {
  return (Matrix::Ones(q.rows(), g.rows()) - affinity::cosine_similarity(q, g)).eval();
}

Matrix backbone_features(const Model& m, const Matrix& x) {
  return (x * m.backbone.weight).rowwise() + m.backbone.bias;
}

Matrix enhanced(const Model& m, const Matrix& f) {
  ad::Tape t;
  return h2ft::apply_enhance(t.constant(f), h2ft::running_stats(t, m.enhance), t.constant(m.enhance.gamma),
                             t.constant(m.enhance.beta))
      .value();
}

struct DirectionOut {
  metrics::RetrievalResult retrieval;
  double error_ratio = 0.0;
};

DirectionOut evaluate_direction(const Model& model, const datagen::Dataset& test, const TrainConfig& cfg,
                                Modality qm, std::uint64_t seed) {
  const GraphMode mode = graph_mode(cfg.ablation);
  const datagen::InferenceScenario sc = datagen::make_inference_scenario(test, qm, cfg.eval_shots, seed);
  const Labels ql = datagen::labels(sc.queries), gl = datagen::labels(sc.gallery);
  const Matrix fq = backbone_features(model, datagen::features(sc.queries));
  const Matrix fg = backbone_features(model, datagen::features(sc.gallery));
  DirectionOut out;
  if (mode == GraphMode::kNone) {
    out.retrieval = metrics::cmc_map(cosine_distance(fq, fg), ql, gl);
    out.error_ratio = metrics::affinity_error_ratio(affinity::cosine_similarity(fq, fg), ql, gl, cfg.eval_shots);
    return out;
  }
  const Matrix vq = enhanced(model, fq), vg = enhanced(model, fg);
  // Row-normalized exp(cos / tau) keeps the order of cos, so the ranking of
  // the dense affinity equals the ranking of the similarities.
  out.error_ratio = metrics::affinity_error_ratio(affinity::cosine_similarity(vq, vg), ql, gl, cfg.eval_shots);
  const int nq = static_cast<int>(vq.rows());
  Matrix dist(nq, vg.rows());
  if (mode == GraphMode::kH2ft) {
    ad::Tape t;
    ad::Var g = t.constant(vg);
    const Matrix tg = h2ft::hom(g, g, cfg.tau_hom, cfg.k).f.value();
    parallel_for(static_cast<std::size_t>(nq), [&](std::size_t i) {
      ad::Tape tq;
      ad::Var q = tq.constant(vq.row(static_cast<Eigen::Index>(i)));
      ad::Var gv = tq.constant(vg);
      const Matrix fqi = h2ft::het(q, gv, q, gv, cfg.tau_het, cfg.k).f_q.value();
      dist.row(static_cast<Eigen::Index>(i)) = cosine_distance(fqi, tg);
    });
  } else {
    parallel_for(static_cast<std::size_t>(nq), [&](std::size_t i) {
      Matrix stack(vg.rows() + 1, vg.cols());
      stack.row(0) = vq.row(static_cast<Eigen::Index>(i));
      stack.bottomRows(vg.rows()) = vg;
      ad::Tape tq;
      ad::Var s = tq.constant(stack);
      const Matrix f = h2ft::single_graph(s, s, cfg.tau_hom, cfg.k).f.value();
      dist.row(static_cast<Eigen::Index>(i)) = cosine_distance(f.topRows(1), f.bottomRows(vg.rows()));
    });
  }
  out.retrieval = metrics::cmc_map(dist, ql, gl);
  return out;
}

}  // namespace

Evaluation evaluate(const Model& model, const datagen::Dataset& test, const TrainConfig& cfg,
                    std::uint64_t seed) {
  cfg.validate();
  test.validate();
  if (test.dim != model.input_dim()) throw ParameterError("evaluate: dataset dim differs from the model");
  const GraphMode mode = graph_mode(cfg.ablation);
  const Rng root(seed);
  Evaluation ev;
  const DirectionOut a = evaluate_direction(model, test, cfg, Modality::kVisible, root.split(1).seed());
  const DirectionOut b = evaluate_direction(model, test, cfg, Modality::kInfrared, root.split(2).seed());
  ev.vis2ir = a.retrieval;
  ev.ir2vis = b.retrieval;
  ev.quality.affinity_error_ratio = 0.5 * (a.error_ratio + b.error_ratio);

  for (Modality m : {Modality::kVisible, Modality::kInfrared}) {
    std::vector<datagen::Sample> part;
    for (const auto& s : test.samples) {
      if (s.modality == m) part.push_back(s);
    }
    const Labels l = datagen::labels(part);
    Matrix v = backbone_features(model, datagen::features(part));
    if (mode != GraphMode::kNone) v = enhanced(model, v);
    // Dense rows: with top-k sparsification every class larger than k would
    // tie its dropped positives with the zeroed negatives.
    const int k = static_cast<int>(v.rows());
    ad::Tape t;
    ad::Var vv = t.constant(v);
    const Matrix aff = affinity::affinity(vv, vv, cfg.tau_hom, k).value();
    const Matrix yv = aff * v;
    ev.quality.q_x += 0.5 * metrics::margin_quality(v, l);
    ev.quality.q_y += 0.5 * metrics::margin_quality(yv, l);
    ev.quality.q_a += 0.5 * metrics::affinity_quality(aff, l);
  }
  return ev;
}

Artifacts run_experiment(const TrainConfig& cfg, const datagen::Dataset& dataset, const std::string& out_dir) {
  cfg.validate();
  dataset.validate();
  const int train_ids = cfg.train_identities > 0 ? cfg.train_identities : dataset.num_identities / 2;
  if (train_ids < 2 || train_ids >= dataset.num_identities) {
    throw ParameterError("run_experiment: train_identities must leave at least two identities on each side");
  }
  auto [train, test] = datagen::split_identities(dataset, train_ids);
  if (cfg.batch_identities > train.num_identities) {
    throw CapacityError("run_experiment: batch_identities exceeds the training identities");
  }
  const Rng root(cfg.seed);
  Artifacts art;
  art.model = Model::init(dataset.dim, cfg.embed_dim, train.num_identities, root.split(1).seed());
  art.model.intervention.num_mc_samples = cfg.mc_samples;
  SgdState state;
  Rng step_rng = root.split(2);
  const Rng batch_root = root.split(3);
  const long steps = static_cast<long>(cfg.epochs) * cfg.steps_per_epoch;
  for (long s = 0; s < steps; ++s) {
    const datagen::TrainingBatch batch = datagen::sample_training_batch(
        train, cfg.batch_identities, cfg.batch_per_modality, batch_root.split(static_cast<std::uint64_t>(s)).seed());
    art.losses.push_back(train_step(art.model, state, batch, cfg, lr_schedule(s, cfg), step_rng));
  }
  art.evaluation = evaluate(art.model, test, cfg, root.split(4).seed());

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    std::ostringstream csv;
    csv << losses::csv_header() << '\n';
    for (std::size_t i = 0; i < art.losses.size(); ++i) csv << losses::csv_row(static_cast<long>(i), art.losses[i]) << '\n';
    io::write_text((dir / "losses.csv").string(), csv.str());
    io::write_text((dir / "quality.json").string(), metrics::to_json(art.evaluation.quality) + "\n");
    io::write_text((dir / "retrieval_vis2ir.json").string(), metrics::to_json(art.evaluation.vis2ir) + "\n");
    io::write_text((dir / "retrieval_ir2vis.json").string(), metrics::to_json(art.evaluation.ir2vis) + "\n");
    save_model(art.model, (dir / "model.bin").string());
  }
  return art;
}

namespace {

constexpr char kMagic[8] = {'C', 'I', 'F', 'T', 'M', 'D', 'L', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_rows(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
}

void put_vec(std::string& out, const RowVector& v) {
  for (Eigen::Index j = 0; j < v.size(); ++j) put_f64(out, v(j));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  std::uint64_t bytes(int n) {
    if (pos_ + static_cast<std::size_t>(n) > s_.size()) throw FormatError("model file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(bytes(8)); }
  void rows(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
  }
  void vec(RowVector& v) {
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = f64();
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t pos_ = 8;
};

}  // namespace

std::string serialize_model(const Model& m) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(m.input_dim()));
  put_u32(out, static_cast<std::uint32_t>(m.embed_dim()));
  put_u32(out, static_cast<std::uint32_t>(m.num_classes()));
  put_rows(out, m.backbone.weight);
  put_vec(out, m.backbone.bias);
  put_vec(out, m.enhance.gamma);
  put_vec(out, m.enhance.beta);
  put_vec(out, m.enhance.running_mean);
  put_vec(out, m.enhance.running_var);
  put_f64(out, m.enhance.momentum);
  put_rows(out, m.backbone_classifier.weight);
  put_vec(out, m.backbone_classifier.bias);
  put_rows(out, m.graph_classifier.weight);
  put_vec(out, m.graph_classifier.bias);
  put_vec(out, m.intervention.mu);
  put_vec(out, m.intervention.log_sigma);
  return out;
}

Model deserialize_model(const std::string& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a model file (bad magic)");
  }
  Reader r(bytes);
  const auto din = static_cast<Eigen::Index>(r.bytes(4));
  const auto d = static_cast<Eigen::Index>(r.bytes(4));
  const auto c = static_cast<Eigen::Index>(r.bytes(4));
  if (din < 1 || d < 1 || c < 1 || din > (1 << 20) || d > (1 << 20) || c > (1 << 20)) {
    throw FormatError("model file has implausible dimensions");
  }
  Model m;
  m.backbone.weight.resize(din, d);
  r.rows(m.backbone.weight);
  m.backbone.bias.resize(d);
  r.vec(m.backbone.bias);
  for (RowVector* v : {&m.enhance.gamma, &m.enhance.beta, &m.enhance.running_mean, &m.enhance.running_var}) {
    v->resize(d);
    r.vec(*v);
  }
  m.enhance.momentum = r.f64();
  for (h2ft::Classifier* cl : {&m.backbone_classifier, &m.graph_classifier}) {
    cl->weight.resize(d, c);
    r.rows(cl->weight);
    cl->bias.resize(c);
    r.vec(cl->bias);
  }
  m.intervention.mu.resize(d);
  r.vec(m.intervention.mu);
  m.intervention.log_sigma.resize(d);
  r.vec(m.intervention.log_sigma);
  if (!r.done()) throw FormatError("model file has trailing bytes");
  return m;
}

void save_model(const Model& m, const std::string& path) { io::write_text(path, serialize_model(m)); }

Model load_model(const std::string& path) { return deserialize_model(io::read_text(path)); }

}  // namespace cift::trainer
