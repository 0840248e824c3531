#include "cift/h2ft.hpp"

#include "cift/affinity.hpp"

#include <array>
#include <cmath>

namespace cift::h2ft {

EnhanceParams EnhanceParams::identity(int dim) {
  EnhanceParams p;
  p.gamma = RowVector::Ones(dim);
  p.beta = RowVector::Zero(dim);
  p.running_mean = RowVector::Zero(dim);
  p.running_var = RowVector::Ones(dim);
  return p;
}

void EnhanceParams::validate() const {
  const auto d = gamma.size();
  if (beta.size() != d || running_mean.size() != d || running_var.size() != d) {
    throw ParameterError("EnhanceParams: vector lengths differ");
  }
  if ((running_var.array() <= 0.0).any()) throw ParameterError("EnhanceParams: running_var must be > 0");
  if (!gamma.allFinite() || !beta.allFinite()) throw ParameterError("EnhanceParams: non-finite affine");
  if (!(momentum > 0.0 && momentum < 1.0)) throw ParameterError("EnhanceParams: momentum outside (0,1)");
}

EnhanceStats batch_stats(ad::Var x) {
  if (x.rows() < 2) {
    throw DegenerateInputError("batch statistics need at least two rows, got " +
                               std::to_string(x.rows()));
  }
  ad::Var mu = ad::col_mean(x);
  ad::Var var = ad::col_mean(ad::square(ad::sub_row(x, mu)));
  return {mu, ad::rsqrt(ad::clamp_min(var, kVarianceFloor))};
}

EnhanceStats running_stats(ad::Tape& tape, const EnhanceParams& p) {
  Matrix inv = p.running_var.cwiseMax(kVarianceFloor).array().rsqrt().matrix();
  return {tape.constant(p.running_mean), tape.constant(std::move(inv))};
}

ad::Var apply_enhance(ad::Var x, const EnhanceStats& stats, ad::Var gamma, ad::Var beta) {
  return ad::add_row(ad::mul_row(ad::mul_row(ad::sub_row(x, stats.mean), stats.inv_std), gamma), beta);
}

Matrix enhance(const Matrix& x, EnhanceParams& p, bool training) {
  p.validate();
  if (x.rows() == 0) throw DegenerateInputError("enhance: empty input");
  if (x.cols() != p.dim()) throw ParameterError("enhance: feature dim differs from parameters");
  ad::Tape t;
  ad::Var xv = t.constant(x);
  ad::Var gamma = t.constant(p.gamma);
  ad::Var beta = t.constant(p.beta);
  if (!training) return apply_enhance(xv, running_stats(t, p), gamma, beta).value();

  EnhanceStats st = batch_stats(xv);
  Matrix out = apply_enhance(xv, st, gamma, beta).value();
  const RowVector batch_mean = st.mean.value();
  const RowVector batch_var = (x.rowwise() - batch_mean).array().square().colwise().mean().matrix();
  p.running_mean = (1.0 - p.momentum) * p.running_mean + p.momentum * batch_mean;
  p.running_var = (1.0 - p.momentum) * p.running_var + p.momentum * batch_var.cwiseMax(kVarianceFloor);
  return out;
}

ad::Var classify(ad::Var features, ad::Var weight, ad::Var bias) {
  return ad::add_row(ad::matmul(features, weight), bias);
}

std::vector<QueryGroup> build_groups(const datagen::TrainingBatch& batch) {
  const int n = batch.half();
  if (static_cast<int>(batch.samples.size()) != 2 * n || n < 1) {
    throw ParameterError("build_groups: batch does not hold n visible + n infrared samples");
  }
  std::array<Matrix, 2> halves;
  std::array<Labels, 2> half_labels;
  for (int h = 0; h < 2; ++h) {
    const std::vector<datagen::Sample> part(batch.samples.begin() + h * n,
                                            batch.samples.begin() + (h + 1) * n);
    halves[h] = datagen::features(part);
    half_labels[h] = datagen::labels(part);
  }
  std::vector<QueryGroup> groups;
  groups.reserve(static_cast<std::size_t>(2 * n));
  for (int i = 0; i < 2 * n; ++i) {
    const int qh = i < n ? 0 : 1;
    QueryGroup g;
    g.query = batch.samples[static_cast<std::size_t>(i)];
    g.gallery = halves[1 - qh];
    g.gallery_labels = half_labels[1 - qh];
    g.gallery_modality = qh == 0 ? Modality::kInfrared : Modality::kVisible;
    g.query_index = i;
    g.gallery_offset = (1 - qh) * n;
    groups.push_back(std::move(g));
  }
  return groups;
}

HetOut het(ad::Var v_query, ad::Var v_gallery, ad::Var a_query, ad::Var a_gallery, double tau,
           int k) {
  const std::array<ad::Var, 2> vs{v_query, v_gallery};
  const std::array<ad::Var, 2> as{a_query, a_gallery};
  ad::Var v_stack = ad::vstack(vs);
  ad::Var a_stack = ad::vstack(as);
  ad::Var a_het = affinity::affinity(a_query, a_stack, tau, k);
  return {ad::matmul(a_het, v_stack), a_het};
}

HomOut hom(ad::Var v_gallery, ad::Var a_gallery, double tau, int k) {
  ad::Var a = affinity::affinity(a_gallery, a_gallery, tau, k);
  return {ad::matmul(a, v_gallery), a};
}

HomOut single_graph(ad::Var v, ad::Var a, double tau, int k) { return hom(v, a, tau, k); }

HetResult het_transfer(const RowVector& query, const Matrix& gallery, const EnhanceParams& p,
                       double tau_het, int k) {
  p.validate();
  ad::Tape t;
  EnhanceStats st = running_stats(t, p);
  ad::Var gamma = t.constant(p.gamma), beta = t.constant(p.beta);
  ad::Var vq = apply_enhance(t.constant(query), st, gamma, beta);
  ad::Var vg = apply_enhance(t.constant(gallery), st, gamma, beta);
  HetOut out = het(vq, vg, vq, vg, tau_het, k);
  return {out.f_q.value(), out.a_het.value()};
}

HomResult hom_transfer(const Matrix& gallery, const EnhanceParams& p, double tau_hom, int k) {
  p.validate();
  ad::Tape t;
  EnhanceStats st = running_stats(t, p);
  ad::Var vg = apply_enhance(t.constant(gallery), st, t.constant(p.gamma), t.constant(p.beta));
  HomOut out = hom(vg, vg, tau_hom, k);
  return {out.f.value(), out.a.value()};
}

HomResult gft_transfer(const datagen::TrainingBatch& batch, const EnhanceParams& p, double tau,
                       int k) {
  p.validate();
  ad::Tape t;
  EnhanceStats st = running_stats(t, p);
  ad::Var v = apply_enhance(t.constant(datagen::features(batch.samples)), st, t.constant(p.gamma),
                            t.constant(p.beta));
  HomOut out = single_graph(v, v, tau, k);
  return {out.f.value(), out.a.value()};
}

}  // namespace cift::h2ft
