#include "cift/cri.hpp"

#include "cift/affinity.hpp"
#include "cift/losses.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace cift;

namespace {

cri::GraphHead make_head(int d, int classes, Rng& rng, bool heterogeneous = true) {
  cri::GraphHead h;
  h.enhance = h2ft::EnhanceParams::identity(d);
  h.enhance.running_mean = testing::random_matrix(1, d, rng, 0.1);
  h.enhance.running_var = testing::random_matrix(1, d, rng).cwiseAbs().array() + 0.5;
  h.enhance.gamma = testing::random_matrix(1, d, rng, 0.2).array() + 1.0;
  h.enhance.beta = testing::random_matrix(1, d, rng, 0.2);
  h.classifier.weight = testing::random_matrix(d, classes, rng);
  h.classifier.bias = testing::random_matrix(1, classes, rng);
  h.transfer.k = 3;
  h.heterogeneous = heterogeneous;
  return h;
}

h2ft::QueryGroup make_group(int n, int d, Rng& rng) {
  h2ft::QueryGroup g;
  g.query.feature = testing::random_matrix(1, d, rng);
  g.query.identity = 0;
  g.gallery = testing::random_matrix(n, d, rng);
  g.gallery_labels = testing::cyclic_labels(n, 3);
  return g;
}

}  // namespace

TEST_CASE("intervened samples") {
  RowVector mu(3);
  mu << 1.0, -2.0, 0.5;
  const auto tiny = cri::InterventionParams::from_sigma(mu, RowVector::Constant(3, 1e-300));
  Rng rng(1);
  const Matrix x = cri::sample_intervened(tiny, 4, 3, rng);
  for (int i = 0; i < 4; ++i) CHECK(x.row(i) == mu);

  RowVector sigma(3);
  sigma << 0.5, 2.0, 1.0;
  const auto ip = cri::InterventionParams::from_sigma(mu, sigma);
  Rng r2(2);
  const int n = 100000;
  const Matrix big = cri::sample_intervened(ip, n, 3, r2);
  const RowVector mean = big.colwise().mean();
  for (int j = 0; j < 3; ++j) CHECK(std::abs(mean(j) - mu(j)) < 3.0 * sigma(j) / std::sqrt(double(n)) * 1.5);

  Rng a(7), b(7);
  CHECK(cri::sample_intervened(ip, 5, 3, a) == cri::sample_intervened(ip, 5, 3, b));

  CHECK_THROWS_AS(cri::InterventionParams::from_sigma(mu, RowVector::Zero(3)), ParameterError);
  RowVector neg = sigma;
  neg(1) = -1.0;
  CHECK_THROWS_AS(cri::InterventionParams::from_sigma(mu, neg), ParameterError);
}

TEST_CASE("null intervention reproduces the factual output exactly") {
  Rng rng(3);
  for (bool het : {true, false}) {
    const auto head = make_head(4, 5, rng, het);
    for (int trial = 0; trial < 20; ++trial) {
      const auto g = make_group(6, 4, rng);
      const Matrix fact = cri::factual_output(g, head);
      const Matrix cf = cri::counterfactual_output_from(g, head, cri::group_inputs(g));
      CHECK(fact == cf);
      CHECK(cri::tie(fact, cf).isZero(0.0));
    }
  }
}

TEST_CASE("counterfactual output matches the manual composition") {
  Rng rng(4);
  const auto head = make_head(4, 5, rng);
  const auto g = make_group(6, 4, rng);
  const Matrix x = cri::group_inputs(g);
  const Matrix xs = testing::random_matrix(7, 4, rng);
  auto p = head.enhance;
  const Matrix vx = h2ft::enhance(x, p, false), vs = h2ft::enhance(xs, p, false);
  const auto& tc = head.transfer;
  const Matrix a_het = affinity::row_normalize(affinity::topk_filter(
      affinity::temperature_exp(affinity::cosine_similarity(vs.topRows(1), vs), tc.tau_het), tc.k));
  const Matrix a_hom = affinity::row_normalize(affinity::topk_filter(
      affinity::temperature_exp(affinity::cosine_similarity(vs.bottomRows(6), vs.bottomRows(6)), tc.tau_hom), tc.k));
  Matrix f(7, 4);
  f.topRows(1) = a_het * vx;
  f.bottomRows(6) = a_hom * vx.bottomRows(6);
  const Matrix expect = (f * head.classifier.weight).rowwise() + head.classifier.bias;
  CHECK((cri::counterfactual_output_from(g, head, xs) - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(cri::counterfactual_output_from(g, head, xs.topRows(3)), ParameterError);
}

TEST_CASE("factual path equals transfer followed by classification") {
  Rng rng(5);
  const auto head = make_head(4, 3, rng);
  const auto g = make_group(5, 4, rng);
  const auto het = h2ft::het_transfer(g.query.feature, g.gallery, head.enhance, head.transfer.tau_het, head.transfer.k);
  const auto hom = h2ft::hom_transfer(g.gallery, head.enhance, head.transfer.tau_hom, head.transfer.k);
  Matrix f(6, 4);
  f.topRows(1) = het.f_q;
  f.bottomRows(5) = hom.f;
  ad::Tape t;
  const Matrix expect =
      h2ft::classify(t.constant(f), t.constant(head.classifier.weight), t.constant(head.classifier.bias)).value();
  CHECK(cri::factual_output(g, head) == expect);
}

TEST_CASE("Monte-Carlo mean over draws") {
  Rng rng(6);
  const auto head = make_head(4, 3, rng);
  const auto g = make_group(5, 4, rng);
  auto ip = cri::InterventionParams::standard(4, 2);
  Rng r(10), manual(10);
  const Matrix two = cri::counterfactual_output(g, head, ip, r);
  const Matrix x1 = cri::sample_intervened(ip, 6, 4, manual);
  const Matrix x2 = cri::sample_intervened(ip, 6, 4, manual);
  const Matrix expect =
      (cri::counterfactual_output_from(g, head, x1) + cri::counterfactual_output_from(g, head, x2)) / 2.0;
  CHECK(two == expect);

  // Degenerate sigma makes every draw identical, so one and two samples agree.
  RowVector mu = testing::random_matrix(1, 4, rng);
  auto same1 = cri::InterventionParams::from_sigma(mu, RowVector::Constant(4, 1e-300), 1);
  auto same2 = cri::InterventionParams::from_sigma(mu, RowVector::Constant(4, 1e-300), 2);
  Rng a(3), b(4);
  CHECK(cri::counterfactual_output(g, head, same1, a) == cri::counterfactual_output(g, head, same2, b));
}

TEST_CASE("total indirect effect") {
  Rng rng(7);
  const Matrix m = testing::random_matrix(3, 4, rng);
  CHECK(cri::tie(m, m).isZero(0.0));
  CHECK(cri::tie(m, Matrix::Zero(3, 4)) == m);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = testing::random_matrix(3, 4, rng), b = testing::random_matrix(3, 4, rng);
    CHECK(cri::tie(a, b) == -cri::tie(b, a));
  }
  CHECK_THROWS_AS(cri::tie(m, Matrix::Zero(3, 3)), ParameterError);

  const auto head = make_head(4, 3, rng);
  const auto g = make_group(5, 4, rng);
  Rng r(1);
  const auto out = cri::total_indirect_effect(g, head, cri::InterventionParams::standard(4), r);
  CHECK(out.y_tie == out.y_factual - out.y_counterfactual_mean);
}

TEST_CASE("intervention loss") {
  const Labels l{0, 1, 2, 1};
  CHECK(cri::tie_loss(Matrix::Zero(4, 5), l) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  Matrix peaked = Matrix::Zero(4, 5);
  for (int i = 0; i < 4; ++i) peaked(i, l[static_cast<std::size_t>(i)]) = 1e3;
  CHECK(cri::tie_loss(peaked, l) < 1e-12);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix y = testing::random_matrix(4, 5, rng, 3.0);
    CHECK(std::abs(cri::tie_loss(y, l) - testing::reference_ce(y, l)) < 1e-10);
  }
  CHECK_THROWS_AS(cri::tie_loss(Matrix::Zero(4, 2), l), ParameterError);
}

TEST_CASE("intervention gradients flow and match finite differences") {
  Rng rng(9);
  const auto head = make_head(4, 3, rng);
  const auto g = make_group(6, 4, rng);
  const Labels labels{0, 0, 1, 2, 0, 1, 2};
  const Matrix z = testing::random_matrix(7, 4, rng);
  const Matrix x = cri::group_inputs(g);
  RowVector mu = testing::random_matrix(1, 4, rng, 0.3);
  RowVector ls = testing::random_matrix(1, 4, rng, 0.3);

  auto loss = [&](const Matrix& mu_m, const Matrix& ls_m, Matrix* gmu, Matrix* gls, std::uint64_t* sig) {
    ad::Tape t;
    ad::Var vmu = gmu ? t.parameter(mu_m) : t.constant(mu_m);
    ad::Var vls = gls ? t.parameter(ls_m) : t.constant(ls_m);
    const auto st = h2ft::running_stats(t, head.enhance);
    ad::Var gamma = t.constant(head.enhance.gamma), beta = t.constant(head.enhance.beta);
    ad::Var w = t.constant(head.classifier.weight), b = t.constant(head.classifier.bias);
    ad::Var v = h2ft::apply_enhance(t.constant(x), st, gamma, beta);
    ad::Var a = h2ft::apply_enhance(cri::intervened(t.constant(z), vmu, vls), st, gamma, beta);
    ad::Var yf = cri::group_logits(v, v, head.transfer, true, w, b);
    ad::Var yc = cri::group_logits(v, a, head.transfer, true, w, b);
    ad::Var l = losses::cross_entropy(cri::tie(yf, yc), labels);
    if (gmu) {
      t.backward(l);
      *gmu = t.grad(vmu);
      *gls = t.grad(vls);
    }
    if (sig) *sig = t.signature();
    return l.scalar();
  };
  Matrix gmu, gls;
  std::uint64_t sig0 = 0;
  loss(mu, ls, &gmu, &gls, &sig0);
  CHECK(gmu.norm() > 0.0);
  CHECK(gls.norm() > 0.0);
  const double eps = 1e-6;
  for (int which = 0; which < 2; ++which) {
    for (int j = 0; j < 4; ++j) {
      Matrix p = which == 0 ? Matrix(mu) : Matrix(ls);
      const double orig = p(0, j);
      std::uint64_t sp = 0, sm = 0;
      p(0, j) = orig + eps;
      const double fp = which == 0 ? loss(p, ls, nullptr, nullptr, &sp) : loss(mu, p, nullptr, nullptr, &sp);
      p(0, j) = orig - eps;
      const double fm = which == 0 ? loss(p, ls, nullptr, nullptr, &sm) : loss(mu, p, nullptr, nullptr, &sm);
      if (sp != sig0 || sm != sig0) continue;  // top-k set changed
      const double num = (fp - fm) / (2 * eps);
      const double ana = (which == 0 ? gmu : gls)(0, j);
      CHECK(std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-8}) < 1e-4);
    }
  }
}
