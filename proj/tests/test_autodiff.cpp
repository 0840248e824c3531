#include "support.hpp"

#include <doctest.h>

#include <array>

using cift::Matrix;
namespace ad = cift::ad;

namespace {

void check_op(const char* name, const std::function<ad::Var(ad::Var)>& op, const Matrix& x, cift::Rng& rng,
              double tol = 1e-7) {
  ad::Tape t;
  const Matrix out = op(t.constant(x)).value();
  testing::TapeProbe probe{op, testing::random_matrix(static_cast<int>(out.rows()), static_cast<int>(out.cols()), rng)};
  const double err = testing::fd_max_rel_error([&](const Matrix& m) { return probe.value(m); }, x, probe.grad(x));
  INFO(name);
  CHECK(err < tol);
}

}  // namespace

TEST_CASE("every op matches central differences") {
  cift::Rng rng(11);
  const Matrix x = testing::random_matrix(4, 3, rng);
  const Matrix pos = x.array().abs() + 0.5;
  const Matrix b = testing::random_matrix(3, 5, rng);
  const Matrix same = testing::random_matrix(4, 3, rng);
  const Matrix row = testing::random_matrix(1, 3, rng);
  const Matrix col = testing::random_matrix(4, 1, rng).array().abs() + 0.5;
  const Matrix other = testing::random_matrix(6, 3, rng);

  auto c = [](ad::Var v, const Matrix& m) { return v.tape->constant(m); };
  check_op("matmul", [&](ad::Var v) { return ad::matmul(v, c(v, b)); }, x, rng);
  check_op("matmul_nt", [&](ad::Var v) { return ad::matmul_nt(v, c(v, other)); }, x, rng);
  check_op("transpose", [](ad::Var v) { return ad::transpose(v); }, x, rng);
  check_op("add", [&](ad::Var v) { return ad::add(v, c(v, same)); }, x, rng);
  check_op("sub", [&](ad::Var v) { return ad::sub(c(v, same), v); }, x, rng);
  check_op("hadamard", [&](ad::Var v) { return ad::hadamard(v, v); }, x, rng);
  check_op("scale", [](ad::Var v) { return ad::scale(v, -2.5); }, x, rng);
  check_op("exp", [](ad::Var v) { return ad::exp(v); }, x, rng);
  check_op("log", [](ad::Var v) { return ad::log(v); }, pos, rng);
  check_op("rsqrt", [](ad::Var v) { return ad::rsqrt(v); }, pos, rng);
  check_op("square", [](ad::Var v) { return ad::square(v); }, x, rng);
  check_op("add_row", [&](ad::Var v) { return ad::add_row(c(v, same), ad::slice_rows(v, 0, 1)); }, x, rng);
  check_op("sub_row", [&](ad::Var v) { return ad::sub_row(v, c(v, row)); }, x, rng);
  check_op("mul_row", [&](ad::Var v) { return ad::mul_row(v, ad::slice_rows(v, 1, 1)); }, x, rng);
  check_op("mul_col", [&](ad::Var v) { return ad::mul_col(v, c(v, col)); }, x, rng);
  check_op("div_col", [&](ad::Var v) { return ad::div_col(c(v, same), ad::add_scalar(ad::square(ad::transpose(ad::slice_rows(ad::transpose(v), 0, 1))), 1.0)); },
           x, rng);
  check_op("sum", [](ad::Var v) { return ad::sum(v); }, x, rng);
  check_op("mean", [](ad::Var v) { return ad::mean(v); }, x, rng);
  check_op("row_sum", [](ad::Var v) { return ad::row_sum(v); }, x, rng);
  check_op("col_mean", [](ad::Var v) { return ad::col_mean(v); }, x, rng);
  check_op("vstack", [&](ad::Var v) {
    const std::array<ad::Var, 3> parts{v, c(v, same), v};
    return ad::vstack(parts);
  }, x, rng);
  check_op("gather_rows", [](ad::Var v) {
    const std::array<int, 5> rows{3, 0, 0, 2, 3};
    return ad::gather_rows(v, rows);
  }, x, rng);
  check_op("log_softmax_rows", [](ad::Var v) { return ad::log_softmax_rows(v); }, x, rng);
  check_op("row_norms", [](ad::Var v) { return ad::row_norms(v); }, x, rng);
  check_op("pairwise_distances", [&](ad::Var v) { return ad::pairwise_distances(v, c(v, other)); }, x, rng);
  check_op("pairwise_distances self", [](ad::Var v) { return ad::pairwise_distances(v, ad::slice_rows(v, 1, 2)); }, x, rng,
           1e-6);
}

TEST_CASE("branch signature tracks piecewise decisions") {
  Matrix a(1, 3);
  a << 1.0, -1.0, 2.0;
  ad::Tape t1, t2, t3;
  ad::relu(t1.constant(a));
  ad::relu(t2.constant(a));
  Matrix b = a;
  b(0, 1) = 0.5;
  ad::relu(t3.constant(b));
  CHECK(t1.signature() == t2.signature());
  CHECK(t1.signature() != t3.signature());
}

TEST_CASE("constants carry no gradient and unreached nodes read as zero") {
  ad::Tape t;
  ad::Var p = t.parameter(Matrix::Ones(2, 2));
  ad::Var unused = t.parameter(Matrix::Ones(3, 1));
  ad::Var k = t.constant(Matrix::Ones(2, 2));
  CHECK_FALSE(t.requires_grad(k));
  t.backward(ad::sum(ad::hadamard(p, k)));
  CHECK(t.grad(p).isApprox(Matrix::Ones(2, 2)));
  CHECK(t.grad(unused).isZero(0.0));
}
