#include "cift/autodiff.hpp"

#include "cift/rng.hpp"

#include <cmath>
#include <string>

namespace cift::ad {

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ParameterError(std::string(op) + ": shape mismatch " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void require_row_vector(Var a, Var r, const char* op) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ParameterError(std::string(op) + ": expected 1x" + std::to_string(a.cols()) +
                         " row vector");
  }
}

void require_col_vector(Var a, Var c, const char* op) {
  if (c.cols() != 1 || c.rows() != a.rows()) {
    throw ParameterError(std::string(op) + ": expected " + std::to_string(a.rows()) +
                         "x1 column vector");
  }
}

std::uint64_t hash_mask(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& m) {
  std::uint64_t h = static_cast<std::uint64_t>(m.rows()) * 0x100000001b3ULL + m.cols();
  std::uint64_t word = 0;
  int bit = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      word |= static_cast<std::uint64_t>(m(i, j)) << bit;
      if (++bit == 64) {
        h = splitmix64(h ^ word);
        word = 0;
        bit = 0;
      }
    }
  }
  return splitmix64(h ^ word);
}

}  // namespace

const Matrix& Var::value() const { return tape->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ParameterError("scalar(): node is not 1x1");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward) {
  bool req = false;
  for (const Var& p : parents) {
    if (p.tape != this) throw ParameterError("operands belong to different tapes");
    req = req || nodes_[p.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), req ? std::move(backward) : nullptr, req, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw ParameterError("backward(): loss must be 1x1");
  accumulate(loss.id, Matrix::Ones(1, 1));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::note_branch(std::uint64_t bits) { signature_ = splitmix64(signature_ ^ bits); }

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ParameterError("matmul: inner dimensions differ");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g * t.value(b).transpose());
    t.accumulate(b.id, t.value(a).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw ParameterError("matmul_nt: column counts differ");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g * t.value(b));
    t.accumulate(b.id, g.transpose() * t.value(a));
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().transpose(), {a},
                [a](Tape& t, const Matrix& g) { t.accumulate(a.id, g.transpose()); });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, -g);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  Tape& t = *a.tape;
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(t.value(b)));
    t.accumulate(b.id, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  return t.push(a.value() * c, {a}, [a, c](Tape& t, const Matrix& g) { t.accumulate(a.id, g * c); });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  return t.push((a.value().array() + c).matrix(), {a},
                [a](Tape& t, const Matrix& g) { t.accumulate(a.id, g); });
}

Var exp(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().array().exp().matrix();
  Matrix dout = out;
  return t.push(std::move(out), {a}, [a, dout](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(dout));
  });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw NumericalError("log of non-positive value");
  Tape& t = *a.tape;
  return t.push(a.value().array().log().matrix(), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseQuotient(t.value(a)));
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active = a.value().array() > 0.0;
  t.note_branch(hash_mask(active));
  Matrix mask = active.cast<double>().matrix();
  return t.push(a.value().cwiseMax(0.0), {a}, [a, mask](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(mask));
  });
}

Var clamp_min(Var a, double floor) {
  Tape& t = *a.tape;
  const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> pass = a.value().array() >= floor;
  t.note_branch(hash_mask(pass));
  Matrix mask = pass.cast<double>().matrix();
  return t.push(a.value().cwiseMax(floor), {a}, [a, mask](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(mask));
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  Matrix mask = ((a.value().array() >= lo) && (a.value().array() <= hi)).cast<double>().matrix();
  return t.push(a.value().cwiseMax(lo).cwiseMin(hi), {a}, [a, mask](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(mask));
  });
}

Var rsqrt(Var a) {
  if ((a.value().array() <= 0.0).any()) throw NumericalError("rsqrt of non-positive value");
  Tape& t = *a.tape;
  Matrix out = a.value().array().rsqrt().matrix();
  Matrix dout = (-0.5 * out.array().cube()).matrix();
  return t.push(std::move(out), {a}, [a, dout](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(dout));
  });
}

Var square(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().array().square().matrix(), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a.id, 2.0 * g.cwiseProduct(t.value(a)));
  });
}

Var add_row(Var a, Var row) {
  require_row_vector(a, row, "add_row");
  Tape& t = *a.tape;
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(row.id, g.colwise().sum());
  });
}

Var sub_row(Var a, Var row) {
  require_row_vector(a, row, "sub_row");
  Tape& t = *a.tape;
  Matrix out = a.value().rowwise() - row.value().row(0);
  return t.push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(row.id, -g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  require_row_vector(a, row, "mul_row");
  Tape& t = *a.tape;
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return t.push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a.id, (g.array().rowwise() * t.value(row).row(0).array()).matrix());
    t.accumulate(row.id, g.cwiseProduct(t.value(a)).colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  require_col_vector(a, col, "mul_col");
  Tape& t = *a.tape;
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return t.push(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g) {
    t.accumulate(a.id, (g.array().colwise() * t.value(col).col(0).array()).matrix());
    t.accumulate(col.id, g.cwiseProduct(t.value(a)).rowwise().sum());
  });
}

Var div_col(Var a, Var col) {
  require_col_vector(a, col, "div_col");
  if ((col.value().array() == 0.0).any()) throw NumericalError("div_col: division by zero");
  Tape& t = *a.tape;
  Matrix out = a.value().array().colwise() / col.value().col(0).array();
  return t.push(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g) {
    const auto c = t.value(col).col(0).array();
    t.accumulate(a.id, (g.array().colwise() / c).matrix());
    Matrix gc = -(g.cwiseProduct(t.value(a)).rowwise().sum().array() / c.square()).matrix();
    t.accumulate(col.id, gc);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.push(std::move(out), {a}, [a, r, c](Tape& t, const Matrix& g) {
    t.accumulate(a.id, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DegenerateInputError("mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Eigen::Index c = a.cols();
  return t.push(a.value().rowwise().sum(), {a}, [a, c](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.col(0).replicate(1, c));
  });
}

Var col_mean(Var a) {
  if (a.rows() == 0) throw DegenerateInputError("col_mean of empty matrix");
  Tape& t = *a.tape;
  const Eigen::Index r = a.rows();
  return t.push(a.value().colwise().mean(), {a}, [a, r](Tape& t, const Matrix& g) {
    t.accumulate(a.id, (g.row(0) / static_cast<double>(r)).replicate(r, 1));
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw ParameterError("vstack: no parts");
  Tape& t = *parts[0].tape;
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ParameterError("vstack: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [copy, offsets](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < copy.size(); ++i) {
      t.accumulate(copy[i].id, g.middleRows(offsets[i], copy[i].rows()));
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ParameterError("slice_rows: range out of bounds");
  }
  Tape& t = *a.tape;
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.push(a.value().middleRows(start, count), {a},
                [a, start, count, r, c](Tape& t, const Matrix& g) {
                  Matrix full = Matrix::Zero(r, c);
                  full.middleRows(start, count) = g;
                  t.accumulate(a.id, full);
                });
}

Var gather_rows(Var a, std::span<const int> rows) {
  Tape& t = *a.tape;
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ParameterError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.push(std::move(out), {a}, [a, idx, r, c](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a.id, full);
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix out = shifted.colwise() - lse;
  Matrix probs = out.array().exp().matrix();
  return t.push(std::move(out), {a}, [a, probs](Tape& t, const Matrix& g) {
    Eigen::VectorXd gs = g.rowwise().sum();
    Matrix ga = g - (probs.array().colwise() * gs.array()).matrix();
    t.accumulate(a.id, ga);
  });
}

Var row_norms(Var a) {
  Tape& t = *a.tape;
  Matrix norms = a.value().rowwise().norm();
  return t.push(norms, {a}, [a, norms](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix ga = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (norms(i, 0) > 0.0) ga.row(i) = x.row(i) * (g(i, 0) / norms(i, 0));
    }
    t.accumulate(a.id, ga);
  });
}

Var pairwise_distances(Var a, Var b) {
  if (a.cols() != b.cols()) throw ParameterError("pairwise_distances: column counts differ");
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix d(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) d(i, j) = (x.row(i) - y.row(j)).norm();
  }
  return t.push(d, {a, b}, [a, b, d](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    const Matrix& y = t.value(b);
    Matrix ga = Matrix::Zero(x.rows(), x.cols());
    Matrix gb = Matrix::Zero(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.rows(); ++j) {
        if (d(i, j) <= 0.0) continue;
        RowVector dir = (x.row(i) - y.row(j)) * (g(i, j) / d(i, j));
        ga.row(i) += dir;
        gb.row(j) -= dir;
      }
    }
    t.accumulate(a.id, ga);
    t.accumulate(b.id, gb);
  });
}

}  // namespace cift::ad
