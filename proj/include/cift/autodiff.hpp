#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the output gradient onto its parents. Nodes that do not
// depend on any parameter keep no closure, so building a graph of constants
// costs only the forward arithmetic. The same forward code therefore serves
// plain evaluation and training.

#include "cift/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cift::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  void backward(Var loss);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  // Zero matrix of the right shape when no gradient reached the node.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Mixes a discrete forward decision (top-k set, active hinge, floored
  // variance) into a running hash. Two forward passes with equal signatures
  // took the same piecewise branch everywhere.
  void note_branch(std::uint64_t bits);
  std::uint64_t signature() const { return signature_; }

  std::size_t size() const { return nodes_.size(); }

  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var push(Matrix value, std::span<const Var> parents, Backward backward);
  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

// Linear algebra.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);

// Elementwise, same shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);  // records its active set
Var clamp_min(Var a, double floor);  // records which entries were floored
Var clamp(Var a, double lo, double hi);
Var rsqrt(Var a);
Var square(Var a);

// Broadcasting. Row vectors (1 x m) apply to every row; column vectors
// (n x 1) apply to every column.
Var add_row(Var a, Var row);
Var sub_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var mul_col(Var a, Var col);
Var div_col(Var a, Var col);

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var col_mean(Var a);

// Structure.
Var vstack(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, std::span<const int> rows);

// Row-wise log-softmax.
Var log_softmax_rows(Var a);
// Euclidean norm of each row (n x 1). Gradient at a zero row is taken as 0.
Var row_norms(Var a);
// Euclidean distance between every row of a and every row of b (n x m).
Var pairwise_distances(Var a, Var b);

}  // namespace cift::ad
