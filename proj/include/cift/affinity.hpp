#pragma once

// Temperature-scaled cosine similarities, top-k sparsification and row
// normalization. Every routine exists in two forms: on tape variables (used by
// training and by the counterfactual pass) and on plain matrices. The plain
// form runs the tape form on constants, so both produce identical values.

#include "cift/autodiff.hpp"
#include "cift/types.hpp"

#include <functional>
#include <iosfwd>
#include <string>

namespace cift::affinity {

// Entry (i, j) = <u_i, w_j> / (|u_i| |w_j|). Throws DegenerateInputError on a
// zero-norm row.
ad::Var cosine_similarity(ad::Var u, ad::Var w);
ad::Var temperature_exp(ad::Var cos, double tau);
ad::Var topk_filter(ad::Var s, int k);
ad::Var row_normalize(ad::Var s);
// row_normalize(topk_filter(temperature_exp(cosine_similarity(u, w), tau), k))
ad::Var affinity(ad::Var u, ad::Var w, double tau, int k);

// 0/1 mask of the k largest entries in every row. Ties go to the lowest
// column index.
Matrix topk_mask(const Matrix& s, int k);

Matrix cosine_similarity(const Matrix& u, const Matrix& w);
Matrix temperature_exp(const Matrix& cos, double tau);
Matrix topk_filter(const Matrix& s, int k);
Matrix row_normalize(const Matrix& s);

using EnhanceFn = std::function<Matrix(const Matrix&)>;

/// Whole-batch affinity of the single-graph baseline: a square n x n matrix
/// over v(X) with the diagonal kept.
Matrix gft_affinity(const Matrix& x, const EnhanceFn& enhance, double tau, int k);

// Row-major CSV with full round-trip precision, no header.
void write_csv(std::ostream& os, const Matrix& m);
void write_csv(const std::string& path, const Matrix& m);
Matrix read_csv(std::istream& is);
Matrix read_csv(const std::string& path);

}  // namespace cift::affinity
