#include "cift/affinity.hpp"

#include "cift/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

namespace cift::affinity {

ad::Var cosine_similarity(ad::Var u, ad::Var w) {
  if (u.cols() != w.cols()) throw ParameterError("cosine_similarity: dimensions differ");
  ad::Var nu = ad::row_norms(u);
  ad::Var nw = ad::row_norms(w);
  if ((nu.value().array() == 0.0).any() || (nw.value().array() == 0.0).any()) {
    throw DegenerateInputError("cosine_similarity: zero-norm row");
  }
  ad::Var cos = ad::matmul_nt(ad::div_col(u, nu), ad::div_col(w, nw));
  // Rounding can push |cos| a few ulps past 1.
  return ad::clamp(cos, -1.0, 1.0);
}

ad::Var temperature_exp(ad::Var cos, double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
  return ad::exp(ad::scale(cos, 1.0 / tau));
}

Matrix topk_mask(const Matrix& s, int k) {
  if (k < 1 || k > s.cols()) {
    throw ParameterError("topk: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(s.cols()) + "]");
  }
  Matrix mask = Matrix::Zero(s.rows(), s.cols());
  std::vector<int> order(static_cast<std::size_t>(s.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return s(i, a) > s(i, b); });
    for (int j = 0; j < k; ++j) mask(i, order[j]) = 1.0;
  }
  return mask;
}

ad::Var topk_filter(ad::Var s, int k) {
  Matrix mask = topk_mask(s.value(), k);
  ad::Tape& t = *s.tape;
  if (k < s.cols()) {
    // The kept set is a discrete decision; record it for kink detection.
    std::uint64_t h = 0;
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        if (mask(i, j) != 0.0) h = h * 1000003ULL + static_cast<std::uint64_t>(i * mask.cols() + j);
      }
    }
    t.note_branch(h);
  }
  return ad::hadamard(s, t.constant(std::move(mask)));
}

ad::Var row_normalize(ad::Var s) {
  ad::Var sums = ad::row_sum(s);
  if ((sums.value().array() <= 0.0).any()) {
    throw DegenerateInputError("row_normalize: row with non-positive sum");
  }
  return ad::div_col(s, sums);
}

ad::Var affinity(ad::Var u, ad::Var w, double tau, int k) {
  return row_normalize(topk_filter(temperature_exp(cosine_similarity(u, w), tau), k));
}

Matrix cosine_similarity(const Matrix& u, const Matrix& w) {
  ad::Tape t;
  return cosine_similarity(t.constant(u), t.constant(w)).value();
}

Matrix temperature_exp(const Matrix& cos, double tau) {
  ad::Tape t;
  return temperature_exp(t.constant(cos), tau).value();
}

Matrix topk_filter(const Matrix& s, int k) {
  ad::Tape t;
  return topk_filter(t.constant(s), k).value();
}

Matrix row_normalize(const Matrix& s) {
  ad::Tape t;
  return row_normalize(t.constant(s)).value();
}

Matrix gft_affinity(const Matrix& x, const EnhanceFn& enhance, double tau, int k) {
  Matrix v = enhance ? enhance(x) : x;
  ad::Tape t;
  ad::Var vv = t.constant(std::move(v));
  return affinity(vv, vv, tau, k).value();
}

void write_csv(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << io::format_double(m(i, j));
    }
    os << '\n';
  }
}

void write_csv(const std::string& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_csv(os, m);
}

Matrix read_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(io::parse_double(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError("CSV rows have differing lengths");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("empty CSV");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

Matrix read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return read_csv(is);
}

}  // namespace cift::affinity
