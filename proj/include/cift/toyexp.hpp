#pragma once

// Toy triplets {X, A, Y = A X} with controlled input and topology quality,
// used to chart how the transferred margin Q_Y depends on Q_X and Q_A.

#include "cift/rng.hpp"
#include "cift/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cift::toyexp {

struct SurfaceCell {
  double qx_target = 0.0;
  double qa_target = 0.0;
  double qx_achieved = 0.0;  // means over repeats
  double qa_achieved = 0.0;
  double qy_mean = 0.0;
  double qy_std = 0.0;
  int repeats = 0;
};

struct ControlledFeatures {
  Matrix x;
  Labels labels;
  double separation = 0.0;  // the solved scalar s
  double qx = 0.0;          // measured margin_quality
};

/// Rows are s * u_{label} + e with u, e ~ N(0, I) and labels i mod classes.
/// s is found by bisection so the Euclidean margin_quality lands within 5%
/// of qx_target (within 0.05 absolute when the target is 0). Throws
/// ConvergenceError when no draw reaches the target.
ControlledFeatures gen_controlled_features(double qx_target, int n, int classes, int dim, Rng& rng);

/// Row-stochastic n x n matrix with round(qa_target * n) rows whose positive
/// entries all exceed their negatives. Every other row weights k random
/// negatives above its positives. The diagonal carries self_weight times the
/// off-diagonal mass of its row before normalization.
Matrix gen_controlled_affinity(double qa_target, const Labels& labels, int k, Rng& rng,
                               double self_weight = 3.0);

struct SurfaceParams {
  int n = 100;
  int classes = 10;
  int dim = 16;
  int k = 4;
  double self_weight = 3.0;
};

std::vector<double> default_qx_grid();  // 0, 0.25, ..., 2.0
std::vector<double> default_qa_grid();  // 0, 0.1, ..., 1.0

/// One X per (qx, repeat), shared by every qa cell of that repeat. Cells come
/// out qx-major.
std::vector<SurfaceCell> qy_surface(const std::vector<double>& qx_grid, const std::vector<double>& qa_grid,
                                    int repeats = 100, std::uint64_t seed = 0,
                                    const SurfaceParams& params = {});

std::string surface_csv(const std::vector<SurfaceCell>& cells);

/// Spearman rank correlation with average ranks for ties. Zero when either
/// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace cift::toyexp
