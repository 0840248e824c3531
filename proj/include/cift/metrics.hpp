#pragma once

#include "cift/types.hpp"

#include <string>
#include <vector>

namespace cift::metrics {

/// Averaged margin: per sample, mean over every (positive, negative) pair of
/// D(anchor, negative) - D(anchor, positive), then the mean over samples.
/// Positives exclude the anchor itself.
double margin_quality(const Matrix& x, const Labels& labels,
                      Distance distance = Distance::kEuclidean);

/// Fraction of rows whose smallest positive affinity exceeds their largest
/// negative affinity. Square matrix; the diagonal is ignored.
double affinity_quality(const Matrix& a, const Labels& labels);

/// Per row, the `top` largest entries (ties to the lowest column) count as
/// predicted positives; returns the mean fraction of those that are
/// ground-truth negatives.
double affinity_error_ratio(const Matrix& a, const Labels& row_labels, const Labels& col_labels,
                            int top = 4);
double affinity_error_ratio(const Matrix& a, const Labels& labels, int top = 4);

struct RetrievalResult {
  std::vector<double> cmc;  // cmc[r] = fraction of queries with a hit within rank r+1
  double map = 0.0;
};

/// Ranks each gallery by ascending distance, ties to the lower gallery index.
RetrievalResult cmc_map(const Matrix& dist, const Labels& query_labels,
                        const Labels& gallery_labels);

struct QualityReport {
  double q_x = 0.0;
  double q_y = 0.0;
  double q_a = 0.0;
  double affinity_error_ratio = 0.0;
};

std::string to_json(const QualityReport& q);
std::string to_json(const RetrievalResult& r);
std::string cmc_csv(const RetrievalResult& r);

}  // namespace cift::metrics
