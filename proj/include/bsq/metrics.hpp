#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "bsq/field.hpp"

namespace bsq {

// |pred ∩ gt| / |pred ∪ gt|; 1 when both are empty.
double mask_iou(const BinaryMask& pred, const BinaryMask& gt);

// F-measure of contour precision/recall. Contours come from boundary_target;
// a contour pixel matches when the other contour has a pixel within
// Chebyshev distance `tolerance_px`. Both contours empty gives 1.
double boundary_f_score(const BinaryMask& pred, const BinaryMask& gt, int tolerance_px);

// Pixels of m within Chebyshev distance d of the background: m AND NOT erode(m, 2d+1).
BinaryMask inner_band(const BinaryMask& m, int d);

// IoU of the two inner bands; 1 when both bands are empty.
double boundary_iou(const BinaryMask& pred, const BinaryMask& gt, int d);

struct EvalConfig {
  // Scaled-down counterparts of the 12/9/5/3 px thresholds used on full-size images.
  std::vector<int> tolerances = {1, 2, 3, 5};
  int band_width = 1;

  void validate() const;
};

struct SampleMetrics {
  std::size_t index = 0;
  double mask_iou = 0.0;
  std::map<int, double> f_scores;
  double boundary_iou = 0.0;
  bool operator==(const SampleMetrics&) const = default;
};

SampleMetrics evaluate_pair(const BinaryMask& pred, const BinaryMask& gt, const EvalConfig& cfg,
                            std::size_t index = 0);

/// Per-sample records plus their means.
struct EvalReport {
  EvalConfig config;
  std::vector<SampleMetrics> samples;
  double mean_mask_iou = 0.0;
  std::map<int, double> mean_f_scores;
  double mean_boundary_iou = 0.0;

  void add(SampleMetrics m) { samples.push_back(std::move(m)); }
  // Recomputes the aggregates from `samples`.
  void finalize();
  std::size_t count() const noexcept { return samples.size(); }
  double mean_f(int tol) const;

  std::string to_json() const;
  std::string to_csv() const;
  // Fixed-width table with one row of aggregates.
  std::string summary_table(const std::string& label = "model") const;
};

}  // namespace bsq
