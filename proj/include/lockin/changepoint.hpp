#pragma once

// Changepoint analysis: exact penalized piecewise-constant segmentation
// (PELT, squared-error cost) and single-break segmented linear regression
// compared against one smooth line by AIC and BIC.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lockin/series.hpp"

namespace lockin {

/// Breakpoint indices (first index of each new segment) minimizing
/// sum of segment SSE + penalty * #breakpoints, every segment at least
/// `min_seg_len` long. Throws InsufficientData when n < 2 * min_seg_len.
std::vector<std::size_t> pelt_l2(std::span<const double> values, double penalty, std::size_t min_seg_len = 2);

/// 2 * sigma^2 * ln(n), sigma estimated robustly from first differences
/// (MAD / sqrt 2), floored so an exactly piecewise-constant series still
/// pays a positive price per breakpoint.
double default_penalty(std::span<const double> values);

struct Line {
  double slope = 0.0;
  double intercept = 0.0;

  double at(double x) const { return intercept + slope * x; }
};

/// Ordinary least squares; returns the line and its residual sum of squares.
std::pair<Line, double> fit_line(std::span<const double> x, std::span<const double> y);

struct SegmentedFit {
  std::size_t break_index = 0;  // first index of the post segment
  double break_step = 0.0;      // x value at break_index
  Line pre;
  Line post;
  double rss = 0.0;
};

/// Two free (discontinuous) OLS segments; grid search over every split
/// leaving at least `min_side` points per side. Ties go to the earliest split.
SegmentedFit segmented_linear_fit(std::span<const double> steps, std::span<const double> values,
                                  std::size_t min_side = 3);

struct ChangepointReport {
  std::string series_name;
  std::vector<std::int64_t> breakpoints;  // steps
  std::vector<double> effect_sizes;       // post-segment mean minus pre-segment mean
  std::size_t n = 0;
  double aic_smooth = 0.0;
  double bic_smooth = 0.0;
  double aic_segmented = 0.0;
  double bic_segmented = 0.0;
  double level_shift = 0.0;  // post line minus pre line at the break
  Line pre_line;
  Line post_line;
  bool degenerate = false;
  bool supported = false;

  std::vector<std::int64_t> pelt_breakpoints;
  std::vector<double> pelt_effect_sizes;
  std::optional<double> pelt_penalty;
  bool methods_agree = false;
};

/// Smooth model: one line (3 parameters with the noise variance). Segmented:
/// two lines plus the break (6). IC = n ln(RSS/n) + penalty term. Supported
/// when both criteria favour the segmented model and both |level_shift| and
/// |segment mean difference| exceed delta.
ChangepointReport compare_to_smooth(std::span<const double> steps, std::span<const double> values,
                                    const SegmentedFit& fit, double delta);

struct ChangepointOptions {
  double delta = 0.05;
  std::optional<double> penalty;  // default_penalty when unset
  std::size_t min_seg_len = 2;
  std::size_t min_side = 3;
};

inline constexpr std::size_t kMinSegmentedPoints = 6;
inline constexpr std::size_t kMinPeltPoints = 4;

/// Runs both detectors over the valid points of `series` and reports steps.
/// Throws InsufficientData below kMinSegmentedPoints valid points.
ChangepointReport analyze_series(const MetricSeries& series, const ChangepointOptions& opts = {});

}  // namespace lockin
