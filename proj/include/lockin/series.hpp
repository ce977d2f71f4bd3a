#pragma once

// Per-run metric sequences, robust summaries, and rank correlation.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lockin {

struct SeriesPoint {
  std::int64_t step = 0;
  double value = 0.0;
  bool valid = true;

  bool operator==(const SeriesPoint&) const = default;
};

/// Ordered (step, value, valid) sequence for one metric of one run. Invalid
/// points keep their value for audit and are excluded from statistics.
struct MetricSeries {
  std::string run_id;
  std::string metric_name;
  std::vector<SeriesPoint> points;

  std::size_t valid_count() const;
  std::vector<double> valid_values() const;
  std::optional<double> value_at(std::int64_t step) const;  // valid points only
  bool operator==(const MetricSeries&) const = default;
};

/// Throws std::invalid_argument unless steps are strictly increasing.
void check_steps(const MetricSeries& s);

/// Returns true for values that should be masked.
using MaskRule = std::function<bool(double)>;

MaskRule mask_below(double threshold);

MetricSeries mask_invalid(MetricSeries series, const MaskRule& is_invalid);

/// Centered moving average over valid points within an odd index window,
/// shrinking at the boundaries.
MetricSeries moving_average(const MetricSeries& series, int window);

struct SeriesSummary {
  std::size_t n_valid = 0;
  double mean = 0.0;
  double sd = 0.0;  // population
  double delta_first_last = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Every output field is multiplied by `scale` (100 turns [0,1] capability
/// scores into percent and the delta into percentage points).
SeriesSummary summarize(const MetricSeries& series, double scale = 1.0);

double median(std::vector<double> values);

/// Midranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  int n_perm = 0;
};

inline constexpr int kDefaultPermutations = 10000;

/// Spearman's rho with a two-sided Monte Carlo permutation p-value,
/// p = (1 + #{|rho_perm| >= |rho_obs|}) / (1 + n_perm). Permutation k draws
/// from the counter stream keyed by (seed, stream, k), so results do not
/// depend on evaluation order.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y, int n_perm = kDefaultPermutations,
                        std::uint64_t seed = 0, std::uint64_t stream = 0);

/// Inner join on step over mutually valid points.
std::pair<std::vector<double>, std::vector<double>> align(const MetricSeries& a, const MetricSeries& b);

SpearmanResult spearman(const MetricSeries& x, const MetricSeries& y, int n_perm = kDefaultPermutations,
                        std::uint64_t seed = 0, std::uint64_t stream = 0);

}  // namespace lockin
