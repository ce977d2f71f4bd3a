#include "lockin/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lockin/errors.hpp"

namespace lockin {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Segment SSE from prefix sums of the centered series.
class SseCost {
 public:
  explicit SseCost(std::span<const double> values) : s1_(values.size() + 1, 0.0), s2_(values.size() + 1, 0.0) {
    const double mean =
        values.empty() ? 0.0 : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double v = values[i] - mean;
      s1_[i + 1] = s1_[i] + v;
      s2_[i + 1] = s2_[i] + v * v;
    }
  }

  // Points [a, b).
  double operator()(std::size_t a, std::size_t b) const {
    const double sum = s1_[b] - s1_[a];
    const double sse = (s2_[b] - s2_[a]) - sum * sum / static_cast<double>(b - a);
    return sse > 0.0 ? sse : 0.0;
  }

 private:
  std::vector<double> s1_, s2_;
};

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<std::size_t> pelt_l2(std::span<const double> values, double penalty, std::size_t min_seg_len) {
  if (min_seg_len < 1) throw std::invalid_argument("pelt_l2: min_seg_len must be >= 1");
  if (!(penalty >= 0.0)) throw std::invalid_argument("pelt_l2: penalty must be non-negative");
  const std::size_t n = values.size();
  if (n < 2 * min_seg_len) throw InsufficientData("insufficient data: pelt_l2 needs at least 2 * min_seg_len points");

  const SseCost cost(values);
  std::vector<double> best(n + 1, kInf);
  std::vector<std::size_t> last(n + 1, 0);
  best[0] = -penalty;

  struct Candidate {
    std::size_t tau;
    std::size_t drop_at;  // removed once t reaches this; SIZE_MAX = live
  };
  constexpr std::size_t kLive = std::numeric_limits<std::size_t>::max();
  std::vector<Candidate> candidates{{0, kLive}};

  for (std::size_t t = min_seg_len; t <= n; ++t) {
    std::erase_if(candidates, [t](const Candidate& c) { return c.drop_at <= t; });

    double f = kInf;
    std::size_t arg = 0;
    for (const auto& c : candidates) {
      if (t - c.tau < min_seg_len) continue;
      const double v = best[c.tau] + cost(c.tau, t) + penalty;
      if (v < f) {
        f = v;
        arg = c.tau;
      }
    }
    best[t] = f;
    last[t] = arg;

    if (std::isfinite(f)) {
      // A candidate that is already worse than F(t) at t can never win for
      // any s >= t + min_seg_len; before that, t itself is not yet
      // admissible, so removal is deferred until then.
      const double margin = 1e-10 * (1.0 + std::abs(f));
      for (auto& c : candidates) {
        if (c.drop_at == kLive && best[c.tau] + cost(c.tau, t) > f + margin) c.drop_at = t + min_seg_len;
      }
      if (t >= min_seg_len && t + min_seg_len <= n) candidates.push_back({t, kLive});
    }
  }

  std::vector<std::size_t> breaks;
  for (std::size_t t = n; last[t] > 0; t = last[t]) breaks.push_back(last[t]);
  std::reverse(breaks.begin(), breaks.end());
  return breaks;
}

double default_penalty(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  std::vector<double> diffs(n - 1);
  for (std::size_t i = 1; i < n; ++i) diffs[i - 1] = values[i] - values[i - 1];
  const double med = median(diffs);
  std::vector<double> dev(diffs.size());
  std::transform(diffs.begin(), diffs.end(), dev.begin(), [med](double d) { return std::abs(d - med); });
  const double sigma = 1.4826 * median(dev) / std::sqrt(2.0);
  const double mean = mean_of(values);
  double tss = 0.0;
  for (double v : values) tss += (v - mean) * (v - mean);
  const double floor = 1e-9 * std::max(tss, std::numeric_limits<double>::min());
  return std::max(2.0 * sigma * sigma * std::log(static_cast<double>(n)), floor);
}

std::pair<Line, double> fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 paired points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_line: x values are all equal");
  Line line;
  line.slope = sxy / sxx;
  line.intercept = my - line.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (my + line.slope * (x[i] - mx));
    rss += r * r;
  }
  return {line, rss};
}

SegmentedFit segmented_linear_fit(std::span<const double> steps, std::span<const double> values,
                                  std::size_t min_side) {
  const std::size_t n = steps.size();
  if (values.size() != n) throw std::invalid_argument("segmented_linear_fit: steps and values differ in length");
  if (min_side < 2 || n < 2 * min_side) {
    throw InsufficientData("insufficient data: segmented fit needs at least " + std::to_string(2 * min_side) +
                           " points");
  }
  double scale = 0.0;
  for (double v : values) scale += v * v;
  const double tie = 1e-12 * (scale + std::numeric_limits<double>::min());

  SegmentedFit best;
  best.rss = kInf;
  for (std::size_t k = min_side; k + min_side <= n; ++k) {
    const auto [pre, rss_pre] = fit_line(steps.first(k), values.first(k));
    const auto [post, rss_post] = fit_line(steps.subspan(k), values.subspan(k));
    const double rss = rss_pre + rss_post;
    if (rss < best.rss - tie) {
      best = {k, steps[k], pre, post, rss};
    }
  }
  return best;
}

ChangepointReport compare_to_smooth(std::span<const double> steps, std::span<const double> values,
                                    const SegmentedFit& fit, double delta) {
  const std::size_t n = steps.size();
  if (values.size() != n || fit.break_index == 0 || fit.break_index >= n) {
    throw std::invalid_argument("compare_to_smooth: fit does not belong to these points");
  }
  ChangepointReport r;
  r.n = n;
  r.pre_line = fit.pre;
  r.post_line = fit.post;

  const auto [smooth, rss_smooth] = fit_line(steps, values);
  double scale = 0.0;
  for (double v : values) scale += v * v;
  const double floor = 1e-24 * (scale + std::numeric_limits<double>::min());

  const double dn = static_cast<double>(n);
  const double log_n = std::log(dn);
  const auto ic = [&](double rss, double k, double per_param) {
    return dn * std::log(std::max(rss, floor) / dn) + k * per_param;
  };
  r.aic_smooth = ic(rss_smooth, 3.0, 2.0);
  r.bic_smooth = ic(rss_smooth, 3.0, log_n);
  r.aic_segmented = ic(fit.rss, 6.0, 2.0);
  r.bic_segmented = ic(fit.rss, 6.0, log_n);

  const std::size_t k = fit.break_index;
  const double x_break = 0.5 * (steps[k - 1] + steps[k]);
  r.level_shift = fit.post.at(x_break) - fit.pre.at(x_break);
  r.breakpoints = {static_cast<std::int64_t>(std::llround(steps[k]))};
  r.effect_sizes = {mean_of(values.subspan(k)) - mean_of(values.first(k))};

  r.degenerate = rss_smooth <= floor;
  // Both effect measures must clear delta: the jump between the two lines
  // and the difference of segment means. Either alone is fooled by noise at
  // a short end segment or by a steady drift respectively.
  r.supported = !r.degenerate && r.aic_segmented < r.aic_smooth && r.bic_segmented < r.bic_smooth &&
                std::abs(r.level_shift) > delta && std::abs(r.effect_sizes.front()) > delta;
  return r;
}

ChangepointReport analyze_series(const MetricSeries& series, const ChangepointOptions& opts) {
  check_steps(series);
  std::vector<double> steps, values;
  for (const auto& p : series.points) {
    if (!p.valid) continue;
    steps.push_back(static_cast<double>(p.step));
    values.push_back(p.value);
  }
  const std::size_t min_points = std::max(kMinSegmentedPoints, 2 * opts.min_side);
  if (values.size() < min_points) {
    throw InsufficientData("insufficient data: " + series.metric_name + " has " + std::to_string(values.size()) +
                           " valid points, segmented fit needs " + std::to_string(min_points));
  }

  const auto fit = segmented_linear_fit(steps, values, opts.min_side);
  auto report = compare_to_smooth(steps, values, fit, opts.delta);
  report.series_name = series.metric_name;

  if (values.size() >= std::max(kMinPeltPoints, 2 * opts.min_seg_len)) {
    const double penalty = opts.penalty.value_or(default_penalty(values));
    report.pelt_penalty = penalty;
    const auto breaks = pelt_l2(values, penalty, opts.min_seg_len);
    std::vector<std::size_t> bounds{0};
    bounds.insert(bounds.end(), breaks.begin(), breaks.end());
    bounds.push_back(values.size());
    const std::span<const double> all(values);
    for (std::size_t i = 0; i < breaks.size(); ++i) {
      const auto before = all.subspan(bounds[i], bounds[i + 1] - bounds[i]);
      const auto after = all.subspan(bounds[i + 1], bounds[i + 2] - bounds[i + 1]);
      report.pelt_breakpoints.push_back(static_cast<std::int64_t>(std::llround(steps[breaks[i]])));
      report.pelt_effect_sizes.push_back(mean_of(after) - mean_of(before));
      const auto gap = static_cast<std::ptrdiff_t>(breaks[i]) - static_cast<std::ptrdiff_t>(fit.break_index);
      if (gap >= -1 && gap <= 1) report.methods_agree = true;
    }
  }
  return report;
}

}  // namespace lockin
