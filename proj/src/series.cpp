#include "lockin/series.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "lockin/errors.hpp"
#include "lockin/random.hpp"

namespace lockin {

std::size_t MetricSeries::valid_count() const {
  return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return p.valid; }));
}

std::vector<double> MetricSeries::valid_values() const {
  std::vector<double> out;
  for (const auto& p : points) {
    if (p.valid) out.push_back(p.value);
  }
  return out;
}

std::optional<double> MetricSeries::value_at(std::int64_t step) const {
  auto it = std::lower_bound(points.begin(), points.end(), step,
                             [](const SeriesPoint& p, std::int64_t s) { return p.step < s; });
  if (it == points.end() || it->step != step || !it->valid) return std::nullopt;
  return it->value;
}

void check_steps(const MetricSeries& s) {
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    if (s.points[i].step <= s.points[i - 1].step) {
      throw std::invalid_argument("series " + s.metric_name + ": steps must be strictly increasing");
    }
  }
}

MaskRule mask_below(double threshold) {
  return [threshold](double v) { return !(v >= threshold); };
}

MetricSeries mask_invalid(MetricSeries series, const MaskRule& is_invalid) {
  for (auto& p : series.points) {
    if (is_invalid(p.value)) p.valid = false;
  }
  return series;
}

MetricSeries moving_average(const MetricSeries& series, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("moving_average window must be odd and >= 1");
  MetricSeries out = series;
  const auto n = static_cast<std::ptrdiff_t>(series.points.size());
  const std::ptrdiff_t half = window / 2;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double sum = 0.0;
    int count = 0;
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, i - half); k <= std::min(n - 1, i + half); ++k) {
      if (series.points[k].valid) {
        sum += series.points[k].value;
        ++count;
      }
    }
    out.points[i].valid = count > 0;
    if (count > 0) out.points[i].value = sum / count;
  }
  return out;
}

SeriesSummary summarize(const MetricSeries& series, double scale) {
  const auto values = series.valid_values();
  if (values.empty()) throw InsufficientData("all masked: " + series.metric_name + " has no valid points");
  SeriesSummary s;
  s.n_valid = values.size();
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.mean = scale * mean;
  s.sd = scale * std::sqrt(ss / n);
  s.delta_first_last = scale * (values.back() - values.front());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = scale * *lo;
  s.max = scale * *hi;
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InsufficientData("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

std::vector<double> centered(std::vector<double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

SpearmanResult spearman(std::span<const double> x, std::span<const double> y, int n_perm, std::uint64_t seed,
                        std::uint64_t stream) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: x and y differ in length");
  if (x.size() < 3) throw InsufficientData("insufficient data: spearman needs at least 3 paired points");
  if (n_perm < 0) throw std::invalid_argument("spearman: n_perm must be non-negative");

  const auto rx = centered(average_ranks(x));
  auto ry = centered(average_ranks(y));
  const double sxx = dot(rx, rx);
  const double syy = dot(ry, ry);
  if (!(sxx > 0.0) || !(syy > 0.0)) throw InsufficientData("degenerate ranks: zero rank variance");
  const double denom = std::sqrt(sxx * syy);

  SpearmanResult out;
  out.n = x.size();
  out.n_perm = n_perm;
  out.rho = std::clamp(dot(rx, ry) / denom, -1.0, 1.0);

  const double threshold = std::abs(out.rho) - 1e-12;
  std::vector<double> perm(ry.size());
  int extreme = 0;
  for (int k = 0; k < n_perm; ++k) {
    std::copy(ry.begin(), ry.end(), perm.begin());
    CounterRng rng(derive_key(seed, stream, static_cast<std::uint64_t>(k)));
    rng.shuffle(std::span<double>(perm));
    if (std::abs(dot(rx, perm) / denom) >= threshold) ++extreme;
  }
  out.p_value = static_cast<double>(1 + extreme) / static_cast<double>(1 + n_perm);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> align(const MetricSeries& a, const MetricSeries& b) {
  std::map<std::int64_t, double> bmap;
  for (const auto& p : b.points) {
    if (p.valid) bmap.emplace(p.step, p.value);
  }
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& p : a.points) {
    if (!p.valid) continue;
    if (auto it = bmap.find(p.step); it != bmap.end()) {
      out.first.push_back(p.value);
      out.second.push_back(it->second);
    }
  }
  return out;
}

SpearmanResult spearman(const MetricSeries& x, const MetricSeries& y, int n_perm, std::uint64_t seed,
                        std::uint64_t stream) {
  const auto [xs, ys] = align(x, y);
  return spearman(xs, ys, n_perm, seed, stream);
}

}  // namespace lockin
