#include "lockin/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lockin {

namespace {

constexpr double kLeft = 90, kRight = 30, kTop = 60, kBottom = 70;
constexpr int kTicks = 5;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Panel {
  const char* title;
  const char* color;
  const MetricSeries* series;
};

void draw_panel(std::ostringstream& out, const Panel& p, double y0, double step_lo, double step_hi) {
  const double w = kPanelWidth - kLeft - kRight;
  const double h = kPanelHeight - kTop - kBottom;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& pt : p.series->points) {
    lo = std::min(lo, pt.value);
    hi = std::max(hi, pt.value);
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  const double step_span = step_hi > step_lo ? step_hi - step_lo : 1.0;
  auto sx = [&](double step) { return kLeft + (step - step_lo) / step_span * w; };
  auto sy = [&](double v) { return y0 + kTop + (hi - v) / (hi - lo) * h; };

  out << "<g class=\"panel\">\n";
  out << "<text x=\"" << num(kPanelWidth / 2.0) << "\" y=\"" << num(y0 + 35)
      << "\" text-anchor=\"middle\" font-size=\"20\">" << p.title << "</text>\n";
  out << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(y0 + kTop) << "\" width=\"" << num(w) << "\" height=\""
      << num(h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= kTicks; ++i) {
    const double v = lo + (hi - lo) * i / kTicks;
    const double y = sy(v);
    out << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kLeft) << "\" y2=\""
        << num(y) << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\" font-size=\"12\">" << tick_label(v) << "</text>\n";
    const double st = step_lo + (step_hi - step_lo) * i / kTicks;
    const double x = sx(st);
    const double yb = y0 + kTop + h;
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(yb) << "\" x2=\"" << num(x) << "\" y2=\"" << num(yb + 5)
        << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << num(x) << "\" y=\"" << num(yb + 20) << "\" text-anchor=\"middle\" font-size=\"12\">"
        << tick_label(std::round(st)) << "</text>\n";
  }
  out << "<text x=\"" << num(kLeft + w / 2) << "\" y=\"" << num(y0 + kPanelHeight - 20)
      << "\" text-anchor=\"middle\" font-size=\"14\">Fine-tuning step</text>\n";

  std::string path;
  for (const auto& pt : p.series->points) {
    if (!pt.valid) continue;
    path += (path.empty() ? "" : " ") + num(sx(static_cast<double>(pt.step))) + "," + num(sy(pt.value));
  }
  if (!path.empty()) {
    out << "<polyline fill=\"none\" stroke=\"" << p.color << "\" stroke-width=\"2\" points=\"" << path << "\"/>\n";
  }
  for (const auto& pt : p.series->points) {
    out << "<circle cx=\"" << num(sx(static_cast<double>(pt.step))) << "\" cy=\"" << num(sy(pt.value))
        << "\" r=\"5\" stroke=\"" << p.color << "\" stroke-width=\"2\" fill=\"" << (pt.valid ? p.color : "white")
        << "\"" << (pt.valid ? "" : " class=\"masked\"") << "/>\n";
  }
  out << "</g>\n";
}

}  // namespace

std::string render_run_svg(const RunSeries& s, const std::string& title) {
  const Panel all[] = {{"Persona Similarity", "#1f77b4", &s.cosine},
                       {"Refusal Elasticity (RE)", "#d62728", &s.re},
                       {"ARC Accuracy", "#2ca02c", &s.capability}};
  std::vector<Panel> shown;
  std::vector<std::string> omitted;
  double step_lo = std::numeric_limits<double>::infinity();
  double step_hi = -step_lo;
  for (const auto& p : all) {
    if (p.series->points.empty()) {
      omitted.push_back(p.title);
      continue;
    }
    shown.push_back(p);
    step_lo = std::min(step_lo, static_cast<double>(p.series->points.front().step));
    step_hi = std::max(step_hi, static_cast<double>(p.series->points.back().step));
  }
  const int height = kPanelHeight * std::max<int>(1, static_cast<int>(shown.size())) + 40;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPanelWidth << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << kPanelWidth << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kPanelWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"22\">" << escape(title)
      << "</text>\n";
  double y0 = 40;
  for (const auto& p : shown) {
    draw_panel(out, p, y0, step_lo, step_hi);
    y0 += kPanelHeight;
  }
  if (!omitted.empty()) {
    std::string note = "Not shown (no data): ";
    for (std::size_t i = 0; i < omitted.size(); ++i) note += (i ? ", " : "") + omitted[i];
    out << "<text class=\"legend-note\" x=\"" << kPanelWidth - 10 << "\" y=\"" << (shown.empty() ? 80 : 52)
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"#666\">" << escape(note) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string render_grid_svg(const std::vector<std::pair<std::string, RunSeries>>& runs) {
  std::vector<std::string> cells;
  std::vector<int> heights;
  for (const auto& [title, s] : runs) {
    cells.push_back(render_run_svg(s, title));
    const auto pos = cells.back().find("height=\"") + 8;
    heights.push_back(std::stoi(cells.back().substr(pos)));
  }
  const int cell_h = heights.empty() ? kPanelHeight : *std::max_element(heights.begin(), heights.end());
  const int rows = static_cast<int>((runs.size() + 1) / 2);
  const int width = 2 * kPanelWidth;
  const int height = std::max(1, rows) * cell_h;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int x = static_cast<int>(i % 2) * kPanelWidth;
    const int y = static_cast<int>(i / 2) * cell_h;
    // Nested svg elements position each run figure in its cell.
    std::string cell = cells[i];
    cell.replace(0, 4, "<svg x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\"");
    out << cell;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace lockin
