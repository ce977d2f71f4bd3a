#pragma once

// Dependency-free SVG figures: persona similarity, refusal elasticity and
// capability against fine-tuning step, one 800x600 panel each.

#include <string>
#include <utility>
#include <vector>

#include "lockin/extract.hpp"

namespace lockin {

inline constexpr int kPanelWidth = 800;
inline constexpr int kPanelHeight = 600;

/// Panels stacked vertically on a shared step range. Series without points
/// are omitted and named in a note. Masked points are drawn hollow.
std::string render_run_svg(const RunSeries& s, const std::string& title);

/// Composite with two runs per row, each cell holding one run's figure.
std::string render_grid_svg(const std::vector<std::pair<std::string, RunSeries>>& runs);

}  // namespace lockin
