#pragma once

// Static SVG charts: line plots (ROC, cumulative-k curves), overlaid
// histograms with mean markers, and correctness heatmaps.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "traceconf/metrics.hpp"

namespace traceconf::svg {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
    std::string color = "#1f77b4";
    bool dashed = false;
};

/// Horizontal reference line across the plot area.
struct Reference {
    std::string label;
    double y = 0.0;
    std::string color = "#2ca02c";
};

struct Axes {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::optional<std::pair<double, double>> x_range;  // auto from data when absent
    std::optional<std::pair<double, double>> y_range;
};

std::string line_chart(const Axes& axes, const std::vector<Series>& series,
                       const std::vector<Reference>& references = {}, const std::vector<std::string>& notes = {});

struct HistogramGroup {
    std::string label;
    std::vector<double> samples;
    std::string color;
};

/// Shared equal-width bins over all groups; each group is drawn as a
/// translucent bar set plus a vertical dashed line at its mean.
std::string histogram_chart(const Axes& axes, const std::vector<HistogramGroup>& groups, int bins = 30);

/// Cells shaded by mean correctness (or by count when `density` is set).
/// Empty cells are hatched grey.
std::string heatmap_chart(const Axes& axes, const Heatmap& map, bool density = false);

/// Palette used for multi-series charts.
const std::string& palette(std::size_t i);

}  // namespace traceconf::svg
