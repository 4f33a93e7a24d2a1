#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace koopman {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool markers_only = false;
};

struct BarGroup {
    std::string label;
    /// One value per category.
    std::vector<double> values;
};

struct PlotLabels {
    std::string title;
    std::string x_label;
    std::string y_label;
};

/// Static SVG line/scatter chart with a legend. Non-finite points are skipped.
void write_line_plot(const std::filesystem::path& path, const PlotLabels& labels,
                     const std::vector<PlotSeries>& series, bool equal_axes = false);

/// Grouped bar chart: one cluster per category, one bar per group.
void write_bar_plot(const std::filesystem::path& path, const PlotLabels& labels,
                    const std::vector<std::string>& categories, const std::vector<BarGroup>& groups);

}  // namespace koopman
