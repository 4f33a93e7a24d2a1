#include "koopman/svg_plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "koopman/errors.hpp"

namespace koopman {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

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

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-300) {
            const double pad = std::max(std::abs(lo) * 0.1, 1e-12);
            lo -= pad;
            hi += pad;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

class Canvas {
public:
    Canvas(const PlotLabels& labels) {
        svg_ << std::setprecision(6);
        svg_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
             << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
             << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
             << escape(labels.title) << "</text>\n"
             << "<text x=\"" << kLeft + plot_w() / 2 << "\" y=\"" << kHeight - 15
             << "\" text-anchor=\"middle\">" << escape(labels.x_label) << "</text>\n"
             << "<text transform=\"translate(18," << kTop + plot_h() / 2
             << ") rotate(-90)\" text-anchor=\"middle\">" << escape(labels.y_label) << "</text>\n";
    }

    static double plot_w() { return kWidth - kLeft - kRight; }
    static double plot_h() { return kHeight - kTop - kBottom; }

    void axes(const Range& xr, const Range& yr, bool x_ticks = true) {
        svg_ << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w() << "\" height=\"" << plot_h()
             << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
            const double py = kTop + plot_h() * (1.0 - i / 4.0);
            svg_ << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w() << "\" y1=\"" << py << "\" y2=\"" << py
                 << "\" stroke=\"#ddd\"/>\n"
                 << "<text x=\"" << kLeft - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << tick(fy)
                 << "</text>\n";
            if (!x_ticks) continue;
            const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
            const double px = kLeft + plot_w() * i / 4.0;
            svg_ << "<text x=\"" << px << "\" y=\"" << kTop + plot_h() + 16 << "\" text-anchor=\"middle\">" << tick(fx)
                 << "</text>\n";
        }
    }

    void legend(std::size_t i, const std::string& label) {
        const double y = kTop + 10 + 18.0 * static_cast<double>(i);
        const double x = kWidth - kRight + 12;
        svg_ << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
             << kPalette[i % kPalette.size()] << "\"/>\n"
             << "<text x=\"" << x + 18 << "\" y=\"" << y << "\">" << escape(label) << "</text>\n";
    }

    std::ostringstream& raw() { return svg_; }

    void save(const std::filesystem::path& path) {
        svg_ << "</svg>\n";
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path.string() + " for writing");
        out << svg_.str();
        if (!out) throw IoError("write failed: " + path.string());
    }

private:
    static std::string tick(double v) {
        std::ostringstream s;
        s << std::setprecision(3) << v;
        return s.str();
    }

    std::ostringstream svg_;
};

}  // namespace

void write_line_plot(const std::filesystem::path& path, const PlotLabels& labels,
                     const std::vector<PlotSeries>& series, bool equal_axes) {
    Range xr, yr;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw DimensionError("write_line_plot: series '" + s.label + "' x/y lengths differ");
        for (double v : s.x) xr.add(v);
        for (double v : s.y) yr.add(v);
    }
    xr.finish();
    yr.finish();
    if (equal_axes) {
        const double sx = (xr.hi - xr.lo) / Canvas::plot_w();
        const double sy = (yr.hi - yr.lo) / Canvas::plot_h();
        const double s = std::max(sx, sy);
        const double cx = 0.5 * (xr.lo + xr.hi), cy = 0.5 * (yr.lo + yr.hi);
        xr.lo = cx - 0.5 * s * Canvas::plot_w(), xr.hi = cx + 0.5 * s * Canvas::plot_w();
        yr.lo = cy - 0.5 * s * Canvas::plot_h(), yr.hi = cy + 0.5 * s * Canvas::plot_h();
    }

    Canvas c(labels);
    c.axes(xr, yr);
    auto px = [&](double v) { return kLeft + Canvas::plot_w() * (v - xr.lo) / (xr.hi - xr.lo); };
    auto py = [&](double v) { return kTop + Canvas::plot_h() * (1.0 - (v - yr.lo) / (yr.hi - yr.lo)); };

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = kPalette[i % kPalette.size()];
        if (s.markers_only) {
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
                c.raw() << "<circle cx=\"" << px(s.x[k]) << "\" cy=\"" << py(s.y[k]) << "\" r=\"2.5\" fill=\"" << color
                        << "\"/>\n";
            }
        } else {
            c.raw() << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << color << "\" points=\"";
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
                c.raw() << px(s.x[k]) << ',' << py(s.y[k]) << ' ';
            }
            c.raw() << "\"/>\n";
        }
        c.legend(i, s.label);
    }
    c.save(path);
}

void write_bar_plot(const std::filesystem::path& path, const PlotLabels& labels,
                    const std::vector<std::string>& categories, const std::vector<BarGroup>& groups) {
    if (categories.empty() || groups.empty()) throw DimensionError("write_bar_plot: nothing to plot");
    Range yr;
    yr.add(0.0);
    for (const auto& g : groups) {
        if (g.values.size() != categories.size())
            throw DimensionError("write_bar_plot: group '" + g.label + "' has wrong number of values");
        for (double v : g.values) yr.add(v);
    }
    yr.finish();
    yr.lo = std::min(yr.lo, 0.0);

    Canvas c(labels);
    c.axes(Range{0.0, 1.0}, yr, false);
    auto py = [&](double v) { return kTop + Canvas::plot_h() * (1.0 - (v - yr.lo) / (yr.hi - yr.lo)); };

    const double slot = Canvas::plot_w() / static_cast<double>(categories.size());
    const double bar = 0.8 * slot / static_cast<double>(groups.size());
    for (std::size_t k = 0; k < categories.size(); ++k) {
        const double x0 = kLeft + slot * static_cast<double>(k) + 0.1 * slot;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const double v = groups[g].values[k];
            if (!std::isfinite(v)) continue;
            const double top = py(std::max(v, 0.0));
            const double bottom = py(std::min(v, 0.0));
            c.raw() << "<rect x=\"" << x0 + bar * static_cast<double>(g) << "\" y=\"" << top << "\" width=\"" << bar
                    << "\" height=\"" << bottom - top << "\" fill=\"" << kPalette[g % kPalette.size()] << "\"/>\n";
        }
        c.raw() << "<text x=\"" << x0 + 0.4 * slot << "\" y=\"" << kTop + Canvas::plot_h() + 16
                << "\" text-anchor=\"middle\">" << escape(categories[k]) << "</text>\n";
    }
    for (std::size_t g = 0; g < groups.size(); ++g) c.legend(g, groups[g].label);
    c.save(path);
}

}  // namespace koopman
