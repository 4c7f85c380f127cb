#include "traceconf/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace traceconf::svg {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 480;
constexpr double kLeft = 70;
constexpr double kRight = 190;
constexpr double kTop = 40;
constexpr double kBottom = 60;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
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

// Maps data coordinates into the plot rectangle.
struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::pair<double, double> padded_range(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
    if (lo == hi) return {lo - 0.5, hi + 0.5};
    return {lo, hi};
}

class Document {
public:
    Document() {
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
             << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    }

    void text(double x, double y, const std::string& s, const char* anchor = "start", int size = 12,
              const char* extra = "") {
        out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << "\" font-size=\""
             << size << "\"" << extra << ">" << escape(s) << "</text>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& color, bool dashed = false,
              double width = 1.0) {
        out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
             << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\""
             << (dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill, double opacity = 1.0,
              const std::string& stroke = "none") {
        out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(std::max(0.0, w))
             << "\" height=\"" << num(std::max(0.0, h)) << "\" fill=\"" << fill << "\" fill-opacity=\"" << opacity
             << "\" stroke=\"" << stroke << "\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, bool dashed) {
        out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
             << (dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            out_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
        }
        out_ << "\"/>\n";
    }

    void raw(const std::string& s) { out_ << s; }

    void axes(const Axes& a, const Frame& f) {
        text(kWidth / 2 - kRight / 2 + kLeft / 2, 22, a.title, "middle", 14, " font-weight=\"bold\"");
        line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, "black");
        line(kLeft, kTop, kLeft, kHeight - kBottom, "black");
        for (int i = 0; i <= 5; ++i) {
            const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
            const double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
            line(f.px(xv), kHeight - kBottom, f.px(xv), kHeight - kBottom + 5, "black");
            text(f.px(xv), kHeight - kBottom + 18, tick(xv), "middle", 11);
            line(kLeft - 5, f.py(yv), kLeft, f.py(yv), "black");
            text(kLeft - 8, f.py(yv) + 4, tick(yv), "end", 11);
        }
        text((kLeft + kWidth - kRight) / 2, kHeight - 18, a.x_label, "middle");
        out_ << "<text transform=\"translate(18," << num((kTop + kHeight - kBottom) / 2)
             << ") rotate(-90)\" text-anchor=\"middle\">" << escape(a.y_label) << "</text>\n";
    }

    void legend_entry(std::size_t row, const std::string& label, const std::string& color, bool dashed) {
        const double x = kWidth - kRight + 15;
        const double y = kTop + 10 + 18.0 * static_cast<double>(row);
        line(x, y, x + 22, y, color, dashed, 2.0);
        text(x + 28, y + 4, label, "start", 11);
    }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    std::ostringstream out_;
};

}  // namespace

const std::string& palette(std::size_t i) {
    static const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % colors.size()];
}

std::string line_chart(const Axes& axes, const std::vector<Series>& series, const std::vector<Reference>& references,
                       const std::vector<std::string>& notes) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            xlo = std::min(xlo, x);
            xhi = std::max(xhi, x);
            ylo = std::min(ylo, y);
            yhi = std::max(yhi, y);
        }
    }
    for (const auto& r : references) {
        ylo = std::min(ylo, r.y);
        yhi = std::max(yhi, r.y);
    }
    const auto xr = axes.x_range.value_or(padded_range(xlo, xhi));
    const auto yr = axes.y_range.value_or(padded_range(ylo, yhi));
    const Frame f{xr.first, xr.second, yr.first, yr.second};

    Document doc;
    doc.axes(axes, f);
    std::size_t row = 0;
    for (const auto& s : series) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& [x, y] : s.points) pts.emplace_back(f.px(x), f.py(y));
        doc.polyline(pts, s.color, s.dashed);
        doc.legend_entry(row++, s.label, s.color, s.dashed);
    }
    for (const auto& r : references) {
        doc.line(f.px(f.x0), f.py(r.y), f.px(f.x1), f.py(r.y), r.color, true, 1.5);
        doc.legend_entry(row++, r.label, r.color, true);
    }
    for (std::size_t i = 0; i < notes.size(); ++i) {
        doc.text(kWidth - kRight + 15, kHeight - kBottom - 14.0 * static_cast<double>(notes.size() - i), notes[i],
                 "start", 10);
    }
    return doc.finish();
}

std::string histogram_chart(const Axes& axes, const std::vector<HistogramGroup>& groups, int bins) {
    bins = std::max(1, bins);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& g : groups) {
        for (double v : g.samples) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const auto xr = axes.x_range.value_or(padded_range(lo, hi));
    const double width = (xr.second - xr.first) / bins;

    std::vector<std::vector<double>> density(groups.size(), std::vector<double>(bins, 0.0));
    double ymax = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].samples.empty()) continue;
        for (double v : groups[g].samples) {
            const int b = std::clamp(static_cast<int>((v - xr.first) / width), 0, bins - 1);
            density[g][b] += 1.0;
        }
        for (double& d : density[g]) {
            d /= static_cast<double>(groups[g].samples.size());
            ymax = std::max(ymax, d);
        }
    }
    const Frame f{xr.first, xr.second, 0.0, ymax > 0 ? ymax * 1.1 : 1.0};

    Document doc;
    doc.axes(axes, f);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::string color = groups[g].color.empty() ? palette(g) : groups[g].color;
        for (int b = 0; b < bins; ++b) {
            if (density[g][b] == 0.0) continue;
            const double x = xr.first + b * width;
            doc.rect(f.px(x), f.py(density[g][b]), f.px(x + width) - f.px(x), f.py(0) - f.py(density[g][b]), color,
                     0.45);
        }
        doc.legend_entry(2 * g, groups[g].label + " (n=" + std::to_string(groups[g].samples.size()) + ")", color,
                         false);
        if (!groups[g].samples.empty()) {
            double sum = 0.0;
            for (double v : groups[g].samples) sum += v;
            const double mean = sum / static_cast<double>(groups[g].samples.size());
            doc.line(f.px(mean), f.py(f.y0), f.px(mean), f.py(f.y1), color, true, 2.0);
            doc.legend_entry(2 * g + 1, "mean " + tick(mean), color, true);
        }
    }
    return doc.finish();
}

std::string heatmap_chart(const Axes& axes, const Heatmap& map, bool density) {
    const std::size_t rows = map.cells.size();
    const std::size_t cols = rows ? map.cells.front().size() : 0;
    const Frame f{0.0, static_cast<double>(cols), 0.0, static_cast<double>(rows)};
    std::size_t max_count = 1;
    for (const auto& row : map.cells) {
        for (const auto& c : row) max_count = std::max(max_count, c.count);
    }

    Document doc;
    doc.raw(
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">"
        "<path d=\"M0,6 L6,0\" stroke=\"#bbbbbb\" stroke-width=\"1\"/></pattern></defs>\n");
    doc.text((kLeft + kWidth - kRight) / 2, 22, axes.title, "middle", 14, " font-weight=\"bold\"");
    for (std::size_t a = 0; a < rows; ++a) {
        for (std::size_t b = 0; b < cols; ++b) {
            const auto& c = map.cells[a][b];
            const double x = f.px(static_cast<double>(b));
            const double y = f.py(static_cast<double>(a + 1));
            const double w = f.px(static_cast<double>(b + 1)) - x;
            const double h = f.py(static_cast<double>(a)) - y;
            if (c.empty) {
                doc.rect(x, y, w, h, "url(#hatch)", 1.0, "#dddddd");
                continue;
            }
            const double v = density ? static_cast<double>(c.count) / static_cast<double>(max_count) : c.mean_correct;
            // white -> blue for density, red -> green for correctness
            char color[16];
            if (density) {
                std::snprintf(color, sizeof color, "#%02x%02xff", static_cast<int>(255 * (1 - v)),
                              static_cast<int>(255 * (1 - v)));
            } else {
                std::snprintf(color, sizeof color, "#%02x%02x40", static_cast<int>(220 * (1 - v)),
                              static_cast<int>(60 + 160 * v));
            }
            doc.rect(x, y, w, h, color, 1.0, "#ffffff");
            doc.text(x + w / 2, y + h / 2 + 4, density ? std::to_string(c.count) : tick(c.mean_correct), "middle", 9);
        }
    }
    for (std::size_t b = 0; b <= cols && b < map.tl_edges.size(); ++b) {
        doc.text(f.px(static_cast<double>(b)), kHeight - kBottom + 16, tick(map.tl_edges[b]), "middle", 9);
    }
    for (std::size_t a = 0; a <= rows && a < map.vc_edges.size(); ++a) {
        doc.text(kLeft - 6, f.py(static_cast<double>(a)) + 4, tick(map.vc_edges[a]), "end", 9);
    }
    doc.text((kLeft + kWidth - kRight) / 2, kHeight - 18, axes.x_label, "middle");
    doc.raw("<text transform=\"translate(18," + num((kTop + kHeight - kBottom) / 2) +
            ") rotate(-90)\" text-anchor=\"middle\">" + escape(axes.y_label) + "</text>\n");
    doc.text(kWidth - kRight + 15, kTop + 10, density ? "cell: sample count" : "cell: mean correctness", "start", 11);
    return doc.finish();
}

}  // namespace traceconf::svg
