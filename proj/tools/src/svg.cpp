#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cfb/errors.hpp"

namespace cfb::svg {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    // strip noise like 0.30000000000000004 from tick labels
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
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

Canvas::Canvas(double width, double height, double x_lo, double x_hi, double y_lo,
               double y_hi, Margin margin)
    : width_(width),
      height_(height),
      x_lo_(x_lo),
      x_hi_(x_hi),
      y_lo_(y_lo),
      y_hi_(y_hi),
      margin_(margin) {
    if (!(x_hi_ > x_lo_)) x_hi_ = x_lo_ + 1.0;
    if (!(y_hi_ > y_lo_)) y_hi_ = y_lo_ + 1.0;
}

double Canvas::px(double x) const {
    return margin_.left + (x - x_lo_) / (x_hi_ - x_lo_) * (plot_right() - plot_left());
}

double Canvas::py(double y) const {
    return plot_bottom() - (y - y_lo_) / (y_hi_ - y_lo_) * (plot_bottom() - plot_top());
}

void Canvas::comment(const std::string& text) {
    body_ += "<!-- " + escape(text) + " -->\n";
}

void Canvas::line_px(double x1, double y1, double x2, double y2,
                     const std::string& style) {
    body_ += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
             "\" y2=\"" + fmt(y2) + "\" style=\"" + style + "\"/>\n";
}

void Canvas::line(double x1, double y1, double x2, double y2, const std::string& style) {
    line_px(px(x1), py(y1), px(x2), py(y2), style);
}

void Canvas::polyline(const std::vector<std::pair<double, double>>& pts,
                      const std::string& style) {
    if (pts.size() < 2) return;
    std::string d = "<polyline fill=\"none\" style=\"" + style + "\" points=\"";
    for (const auto& [x, y] : pts) d += fmt(px(x)) + "," + fmt(py(y)) + " ";
    d += "\"/>\n";
    body_ += d;
}

void Canvas::rect(double x, double y, double w, double h, const std::string& fill) {
    double x0 = px(x);
    double y0 = py(y + h);
    double wp = px(x + w) - x0;
    double hp = py(y) - y0;
    // cells overlap by a hair so the grid shows no seams
    body_ += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y0) + "\" width=\"" +
             fmt(wp + 0.5) + "\" height=\"" + fmt(hp + 0.5) + "\" fill=\"" + fill +
             "\" stroke=\"none\"/>\n";
}

void Canvas::rect_px(double x, double y, double w, double h, const std::string& style) {
    body_ += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) +
             "\" height=\"" + fmt(h) + "\" style=\"" + style + "\"/>\n";
}

void Canvas::text_px(double x, double y, const std::string& s, const std::string& anchor,
                     double size) {
    body_ += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" text-anchor=\"" + anchor +
             "\" font-family=\"sans-serif\" font-size=\"" + fmt(size) + "\">" +
             escape(s) + "</text>\n";
}

void Canvas::title(const std::string& s) {
    text_px(0.5 * (plot_left() + plot_right()), margin_.top - 10.0, s, "middle", 14.0);
}

void Canvas::axes(const std::string& x_label, const std::string& y_label, int x_ticks,
                  int y_ticks) {
    const std::string frame = "stroke:#333;stroke-width:1";
    rect_px(plot_left(), plot_top(), plot_right() - plot_left(),
            plot_bottom() - plot_top(), "fill:none;stroke:#333;stroke-width:1");
    for (int i = 0; i <= x_ticks; ++i) {
        double x = x_lo_ + (x_hi_ - x_lo_) * i / x_ticks;
        double xp = px(x);
        line_px(xp, plot_bottom(), xp, plot_bottom() + 4.0, frame);
        text_px(xp, plot_bottom() + 17.0, fmt_tick(x), "middle", 11.0);
    }
    for (int i = 0; i <= y_ticks; ++i) {
        double y = y_lo_ + (y_hi_ - y_lo_) * i / y_ticks;
        double yp = py(y);
        line_px(plot_left() - 4.0, yp, plot_left(), yp, frame);
        text_px(plot_left() - 7.0, yp + 4.0, fmt_tick(y), "end", 11.0);
    }
    text_px(0.5 * (plot_left() + plot_right()), height_ - 12.0, x_label, "middle");
    // rotated y label hugging the left edge
    body_ += "<text x=\"14\" y=\"" + fmt(0.5 * (plot_top() + plot_bottom())) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
             "transform=\"rotate(-90 14 " +
             fmt(0.5 * (plot_top() + plot_bottom())) + ")\">" + escape(y_label) +
             "</text>\n";
}

void Canvas::legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    if (entries.empty()) return;
    double row = 18.0;
    double w = 10.0;
    for (const auto& [label, style] : entries) {
        w = std::max(w, 30.0 + 7.0 * label.size());
    }
    double x0 = plot_right() - w - 8.0;
    double y0 = plot_top() + 8.0;
    rect_px(x0, y0, w, row * entries.size() + 8.0,
            "fill:#fff;fill-opacity:0.85;stroke:#999;stroke-width:0.5");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        double y = y0 + 8.0 + row * i + 6.0;
        line_px(x0 + 6.0, y, x0 + 22.0, y, entries[i].second);
        text_px(x0 + 27.0, y + 4.0, entries[i].first, "start", 11.0);
    }
}

void Canvas::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
        << "\" height=\"" << height_ << "\" viewBox=\"0 0 " << width_ << " " << height_
        << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
        << body_ << "</svg>\n";
    if (!out) throw IoError("failed writing " + path);
}

std::string color_cycle(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    // white (low) to brick red (high)
    int r = static_cast<int>(std::lround(255.0 + t * (178.0 - 255.0)));
    int g = static_cast<int>(std::lround(255.0 + t * (24.0 - 255.0)));
    int b = static_cast<int>(std::lround(255.0 + t * (43.0 - 255.0)));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace cfb::svg
