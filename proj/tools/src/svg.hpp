#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cfb::svg {

struct Margin {
    double left = 64.0;
    double right = 18.0;
    double top = 30.0;
    double bottom = 48.0;
};

// Minimal plot surface: a fixed data-to-pixel mapping plus shape emitters.
// Everything is buffered and written as one standalone <svg> document.
class Canvas {
  public:
    Canvas(double width, double height, double x_lo, double x_hi, double y_lo,
           double y_hi, Margin margin = {});

    double px(double x) const;  // data x to pixel
    double py(double y) const;  // data y to pixel (flipped)

    void comment(const std::string& text);
    void line(double x1, double y1, double x2, double y2, const std::string& style);
    void line_px(double x1, double y1, double x2, double y2, const std::string& style);
    void polyline(const std::vector<std::pair<double, double>>& pts,
                  const std::string& style);
    // axis-aligned cell given in data coordinates
    void rect(double x, double y, double w, double h, const std::string& fill);
    void rect_px(double x, double y, double w, double h, const std::string& style);
    void text_px(double x, double y, const std::string& s,
                 const std::string& anchor = "start", double size = 12.0);
    void title(const std::string& s);

    // frame, ticks, tick labels, and axis labels around the data region
    void axes(const std::string& x_label, const std::string& y_label, int x_ticks = 6,
              int y_ticks = 6);
    // one swatch + label per entry, stacked in the top-right corner
    void legend(const std::vector<std::pair<std::string, std::string>>& entries);

    void write(const std::string& path) const;

    double plot_left() const { return margin_.left; }
    double plot_top() const { return margin_.top; }
    double plot_right() const { return width_ - margin_.right; }
    double plot_bottom() const { return height_ - margin_.bottom; }

  private:
    double width_;
    double height_;
    double x_lo_, x_hi_, y_lo_, y_hi_;
    Margin margin_;
    std::string body_;
};

// distinguishable stroke colors, cycled
std::string color_cycle(std::size_t i);

// white-to-dark-red ramp for magnitude heatmaps, t clamped to [0, 1]
std::string heat_color(double t);

std::string escape(const std::string& s);

}  // namespace cfb::svg
