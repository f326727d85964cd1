// SPDX-License-Identifier: Apache-2.0
#include "meshmask/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "meshmask/common.hpp"

namespace meshmask::svg {

Canvas::Canvas(double x0, double y0, double x1, double y1, int width_px, int height_px)
    : x0_(x0), y0_(y0), x1_(x1), y1_(y1), w_(width_px), h_(height_px) {}

double Canvas::px(double x) const { return (x - x0_) / (x1_ - x0_) * w_; }
double Canvas::py(double y) const { return h_ - (y - y0_) / (y1_ - y0_) * h_; }

namespace {
std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}
}  // namespace

void Canvas::line(double x0, double y0, double x1, double y1, const std::string& color,
                  double width, bool dashed) {
    std::string e = "<line x1=\"" + fmt(px(x0)) + "\" y1=\"" + fmt(py(y0)) + "\" x2=\"" +
                    fmt(px(x1)) + "\" y2=\"" + fmt(py(y1)) + "\" stroke=\"" + color +
                    "\" stroke-width=\"" + fmt(width) + "\"";
    if (dashed) e += " stroke-dasharray=\"3,3\"";
    e += "/>";
    elements_.push_back(std::move(e));
}

void Canvas::circle(double x, double y, double radius_px, const std::string& fill) {
    elements_.push_back("<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"" +
                        fmt(radius_px) + "\" fill=\"" + fill + "\"/>");
}

void Canvas::triangle(double x0, double y0, double x1, double y1, double x2, double y2,
                      const std::string& fill) {
    elements_.push_back("<polygon points=\"" + fmt(px(x0)) + "," + fmt(py(y0)) + " " +
                        fmt(px(x1)) + "," + fmt(py(y1)) + " " + fmt(px(x2)) + "," +
                        fmt(py(y2)) + "\" fill=\"" + fill + "\"/>");
}

void Canvas::text(double x, double y, const std::string& s, int size_px,
                  const std::string& color) {
    elements_.push_back("<text x=\"" + fmt(px(x)) + "\" y=\"" + fmt(py(y)) +
                        "\" font-size=\"" + std::to_string(size_px) + "\" fill=\"" + color +
                        "\" font-family=\"sans-serif\">" + s + "</text>");
}

void Canvas::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    require(bool(os), "svg: cannot open " + path + " for writing");
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_
       << "\" viewBox=\"0 0 " << w_ << " " << h_ << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& e : elements_) os << e << "\n";
    os << "</svg>\n";
}

std::string heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    // blue (0) -> white (0.5) -> red (1)
    double r, g, b;
    if (v < 0.5) {
        const double t = v * 2.0;
        r = 0.23 + t * 0.77;
        g = 0.30 + t * 0.70;
        b = 0.75 + t * 0.25;
    } else {
        const double t = (v - 0.5) * 2.0;
        r = 1.0;
        g = 1.0 - t * 0.70;
        b = 1.0 - t * 0.77;
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", int(r * 255), int(g * 255), int(b * 255));
    return buf;
}

std::string category_color(int i) {
    static const char* palette[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
                                    "#b279a2", "#ff9da6", "#9d755d", "#bab0ac", "#d67195",
                                    "#86bcb6", "#e0b106"};
    return palette[size_t(i) % (sizeof(palette) / sizeof(palette[0]))];
}

}  // namespace meshmask::svg
