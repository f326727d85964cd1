// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace meshmask::svg {

// Minimal SVG document with a data-space viewport mapped to pixels.
class Canvas {
public:
    Canvas(double x0, double y0, double x1, double y1, int width_px, int height_px);

    void line(double x0, double y0, double x1, double y1, const std::string& color,
              double width = 1.0, bool dashed = false);
    void circle(double x, double y, double radius_px, const std::string& fill);
    void triangle(double x0, double y0, double x1, double y1, double x2, double y2,
                  const std::string& fill);
    void text(double x, double y, const std::string& s, int size_px = 12,
              const std::string& color = "#333333");
    void save(const std::string& path) const;

private:
    double px(double x) const;
    double py(double y) const;
    double x0_, y0_, x1_, y1_;
    int w_, h_;
    std::vector<std::string> elements_;
};

// value in [0,1] -> blue..white..red
std::string heat_color(double v);
// categorical palette
std::string category_color(int i);

}  // namespace meshmask::svg
