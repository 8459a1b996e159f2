#pragma once

#include <string>
#include <vector>

namespace bevadapt::plot {

struct Color {
    unsigned char r = 0, g = 0, b = 0;
};

// Minimal raster canvas written out as binary PPM (P6).
struct Canvas {
    int w = 0, h = 0;
    std::vector<unsigned char> px;

    Canvas(int width, int height, Color bg = {255, 255, 255});
    void set(int x, int y, Color c);
    void line(double x0, double y0, double x1, double y1, Color c);
    void fill_rect(int x0, int y0, int x1, int y1, Color c);
    void disc(double cx, double cy, double radius, Color c);
    // 3x5 glyphs for digits, '.', '-', 'e'; returns advance in pixels
    int text(int x, int y, const std::string& s, Color c, int scale = 1);
    void save_ppm(const std::string& path) const;
};

struct Series {
    std::string name;
    std::vector<double> values; // y per step
    Color color;
};

void plot_curves(const std::string& path, const std::vector<Series>& series, int width = 640,
                 int height = 400);

struct Bar {
    std::string label;
    double value = 0;
    Color color;
};

void plot_bars(const std::string& path, const std::vector<Bar>& bars, int width = 640,
               int height = 400);

struct ScatterGroup {
    std::vector<double> x, y;
    Color color;
};

void plot_scatter(const std::string& path, const std::vector<ScatterGroup>& groups,
                  int width = 480, int height = 480);

// top-2 principal components of row vectors (rows x dim), deterministic
std::vector<std::pair<double, double>> pca2(const std::vector<std::vector<double>>& rows);

} // namespace bevadapt::plot
