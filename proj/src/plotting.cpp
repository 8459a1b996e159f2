#include "bevadapt/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bevadapt/common.hpp"

namespace bevadapt::plot {

Canvas::Canvas(int width, int height, Color bg) : w(width), h(height) {
    px.resize(std::size_t(w) * h * 3);
    for (int i = 0; i < w * h; ++i) {
        px[std::size_t(i) * 3] = bg.r;
        px[std::size_t(i) * 3 + 1] = bg.g;
        px[std::size_t(i) * 3 + 2] = bg.b;
    }
}

void Canvas::set(int x, int y, Color c) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    const std::size_t i = (std::size_t(y) * w + x) * 3;
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
}

void Canvas::line(double x0, double y0, double x1, double y1, Color c) {
    const double dx = x1 - x0, dy = y1 - y0;
    const int steps = std::max(1, int(std::ceil(std::max(std::abs(dx), std::abs(dy)))));
    for (int i = 0; i <= steps; ++i) {
        const double t = double(i) / steps;
        set(int(std::lround(x0 + t * dx)), int(std::lround(y0 + t * dy)), c);
    }
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
        for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
}

void Canvas::disc(double cx, double cy, double radius, Color c) {
    for (int y = int(cy - radius); y <= int(cy + radius) + 1; ++y)
        for (int x = int(cx - radius); x <= int(cx + radius) + 1; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) set(x, y, c);
}

namespace {
// 3x5 bitmaps, rows top-down, 3 bits each
const unsigned char* glyph(char ch) {
    static const unsigned char digits[13][5] = {
        {0b111, 0b101, 0b101, 0b101, 0b111}, // 0
        {0b010, 0b110, 0b010, 0b010, 0b111}, // 1
        {0b111, 0b001, 0b111, 0b100, 0b111}, // 2
        {0b111, 0b001, 0b111, 0b001, 0b111}, // 3
        {0b101, 0b101, 0b111, 0b001, 0b001}, // 4
        {0b111, 0b100, 0b111, 0b001, 0b111}, // 5
        {0b111, 0b100, 0b111, 0b101, 0b111}, // 6
        {0b111, 0b001, 0b010, 0b010, 0b010}, // 7
        {0b111, 0b101, 0b111, 0b101, 0b111}, // 8
        {0b111, 0b101, 0b111, 0b001, 0b111}, // 9
        {0b000, 0b000, 0b000, 0b000, 0b010}, // .
        {0b000, 0b000, 0b111, 0b000, 0b000}, // -
        {0b111, 0b100, 0b110, 0b100, 0b111}, // e
    };
    if (ch >= '0' && ch <= '9') return digits[ch - '0'];
    if (ch == '.') return digits[10];
    if (ch == '-') return digits[11];
    if (ch == 'e' || ch == 'E') return digits[12];
    return nullptr;
}
} // namespace

int Canvas::text(int x, int y, const std::string& s, Color c, int scale) {
    int cx = x;
    for (char ch : s) {
        const unsigned char* g = glyph(ch);
        if (g) {
            for (int row = 0; row < 5; ++row)
                for (int col = 0; col < 3; ++col)
                    if (g[row] & (1 << (2 - col)))
                        fill_rect(cx + col * scale, y + row * scale, cx + col * scale + scale - 1,
                                  y + row * scale + scale - 1, c);
        }
        cx += 4 * scale;
    }
    return cx - x;
}

void Canvas::save_ppm(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    BEVA_CHECK(f.good(), "cannot write image: " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(px.data()), std::streamsize(px.size()));
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

const Color kAxis{60, 60, 60};

} // namespace

void plot_curves(const std::string& path, const std::vector<Series>& series, int width,
                 int height) {
    Canvas cv(width, height);
    const int ml = 48, mr = 12, mt = 12, mb = 24;
    double ymin = 1e300, ymax = -1e300;
    std::size_t nmax = 1;
    for (const auto& s : series) {
        nmax = std::max(nmax, s.values.size());
        for (double v : s.values) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (ymax - ymin < 1e-12) ymax = ymin + 1;
    auto X = [&](double i) { return ml + (width - ml - mr) * (nmax > 1 ? i / double(nmax - 1) : 0.5); };
    auto Y = [&](double v) { return height - mb - (height - mt - mb) * (v - ymin) / (ymax - ymin); };
    cv.line(ml, mt, ml, height - mb, kAxis);
    cv.line(ml, height - mb, width - mr, height - mb, kAxis);
    for (int t = 0; t <= 4; ++t) {
        const double v = ymin + (ymax - ymin) * t / 4.0;
        cv.line(ml - 3, Y(v), ml, Y(v), kAxis);
        cv.text(2, int(Y(v)) - 2, fmt(v), kAxis);
    }
    cv.text(ml, height - mb + 6, "0", kAxis);
    cv.text(width - mr - 24, height - mb + 6, fmt(double(nmax - 1)), kAxis);
    int legend_y = mt + 4;
    for (const auto& s : series) {
        for (std::size_t i = 1; i < s.values.size(); ++i)
            cv.line(X(double(i - 1)), Y(s.values[i - 1]), X(double(i)), Y(s.values[i]), s.color);
        cv.fill_rect(width - mr - 60, legend_y, width - mr - 48, legend_y + 4, s.color);
        legend_y += 10;
    }
    cv.save_ppm(path);
}

void plot_bars(const std::string& path, const std::vector<Bar>& bars, int width, int height) {
    Canvas cv(width, height);
    const int ml = 48, mr = 12, mt = 12, mb = 24;
    double ymax = 0;
    for (const auto& b : bars) ymax = std::max(ymax, b.value);
    if (ymax <= 0) ymax = 1;
    cv.line(ml, mt, ml, height - mb, kAxis);
    cv.line(ml, height - mb, width - mr, height - mb, kAxis);
    for (int t = 0; t <= 4; ++t) {
        const double v = ymax * t / 4.0;
        const int y = height - mb - int((height - mt - mb) * v / ymax);
        cv.line(ml - 3, y, ml, y, kAxis);
        cv.text(2, y - 2, fmt(v), kAxis);
    }
    const int n = int(bars.size());
    const double slot = double(width - ml - mr) / std::max(1, n);
    for (int i = 0; i < n; ++i) {
        const int x0 = ml + int(slot * i + slot * 0.15);
        const int x1 = ml + int(slot * i + slot * 0.85);
        const int y1 = height - mb;
        const int y0 = y1 - int((height - mt - mb) * bars[std::size_t(i)].value / ymax);
        cv.fill_rect(x0, y0, x1, y1 - 1, bars[std::size_t(i)].color);
        cv.text(x0, y1 + 6, fmt(bars[std::size_t(i)].value), kAxis);
    }
    cv.save_ppm(path);
}

void plot_scatter(const std::string& path, const std::vector<ScatterGroup>& groups, int width,
                  int height) {
    Canvas cv(width, height);
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& g : groups)
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            xmin = std::min(xmin, g.x[i]);
            xmax = std::max(xmax, g.x[i]);
            ymin = std::min(ymin, g.y[i]);
            ymax = std::max(ymax, g.y[i]);
        }
    if (xmin > xmax) {
        xmin = ymin = 0;
        xmax = ymax = 1;
    }
    if (xmax - xmin < 1e-12) xmax = xmin + 1;
    if (ymax - ymin < 1e-12) ymax = ymin + 1;
    const int m = 16;
    auto X = [&](double v) { return m + (width - 2 * m) * (v - xmin) / (xmax - xmin); };
    auto Y = [&](double v) { return height - m - (height - 2 * m) * (v - ymin) / (ymax - ymin); };
    for (const auto& g : groups)
        for (std::size_t i = 0; i < g.x.size(); ++i) cv.disc(X(g.x[i]), Y(g.y[i]), 2.2, g.color);
    cv.save_ppm(path);
}

std::vector<std::pair<double, double>> pca2(const std::vector<std::vector<double>>& rows) {
    std::vector<std::pair<double, double>> out;
    if (rows.empty()) return out;
    const std::size_t dim = rows[0].size();
    std::vector<double> mean(dim, 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < dim; ++i) mean[i] += r[i] / double(rows.size());
    // two rounds of power iteration with deflation on the centered data
    auto matvec = [&](const std::vector<double>& v, const std::vector<double>* deflate) {
        std::vector<double> acc(dim, 0.0);
        for (const auto& r : rows) {
            double dot = 0;
            for (std::size_t i = 0; i < dim; ++i) dot += (r[i] - mean[i]) * v[i];
            for (std::size_t i = 0; i < dim; ++i) acc[i] += dot * (r[i] - mean[i]);
        }
        if (deflate) {
            double d = 0;
            for (std::size_t i = 0; i < dim; ++i) d += acc[i] * (*deflate)[i];
            for (std::size_t i = 0; i < dim; ++i) acc[i] -= d * (*deflate)[i];
        }
        double norm = 0;
        for (double x : acc) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0)
            for (double& x : acc) x /= norm;
        return acc;
    };
    std::vector<double> v1(dim, 0.0), v2(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        v1[i] = ((i * 2654435761u) % 1000) / 1000.0 - 0.5;
        v2[i] = ((i * 40503u + 7) % 1000) / 1000.0 - 0.5;
    }
    for (int it = 0; it < 32; ++it) v1 = matvec(v1, nullptr);
    for (int it = 0; it < 32; ++it) {
        // keep v2 orthogonal to v1
        double d = 0;
        for (std::size_t i = 0; i < dim; ++i) d += v2[i] * v1[i];
        for (std::size_t i = 0; i < dim; ++i) v2[i] -= d * v1[i];
        v2 = matvec(v2, &v1);
    }
    for (const auto& r : rows) {
        double a = 0, b = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            a += (r[i] - mean[i]) * v1[i];
            b += (r[i] - mean[i]) * v2[i];
        }
        out.emplace_back(a, b);
    }
    return out;
}

} // namespace bevadapt::plot
