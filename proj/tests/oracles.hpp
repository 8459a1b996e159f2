#pragma once

// Independent oracle implementations used by the tests. These deliberately
// re-derive results with the most literal method available (double loops,
// direct formulas, central differences) and never call the code paths they
// check.

#include <cmath>
#include <functional>
#include <vector>

#include "bevadapt/geometry.hpp"
#include "bevadapt/scenegen.hpp"
#include "bevadapt/tensor.hpp"

namespace oracles {

using bevadapt::Tensor;

// brute-force sum pooling: for every cell, scan every point and test the
// coordinate intervals explicitly
inline Tensor voxel_pool_bruteforce(const Tensor& points, const Tensor& features,
                                    const bevadapt::geometry::VoxelGridSpec& g) {
    const int p = points.dim(0), c = features.dim(1);
    const int nx = g.nx(), ny = g.ny(), nz = g.nz();
    Tensor out({nx, ny, nz, c});
    for (int ix = 0; ix < nx; ++ix)
        for (int iy = 0; iy < ny; ++iy)
            for (int iz = 0; iz < nz; ++iz) {
                const double x0 = g.x_min + ix * g.dx, x1 = g.x_min + (ix + 1) * g.dx;
                const double y0 = g.y_min + iy * g.dy, y1 = g.y_min + (iy + 1) * g.dy;
                const double z0 = g.z_min + iz * g.dz, z1 = g.z_min + (iz + 1) * g.dz;
                for (int i = 0; i < p; ++i) {
                    const double x = points.at(i, 0), y = points.at(i, 1), z = points.at(i, 2);
                    // half-open membership, and never beyond the grid extent
                    if (x >= x0 && x < x1 && x >= g.x_min && x < g.x_min + nx * g.dx &&
                        y >= y0 && y < y1 && y >= g.y_min && y < g.y_min + ny * g.dy &&
                        z >= z0 && z < z1 && z >= g.z_min && z < g.z_min + nz * g.dz)
                        for (int ch = 0; ch < c; ++ch)
                            out.at(ix, iy, iz, ch) += features.at(i, ch);
                }
            }
    return out;
}

// per-pixel nearest-depth projection oracle: double loop over pixels x points
inline bevadapt::scenegen::SparseDepthMap depth_map_bruteforce(
    const bevadapt::scenegen::MultiViewSample& s, int view) {
    const auto& cam = s.rig.views[std::size_t(view)];
    bevadapt::scenegen::SparseDepthMap map;
    map.h = s.image_h;
    map.w = s.image_w;
    map.depth.assign(std::size_t(map.h) * map.w, 0.0);
    map.mask.assign(std::size_t(map.h) * map.w, 0);
    for (int iy = 0; iy < map.h; ++iy)
        for (int ix = 0; ix < map.w; ++ix) {
            double best = 1e300;
            bool found = false;
            for (std::size_t i = 0; i < s.lidar_count(); ++i) {
                const bevadapt::Vec3 p{s.lidar[i * 3], s.lidar[i * 3 + 1], s.lidar[i * 3 + 2]};
                const bevadapt::Vec3 pc = cam.ego_to_cam.apply(p);
                if (pc.z <= 1e-9) continue;
                const double u = cam.intrinsics.fx * pc.x / pc.z + cam.intrinsics.cx;
                const double v = cam.intrinsics.fy * pc.y / pc.z + cam.intrinsics.cy;
                if (int(std::floor(u)) != ix || int(std::floor(v)) != iy) continue;
                if (pc.z < best) {
                    best = pc.z;
                    found = true;
                }
            }
            if (found) {
                map.depth[std::size_t(iy) * map.w + ix] = best;
                map.mask[std::size_t(iy) * map.w + ix] = 1;
            }
        }
    return map;
}

// direct reading of the uncertainty formula on a stack of distributions
inline std::pair<std::vector<double>, std::vector<double>> uncertainty_bruteforce(
    const std::vector<Tensor>& passes) {
    const int h = passes[0].dim(0), w = passes[0].dim(1), d = passes[0].dim(2);
    const int np = h * w;
    const double m = double(passes.size());
    std::vector<double> mu(std::size_t(np) * d, 0.0), u(std::size_t(np), 0.0);
    for (int pix = 0; pix < np; ++pix)
        for (int k = 0; k < d; ++k) {
            double acc = 0;
            for (const auto& p : passes) acc += p[std::size_t(pix) * d + k];
            mu[std::size_t(pix) * d + k] = acc / m;
        }
    for (int pix = 0; pix < np; ++pix) {
        double acc = 0;
        for (const auto& p : passes)
            for (int k = 0; k < d; ++k) {
                const double diff = p[std::size_t(pix) * d + k] - mu[std::size_t(pix) * d + k];
                acc += diff * diff;
            }
        u[std::size_t(pix)] = std::sqrt(acc / m);
    }
    return {mu, u};
}

// double-loop reading of the transfer loss over explicit (space, cell,
// channel) loops
inline double mkt_bruteforce(const std::vector<Tensor>& t_img, const std::vector<Tensor>& s_img,
                             const Tensor& t_vox, const Tensor& s_vox, const Tensor& t_bev,
                             const Tensor& s_bev, bool image, bool voxel, bool bev) {
    double total = 0;
    if (image)
        for (std::size_t v = 0; v < t_img.size(); ++v) {
            const int c = t_img[v].dim(0);
            const int cells = int(t_img[v].size()) / c;
            double acc = 0;
            for (int pix = 0; pix < cells; ++pix)
                for (int ch = 0; ch < c; ++ch) {
                    const double diff = t_img[v][std::size_t(ch) * cells + pix] -
                                        s_img[v][std::size_t(ch) * cells + pix];
                    acc += diff * diff;
                }
            total += acc / cells;
        }
    if (voxel) {
        const int c = t_vox.dim(t_vox.rank() - 1);
        const int cells = int(t_vox.size()) / c;
        double acc = 0;
        for (int cell = 0; cell < cells; ++cell)
            for (int ch = 0; ch < c; ++ch) {
                const double diff = t_vox[std::size_t(cell) * c + ch] -
                                    s_vox[std::size_t(cell) * c + ch];
                acc += diff * diff;
            }
        total += acc / cells;
    }
    if (bev) {
        const int c = t_bev.dim(0);
        const int cells = int(t_bev.size()) / c;
        double acc = 0;
        for (int pix = 0; pix < cells; ++pix)
            for (int ch = 0; ch < c; ++ch) {
                const double diff = t_bev[std::size_t(ch) * cells + pix] -
                                    s_bev[std::size_t(ch) * cells + pix];
                acc += diff * diff;
            }
        total += acc / cells;
    }
    return total;
}

// scalar focal evaluation for a uniform heatmap with no targets
inline double focal_uniform_no_gt(double p, std::size_t n_pixels) {
    // penalty weight (1-y)^4 = 1, per-pixel term -p^2 log(1-p), N = 1
    return double(n_pixels) * (-(p * p) * std::log(1.0 - p));
}

// central finite difference of a scalar function at one coordinate
inline double central_diff(const std::function<double()>& f, double* x, double h = 1e-4) {
    const double x0 = *x;
    *x = x0 + h;
    const double fp = f();
    *x = x0 - h;
    const double fm = f();
    *x = x0;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

} // namespace oracles
