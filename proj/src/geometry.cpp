#include "bevadapt/geometry.hpp"

#include <cmath>

#include "bevadapt/common.hpp"

namespace bevadapt::geometry {

void FrustumGrid::validate() const {
    BEVA_CHECK(d_bins >= 1, "need at least one depth bin");
    BEVA_CHECK(0 < d_min && d_min < d_max, "need 0 < d_min < d_max");
    BEVA_CHECK(stride >= 1, "stride must be positive");
}

std::vector<double> FrustumGrid::bin_centers() const {
    std::vector<double> c(std::size_t(d_bins), 0.0);
    for (int k = 0; k < d_bins; ++k) c[std::size_t(k)] = bin_center(k);
    return c;
}

int FrustumGrid::nearest_bin(double depth) const {
    const int k = int(std::lround((depth - d_min) / bin_width() - 0.5));
    return std::clamp(k, 0, d_bins - 1);
}

int FrustumGrid::containing_bin(double depth) const {
    if (depth < d_min || depth > d_max) return -1;
    const int k = int(std::floor((depth - d_min) / bin_width()));
    return std::clamp(k, 0, d_bins - 1);
}

void VoxelGridSpec::validate() const {
    BEVA_CHECK(dx > 0 && dy > 0 && dz > 0, "cell sizes must be positive");
    BEVA_CHECK(x_max > x_min && y_max > y_min && z_max > z_min, "ranges must be non-empty");
    BEVA_CHECK(nx() >= 1 && ny() >= 1 && nz() >= 1, "derived counts must be >= 1");
}

int VoxelGridSpec::cell_index(double x, double y, double z) const {
    const int ix = int(std::floor((x - x_min) / dx));
    const int iy = int(std::floor((y - y_min) / dy));
    const int iz = int(std::floor((z - z_min) / dz));
    if (ix < 0 || ix >= nx() || iy < 0 || iy >= ny() || iz < 0 || iz >= nz()) return -1;
    return (ix * ny() + iy) * nz() + iz;
}

Tensor lift(const Tensor& image_feat, const Tensor& depth_dist) {
    BEVA_CHECK(image_feat.rank() == 3 && depth_dist.rank() == 3, "lift expects H x W x C and H x W x D");
    const int h = image_feat.dim(0), w = image_feat.dim(1), c = image_feat.dim(2);
    const int d = depth_dist.dim(2);
    BEVA_CHECK(depth_dist.dim(0) == h && depth_dist.dim(1) == w, "lift shape mismatch");
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = 0;
            for (int k = 0; k < d; ++k) {
                const double p = depth_dist.at(y, x, k);
                BEVA_CHECK(p >= 0.0, "depth distribution must be nonnegative");
                sum += p;
            }
            BEVA_CHECK(std::abs(sum - 1.0) <= 1e-5, "depth distribution not normalized");
        }
    Tensor out({h, w, d, c});
    const int rows = h * w;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int y = r / w, x = r % w;
        for (int k = 0; k < d; ++k) {
            const double p = depth_dist.at(y, x, k);
            for (int ch = 0; ch < c; ++ch) out.at(y, x, k, ch) = p * image_feat.at(y, x, ch);
        }
    }
    return out;
}

Vec3 frustum_to_ego(double u, double v, double d, const Intrinsics& intr,
                    const RigidTransform& ego_to_cam) {
    BEVA_CHECK(d > 0, "depth must be positive");
    const Vec3 p_cam = intr.unproject(u, v, d);
    return ego_to_cam.inverse().apply(p_cam);
}

std::array<double, 3> project_to_view(const Vec3& p_ego, const Intrinsics& intr,
                                      const RigidTransform& ego_to_cam) {
    return intr.project(ego_to_cam.apply(p_ego));
}

Tensor voxel_pool(const Tensor& points, const Tensor& features, const VoxelGridSpec& spec) {
    spec.validate();
    BEVA_CHECK(points.rank() == 2 && points.dim(1) == 3, "points must be P x 3");
    BEVA_CHECK(features.rank() == 2 && features.dim(0) == points.dim(0), "features must be P x C");
    BEVA_CHECK(features.all_finite(), "features must be finite");
    const int p = points.dim(0), c = features.dim(1);
    std::vector<int> cell_of(std::size_t(p), -1);
    for (int i = 0; i < p; ++i)
        cell_of[std::size_t(i)] = spec.cell_index(points.at(i, 0), points.at(i, 1), points.at(i, 2));
    kernels::PoolSegments seg;
    seg.build(std::move(cell_of), spec.n_cells());
    Tensor out({spec.nx(), spec.ny(), spec.nz(), c});
    kernels::pool_sum_forward(features.data(), seg, out.data(), c);
    return out;
}

Tensor bev_collapse(const Tensor& voxel) {
    BEVA_CHECK(voxel.rank() == 4, "expected X x Y x Z x C");
    Tensor out({voxel.dim(0), voxel.dim(1), voxel.dim(2) * voxel.dim(3)});
    std::copy(voxel.data(), voxel.data() + voxel.size(), out.data());
    return out;
}

Tensor bev_uncollapse(const Tensor& bev, int z, int c) {
    BEVA_CHECK(bev.rank() == 3 && bev.dim(2) == z * c, "collapsed channel count mismatch");
    Tensor out({bev.dim(0), bev.dim(1), z, c});
    std::copy(bev.data(), bev.data() + bev.size(), out.data());
    return out;
}

FrustumMapping build_frustum_mapping(const scenegen::CameraRig& rig, const FrustumGrid& fg,
                                     const VoxelGridSpec& vg, int feat_h, int feat_w) {
    fg.validate();
    vg.validate();
    FrustumMapping map;
    map.feat_h = feat_h;
    map.feat_w = feat_w;
    map.n_views = int(rig.views.size());
    const int npix = feat_h * feat_w;
    std::vector<int> cell_of(std::size_t(map.n_views) * npix * fg.d_bins);
    for (int v = 0; v < map.n_views; ++v) {
        const scenegen::CameraView& view = rig.views[std::size_t(v)];
        const RigidTransform cam_to_ego = view.ego_to_cam.inverse();
        for (int pix = 0; pix < npix; ++pix) {
            const int fy = pix / feat_w, fx = pix % feat_w;
            const double u = (fx + 0.5) * fg.stride;
            const double vpix = (fy + 0.5) * fg.stride;
            for (int k = 0; k < fg.d_bins; ++k) {
                const Vec3 p = cam_to_ego.apply(view.intrinsics.unproject(u, vpix, fg.bin_center(k)));
                cell_of[(std::size_t(v) * npix + pix) * fg.d_bins + k] =
                    vg.cell_index(p.x, p.y, p.z);
            }
        }
    }
    map.segments.build(std::move(cell_of), vg.n_cells());
    return map;
}

} // namespace bevadapt::geometry
