#pragma once

#include <vector>

#include "bevadapt/geom3d.hpp"
#include "bevadapt/kernels.hpp"
#include "bevadapt/scenegen.hpp"
#include "bevadapt/tensor.hpp"

namespace bevadapt::geometry {

// Uniform depth binning over [d_min, d_max] at a fixed feature stride.
struct FrustumGrid {
    int d_bins = 32;
    double d_min = 1.0;
    double d_max = 40.0;
    int stride = 4; // image pixels per feature cell

    void validate() const;
    double bin_width() const { return (d_max - d_min) / d_bins; }
    double bin_center(int k) const { return d_min + (k + 0.5) * bin_width(); }
    std::vector<double> bin_centers() const;
    // nearest bin center to a depth, clamped to the valid range
    int nearest_bin(double depth) const;
    // containing bin under half-open intervals, -1 if outside [d_min, d_max]
    int containing_bin(double depth) const;
};

struct VoxelGridSpec {
    double x_min = -16, x_max = 16;
    double y_min = -16, y_max = 16;
    double z_min = -1, z_max = 3;
    double dx = 1, dy = 1, dz = 1;

    void validate() const;
    int nx() const { return int((x_max - x_min) / dx + 0.5); }
    int ny() const { return int((y_max - y_min) / dy + 0.5); }
    int nz() const { return int((z_max - z_min) / dz + 0.5); }
    int n_cells() const { return nx() * ny() * nz(); }

    // flat cell id ((ix*ny)+iy)*nz+iz, or -1 outside; cells are half-open
    // [lo, lo+d), so a point on a shared boundary lands in the cell whose
    // lower edge it is
    int cell_index(double x, double y, double z) const;

    double cell_center_x(int ix) const { return x_min + (ix + 0.5) * dx; }
    double cell_center_y(int iy) const { return y_min + (iy + 0.5) * dy; }
};

// The three geometric spaces produced by one detector forward pass.
// image_feat: per view, C_img x H' x W' (channel-major);
// voxel_feat: X x Y x Z x C_v; bev_feat: C_b x X x Y.
struct SpaceFeatures {
    std::vector<Tensor> image_feat;
    Tensor voxel_feat;
    Tensor bev_feat;
};

// out[u,v,d,:] = dist[u,v,d] * feat[u,v,:]; dist must sum to 1 +- 1e-5 per pixel.
Tensor lift(const Tensor& image_feat, const Tensor& depth_dist);

// Pinhole inversion at depth d followed by the camera->ego rigid transform.
Vec3 frustum_to_ego(double u, double v, double d, const Intrinsics& intr,
                    const RigidTransform& ego_to_cam);

// Forward counterpart; returns (u, v, depth), depth <= 0 when behind the camera.
std::array<double, 3> project_to_view(const Vec3& p_ego, const Intrinsics& intr,
                                      const RigidTransform& ego_to_cam);

// Sum pooling of P features into the voxel grid; order-independent.
// points: P x 3, features: P x C -> X x Y x Z x C.
Tensor voxel_pool(const Tensor& points, const Tensor& features, const VoxelGridSpec& spec);

// X x Y x Z x C -> X x Y x (Z*C); lossless reshape.
Tensor bev_collapse(const Tensor& voxel);
Tensor bev_uncollapse(const Tensor& bev, int z, int c);

// Precomputed frustum cell -> voxel cell mapping for one rig, reused by every
// forward pass with the same geometry. Frustum point id over all views is
// ((view * npix) + pixel) * d_bins + bin with pixel = fy * feat_w + fx.
struct FrustumMapping {
    int feat_h = 0, feat_w = 0;
    int n_views = 0;
    kernels::PoolSegments segments;

    int npix() const { return feat_h * feat_w; }
};

FrustumMapping build_frustum_mapping(const scenegen::CameraRig& rig, const FrustumGrid& fg,
                                     const VoxelGridSpec& vg, int feat_h, int feat_w);

} // namespace bevadapt::geometry
