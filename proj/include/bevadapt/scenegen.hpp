#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevadapt/geom3d.hpp"

namespace bevadapt::scenegen {

struct Interval {
    double lo = 0, hi = 0;
};

struct CategorySpec {
    std::string name;
    Interval length, width, height; // meters
};

// Deterministic description of one synthetic scene draw. Identical spec and
// shift always produce byte-identical samples.
struct SceneSpec {
    std::uint64_t seed = 0;
    int num_objects = 4;
    double layout_x_min = -14, layout_x_max = 14;
    double layout_y_min = -14, layout_y_max = 14;
    std::vector<CategorySpec> categories;
    int num_views = 4;
    int image_h = 32, image_w = 48;
    int lidar_rays = 4096;

    // rig / sensor geometry
    double fov_deg = 100.0;
    double camera_height = 1.6;
    double camera_radius = 0.3;
    double lidar_height = 1.8;
    double lidar_elev_min_deg = -25.0;
    double lidar_elev_max_deg = 2.0;
    int lidar_elev_count = 16;
    double lidar_max_range = 60.0;
    double ego_clearance = 3.0;

    static SceneSpec defaults();
    void validate() const; // throws ContractError on invariant violation
};

enum class ShiftKind { NONE, SCENE, WEATHER, DAYNIGHT };

const char* to_string(ShiftKind k);
ShiftKind shift_kind_from_string(const std::string& s);

struct DomainShiftConfig {
    ShiftKind kind = ShiftKind::NONE;
    double gain = 1.0;
    double gamma = 1.0;
    double noise_sigma = 0.0;
    double streak_density = 0.0; // weather only; streaks per pixel / 4
    int palette_id = 0;          // scene only

    static DomainShiftConfig none();
    static DomainShiftConfig preset(ShiftKind k);
    void validate() const;
};

struct CameraView {
    Intrinsics intrinsics;
    RigidTransform ego_to_cam; // p_cam = R * p_ego + t
};

struct CameraRig {
    std::vector<CameraView> views;

    double coverage_deg(double fov_deg) const; // union of view azimuth spans
    void validate(double fov_deg) const;
};

struct GtBox {
    Vec3 center;       // meters, ego frame
    double length = 0; // x extent in box frame
    double width = 0;  // y extent
    double height = 0; // z extent
    double yaw = 0;    // radians about +z
    int category = 0;
};

enum class DomainTag : std::uint8_t { SOURCE = 0, TARGET = 1 };

struct MultiViewSample {
    int image_h = 0, image_w = 0;
    std::vector<std::vector<float>> images; // per view, H x W x 3 RGB in [0,1]
    std::vector<float> lidar;               // N x 3 ego-frame points
    CameraRig rig;
    std::vector<GtBox> gt_boxes;
    DomainTag domain_tag = DomainTag::SOURCE;

    std::size_t lidar_count() const { return lidar.size() / 3; }
};

CameraRig make_rig(const SceneSpec& spec);

// Renders a flat-ground box world: images by per-pixel ray casting, lidar by
// a 360-degree ray fan from the ego origin, ground-truth boxes from the
// placement pass. Photometric shift is applied to images only.
MultiViewSample generate_sample(const SceneSpec& spec, const DomainShiftConfig& shift);

struct SparseDepthMap {
    int h = 0, w = 0;
    std::vector<double> depth;        // camera-frame z, meters
    std::vector<std::uint8_t> mask;   // 1 where depth was written
};

// Nearest camera-frame depth per pixel from the sample's lidar points.
SparseDepthMap project_lidar_depth(const MultiViewSample& sample, int view);

// min-pool a full-resolution sparse map to the feature grid (h/s x w/s)
SparseDepthMap downsample_depth(const SparseDepthMap& full, int stride);

} // namespace bevadapt::scenegen
