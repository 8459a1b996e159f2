#include "bevadapt/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bevadapt/common.hpp"
#include "bevadapt/rng.hpp"

namespace bevadapt::scenegen {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }

struct Rgb {
    double r, g, b;
    Rgb operator*(double s) const { return {r * s, g * s, b * s}; }
    Rgb operator+(const Rgb& o) const { return {r + o.r, g + o.g, b + o.b}; }
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

struct Palette {
    Rgb ground_a, ground_b;
    Rgb sky_top, sky_bot;
    std::vector<Rgb> category_colors;
};

const Palette& palette(int id) {
    static const std::vector<Palette> table = {
        // 0: plain asphalt world
        {{0.30, 0.31, 0.32}, {0.36, 0.37, 0.38},
         {0.45, 0.62, 0.92}, {0.78, 0.84, 0.94},
         {{0.85, 0.15, 0.10}, {0.15, 0.35, 0.85}, {0.90, 0.75, 0.15}, {0.20, 0.70, 0.35}}},
        // 1: warm scene variant (different grounds and skies, shifted hues)
        {{0.47, 0.41, 0.30}, {0.53, 0.46, 0.33},
         {0.70, 0.58, 0.46}, {0.88, 0.80, 0.66},
         {{0.72, 0.20, 0.22}, {0.22, 0.30, 0.70}, {0.80, 0.66, 0.24}, {0.26, 0.60, 0.30}}},
        // 2: cool variant
        {{0.24, 0.28, 0.30}, {0.28, 0.33, 0.35},
         {0.35, 0.48, 0.70}, {0.60, 0.70, 0.82},
         {{0.80, 0.22, 0.18}, {0.18, 0.40, 0.80}, {0.85, 0.72, 0.20}, {0.22, 0.66, 0.40}}},
        // 3: pale variant
        {{0.40, 0.40, 0.38}, {0.46, 0.46, 0.43},
         {0.62, 0.72, 0.88}, {0.85, 0.88, 0.93},
         {{0.78, 0.18, 0.14}, {0.20, 0.36, 0.78}, {0.86, 0.70, 0.18}, {0.24, 0.64, 0.34}}},
    };
    return table[std::size_t(id) % table.size()];
}

// RNG stream tags
const std::uint64_t kStreamGeom = fnv1a64("scenegen.geom");
const std::uint64_t kStreamNoise = fnv1a64("scenegen.noise");
const std::uint64_t kStreamStreak = fnv1a64("scenegen.streak");
const std::uint64_t kStreamTexture = fnv1a64("scenegen.texture");

struct Hit {
    double t = -1;
    Vec3 normal;
    int category = -1; // -1 = ground
    bool valid() const { return t > 0; }
};

// slab intersection in the box frame (axis-aligned there)
bool ray_box(const Vec3& origin, const Vec3& dir, const GtBox& box, Hit& hit) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    // ego -> box frame (rotate by -yaw around center)
    const Vec3 rel = origin - box.center;
    const Vec3 o{c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z};
    const Vec3 d{c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
    const double half[3] = {box.length / 2, box.width / 2, box.height / 2};
    const double ov[3] = {o.x, o.y, o.z};
    const double dv[3] = {d.x, d.y, d.z};

    double tmin = 0.0, tmax = 1e30;
    int axis = -1;
    double axis_sign = 0;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dv[a]) < 1e-12) {
            if (ov[a] < -half[a] || ov[a] > half[a]) return false;
            continue;
        }
        double t1 = (-half[a] - ov[a]) / dv[a];
        double t2 = (half[a] - ov[a]) / dv[a];
        double sign = -1;
        if (t1 > t2) {
            std::swap(t1, t2);
            sign = 1;
        }
        if (t1 > tmin) {
            tmin = t1;
            axis = a;
            axis_sign = sign;
        }
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return false;
    }
    if (axis < 0 || tmin <= 1e-9) return false;
    Vec3 n_box{0, 0, 0};
    (axis == 0 ? n_box.x : axis == 1 ? n_box.y : n_box.z) = axis_sign;
    hit.t = tmin;
    // box frame -> ego
    hit.normal = {c * n_box.x - s * n_box.y, s * n_box.x + c * n_box.y, n_box.z};
    hit.category = box.category;
    return true;
}

Hit trace(const Vec3& origin, const Vec3& dir, const std::vector<GtBox>& boxes, double max_t) {
    Hit best;
    best.t = max_t;
    bool found = false;
    for (const GtBox& b : boxes) {
        Hit h;
        if (ray_box(origin, dir, b, h) && h.t < best.t) {
            best = h;
            found = true;
        }
    }
    // ground plane z = 0
    if (dir.z < -1e-12) {
        const double t = -origin.z / dir.z;
        if (t > 1e-9 && t < best.t) {
            best.t = t;
            best.normal = {0, 0, 1};
            best.category = -1;
            found = true;
        }
    }
    if (!found) best.t = -1;
    return best;
}

// texture value in [-1, 1], fixed per texture cell so it is shift-invariant
double ground_texture(std::uint64_t tex_stream, double x, double y) {
    const std::int64_t gx = std::int64_t(std::floor(x * 4.0));
    const std::int64_t gy = std::int64_t(std::floor(y * 4.0));
    const std::uint64_t cell = hash_combine(std::uint64_t(gx) * 0x9e3779b9u, std::uint64_t(gy));
    return 2.0 * hash_uniform(tex_stream, cell) - 1.0;
}

Rgb shade(const Vec3& origin, const Vec3& dir, const std::vector<GtBox>& boxes,
          const Palette& pal, std::uint64_t tex_stream) {
    const Hit hit = trace(origin, dir, boxes, 200.0);
    if (!hit.valid()) {
        const double t = std::clamp(dir.z * 3.0, 0.0, 1.0);
        return lerp(pal.sky_bot, pal.sky_top, t);
    }
    Rgb color;
    if (hit.category < 0) {
        const Vec3 p = origin + dir * hit.t;
        const std::int64_t cx = std::int64_t(std::floor(p.x / 2.0));
        const std::int64_t cy = std::int64_t(std::floor(p.y / 2.0));
        color = ((cx + cy) & 1) ? pal.ground_b : pal.ground_a;
        const double tex = ground_texture(tex_stream, p.x, p.y) * 0.025;
        color = color + Rgb{tex, tex, tex};
    } else {
        const Rgb base = pal.category_colors[std::size_t(hit.category) % pal.category_colors.size()];
        const Vec3 light = Vec3{0.4, 0.3, 0.85}.normalized();
        const double lambert = 0.55 + 0.45 * std::abs(hit.normal.dot(light));
        color = base * lambert;
    }
    // mild distance haze toward the horizon color
    const double haze = std::min(1.0, hit.t / 80.0) * 0.25;
    return lerp(color, pal.sky_bot, haze);
}

bool boxes_overlap_bev(const GtBox& a, const GtBox& b, double margin) {
    // separating axis test on the two oriented footprints
    auto corners = [&](const GtBox& g, Vec3 out[4]) {
        const double c = std::cos(g.yaw), s = std::sin(g.yaw);
        const double hl = g.length / 2 + margin / 2, hw = g.width / 2 + margin / 2;
        const double lx[4] = {hl, hl, -hl, -hl};
        const double ly[4] = {hw, -hw, -hw, hw};
        for (int i = 0; i < 4; ++i)
            out[i] = {g.center.x + c * lx[i] - s * ly[i], g.center.y + s * lx[i] + c * ly[i], 0};
    };
    Vec3 ca[4], cb[4];
    corners(a, ca);
    corners(b, cb);
    auto separated = [](const Vec3* p, const Vec3* q) {
        for (int e = 0; e < 4; ++e) {
            const Vec3 edge = p[(e + 1) % 4] - p[e];
            const Vec3 axis{-edge.y, edge.x, 0};
            double pmin = 1e30, pmax = -1e30, qmin = 1e30, qmax = -1e30;
            for (int i = 0; i < 4; ++i) {
                const double dp = axis.dot(p[i]);
                const double dq = axis.dot(q[i]);
                pmin = std::min(pmin, dp); pmax = std::max(pmax, dp);
                qmin = std::min(qmin, dq); qmax = std::max(qmax, dq);
            }
            if (pmax < qmin || qmax < pmin) return true;
        }
        return false;
    };
    return !(separated(ca, cb) || separated(cb, ca));
}

bool box_visible(const GtBox& box, const CameraRig& rig, int h, int w) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    for (const CameraView& view : rig.views) {
        for (int corner = 0; corner < 8; ++corner) {
            const double sx = (corner & 1) ? 0.5 : -0.5;
            const double sy = (corner & 2) ? 0.5 : -0.5;
            const double sz = (corner & 4) ? 0.5 : -0.5;
            const Vec3 local{sx * box.length, sy * box.width, sz * box.height};
            const Vec3 p = box.center + Vec3{c * local.x - s * local.y,
                                             s * local.x + c * local.y, local.z};
            const Vec3 pc = view.ego_to_cam.apply(p);
            if (pc.z <= 0.1) continue;
            const auto uvd = view.intrinsics.project(pc);
            if (uvd[0] >= 0 && uvd[0] < w && uvd[1] >= 0 && uvd[1] < h) return true;
        }
    }
    return false;
}

std::vector<GtBox> place_boxes(const SceneSpec& spec, const CameraRig& rig) {
    constexpr int kPlacementRounds = 16;
    constexpr int kRetriesPerBox = 64;
    for (int round = 0; round < kPlacementRounds; ++round) {
        Rng rng(hash_combine(hash_combine(kStreamGeom, spec.seed), std::uint64_t(round)));
        std::vector<GtBox> boxes;
        bool failed = false;
        for (int i = 0; i < spec.num_objects && !failed; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < kRetriesPerBox; ++attempt) {
                GtBox b;
                b.category = int(rng.below(spec.categories.size()));
                const CategorySpec& cat = spec.categories[std::size_t(b.category)];
                b.length = rng.uniform(cat.length.lo, cat.length.hi);
                b.width = rng.uniform(cat.width.lo, cat.width.hi);
                b.height = rng.uniform(cat.height.lo, cat.height.hi);
                b.yaw = rng.uniform(0.0, 2.0 * kPi);
                const double margin = std::max(b.length, b.width) / 2;
                b.center = {rng.uniform(spec.layout_x_min + margin, spec.layout_x_max - margin),
                            rng.uniform(spec.layout_y_min + margin, spec.layout_y_max - margin),
                            b.height / 2};
                if (std::hypot(b.center.x, b.center.y) <
                    spec.ego_clearance + std::hypot(b.length, b.width) / 2)
                    continue;
                bool clash = false;
                for (const GtBox& other : boxes)
                    if (boxes_overlap_bev(b, other, 0.4)) { clash = true; break; }
                if (clash) continue;
                boxes.push_back(b);
                placed = true;
                break;
            }
            if (!placed) failed = true;
        }
        if (failed) continue;
        if (spec.num_objects >= 1) {
            bool any_visible = false;
            for (const GtBox& b : boxes)
                if (box_visible(b, rig, spec.image_h, spec.image_w)) { any_visible = true; break; }
            if (!any_visible) continue;
        }
        return boxes;
    }
    throw ContractError("generate_sample: over-dense layout, objects cannot be placed "
                        "without overlap within the retry budget");
}

} // namespace

SceneSpec SceneSpec::defaults() {
    SceneSpec s;
    s.categories = {{"car", {3.6, 5.0}, {1.6, 2.1}, {1.4, 1.9}}};
    return s;
}

void SceneSpec::validate() const {
    BEVA_CHECK(num_objects >= 0, "num_objects must be >= 0");
    BEVA_CHECK(num_views >= 1, "num_views must be >= 1");
    BEVA_CHECK(image_h >= 32 && image_w >= 32, "image size must be at least 32x32");
    BEVA_CHECK(!categories.empty(), "at least one category required");
    for (const CategorySpec& c : categories) {
        BEVA_CHECK(c.length.lo > 0 && c.width.lo > 0 && c.height.lo > 0,
                   "size intervals must have positive lower bounds");
        BEVA_CHECK(c.length.hi >= c.length.lo && c.width.hi >= c.width.lo &&
                       c.height.hi >= c.height.lo,
                   "size intervals must be non-empty");
    }
    BEVA_CHECK(layout_x_max > layout_x_min && layout_y_max > layout_y_min,
               "layout bounds must be non-empty");
    BEVA_CHECK(lidar_rays >= lidar_elev_count && lidar_elev_count >= 1, "bad lidar ray counts");
    BEVA_CHECK(fov_deg > 0 && fov_deg < 180, "fov out of range");
}

const char* to_string(ShiftKind k) {
    switch (k) {
        case ShiftKind::NONE: return "none";
        case ShiftKind::SCENE: return "scene";
        case ShiftKind::WEATHER: return "weather";
        case ShiftKind::DAYNIGHT: return "daynight";
    }
    return "?";
}

ShiftKind shift_kind_from_string(const std::string& s) {
    if (s == "none") return ShiftKind::NONE;
    if (s == "scene") return ShiftKind::SCENE;
    if (s == "weather") return ShiftKind::WEATHER;
    if (s == "daynight") return ShiftKind::DAYNIGHT;
    throw ContractError("unknown shift kind: " + s);
}

DomainShiftConfig DomainShiftConfig::none() { return {}; }

DomainShiftConfig DomainShiftConfig::preset(ShiftKind k) {
    DomainShiftConfig c;
    c.kind = k;
    switch (k) {
        case ShiftKind::NONE:
            break;
        case ShiftKind::SCENE:
            c.palette_id = 1;
            break;
        case ShiftKind::WEATHER:
            c.noise_sigma = 0.08;
            c.streak_density = 0.02;
            break;
        case ShiftKind::DAYNIGHT:
            c.gain = 0.25;
            c.gamma = 1.8;
            break;
    }
    return c;
}

void DomainShiftConfig::validate() const {
    BEVA_CHECK(gain > 0 && gamma > 0, "gain and gamma must be positive");
    BEVA_CHECK(noise_sigma >= 0 && streak_density >= 0, "noise parameters must be nonnegative");
    if (kind == ShiftKind::NONE)
        BEVA_CHECK(gain == 1.0 && gamma == 1.0 && noise_sigma == 0.0 && streak_density == 0.0 &&
                       palette_id == 0,
                   "NONE shift must carry identity parameters");
}

double CameraRig::coverage_deg(double fov_deg) const {
    // union of [azimuth - fov/2, azimuth + fov/2] on the circle
    std::vector<std::pair<double, double>> spans;
    for (const CameraView& v : views) {
        // optical axis in ego frame = third row of R transposed applied to (0,0,1)
        const Mat3 Rt = v.ego_to_cam.R.transposed();
        const Vec3 fwd = Rt * Vec3{0, 0, 1};
        const double az = std::atan2(fwd.y, fwd.x) * 180.0 / kPi;
        double lo = az - fov_deg / 2, hi = az + fov_deg / 2;
        if (hi - lo >= 360.0) return 360.0;
        lo = std::fmod(std::fmod(lo, 360.0) + 360.0, 360.0);
        hi = lo + fov_deg;
        if (hi <= 360.0) {
            spans.emplace_back(lo, hi);
        } else {
            spans.emplace_back(lo, 360.0);
            spans.emplace_back(0.0, hi - 360.0);
        }
    }
    std::sort(spans.begin(), spans.end());
    double total = 0, cur_lo = -1, cur_hi = -1;
    for (auto& [lo, hi] : spans) {
        if (lo > cur_hi) {
            total += cur_hi - cur_lo > 0 ? cur_hi - cur_lo : 0;
            cur_lo = lo;
            cur_hi = hi;
        } else {
            cur_hi = std::max(cur_hi, hi);
        }
    }
    total += cur_hi - cur_lo > 0 ? cur_hi - cur_lo : 0;
    return std::min(total, 360.0);
}

void CameraRig::validate(double fov_deg) const {
    for (const CameraView& v : views) {
        BEVA_CHECK(v.intrinsics.fx > 0 && v.intrinsics.fy > 0, "focal lengths must be positive");
        BEVA_CHECK(v.ego_to_cam.R.orthonormality_error() <= 1e-9, "rotation not orthonormal");
        BEVA_CHECK(std::abs(v.ego_to_cam.R.det() - 1.0) <= 1e-9, "rotation determinant != 1");
    }
    BEVA_CHECK(coverage_deg(fov_deg) >= 300.0, "rig must cover at least 300 degrees of azimuth");
}

CameraRig make_rig(const SceneSpec& spec) {
    CameraRig rig;
    const double f = 0.5 * spec.image_w / std::tan(deg2rad(spec.fov_deg) / 2);
    for (int k = 0; k < spec.num_views; ++k) {
        const double az = 2.0 * kPi * k / spec.num_views;
        const double c = std::cos(az), s = std::sin(az);
        const Vec3 right{s, -c, 0};
        const Vec3 down{0, 0, -1};
        const Vec3 fwd{c, s, 0};
        const Vec3 pos{spec.camera_radius * c, spec.camera_radius * s, spec.camera_height};
        CameraView view;
        view.intrinsics = {f, f, spec.image_w / 2.0, spec.image_h / 2.0};
        view.ego_to_cam.R = Mat3::from_rows(right, down, fwd);
        view.ego_to_cam.t = (view.ego_to_cam.R * pos) * -1.0;
        rig.views.push_back(view);
    }
    rig.validate(spec.fov_deg);
    return rig;
}

MultiViewSample generate_sample(const SceneSpec& spec, const DomainShiftConfig& shift) {
    spec.validate();
    shift.validate();

    MultiViewSample sample;
    sample.image_h = spec.image_h;
    sample.image_w = spec.image_w;
    sample.rig = make_rig(spec);
    sample.domain_tag = shift.kind == ShiftKind::NONE ? DomainTag::SOURCE : DomainTag::TARGET;
    sample.gt_boxes = place_boxes(spec, sample.rig);

    // lidar fan: fixed elevations, uniform azimuth ring, nearest hit
    const int n_elev = spec.lidar_elev_count;
    const int n_az = spec.lidar_rays / n_elev;
    const Vec3 lidar_origin{0, 0, spec.lidar_height};
    sample.lidar.reserve(std::size_t(n_az) * n_elev * 3);
    for (int ei = 0; ei < n_elev; ++ei) {
        const double elev = deg2rad(spec.lidar_elev_min_deg +
                                    (spec.lidar_elev_max_deg - spec.lidar_elev_min_deg) *
                                        (n_elev == 1 ? 0.0 : double(ei) / (n_elev - 1)));
        const double ce = std::cos(elev), se = std::sin(elev);
        for (int ai = 0; ai < n_az; ++ai) {
            const double az = 2.0 * kPi * ai / n_az;
            const Vec3 dir{ce * std::cos(az), ce * std::sin(az), se};
            const Hit hit = trace(lidar_origin, dir, sample.gt_boxes, spec.lidar_max_range);
            if (!hit.valid()) continue;
            const Vec3 p = lidar_origin + dir * hit.t;
            sample.lidar.push_back(float(p.x));
            sample.lidar.push_back(float(p.y));
            sample.lidar.push_back(float(p.z));
        }
    }

    // render each view, then apply the photometric shift
    const Palette& pal = palette(shift.palette_id);
    const std::uint64_t tex_stream = hash_combine(kStreamTexture, spec.seed);
    sample.images.resize(std::size_t(spec.num_views));
    for (int v = 0; v < spec.num_views; ++v) {
        const CameraView& view = sample.rig.views[std::size_t(v)];
        const RigidTransform cam_to_ego = view.ego_to_cam.inverse();
        const Vec3 origin = cam_to_ego.t; // camera position in ego frame
        std::vector<float>& img = sample.images[std::size_t(v)];
        img.assign(std::size_t(spec.image_h) * spec.image_w * 3, 0.f);
        std::vector<double> buf(img.size());

        const int npix = spec.image_h * spec.image_w;
#pragma omp parallel for schedule(static)
        for (int pi = 0; pi < npix; ++pi) {
            const int iy = pi / spec.image_w;
            const int ix = pi % spec.image_w;
            const Vec3 dir_cam = view.intrinsics.unproject(ix + 0.5, iy + 0.5, 1.0);
            const Vec3 dir = (cam_to_ego.R * dir_cam).normalized();
            Rgb c = shade(origin, dir, sample.gt_boxes, pal, tex_stream);
            // photometric transform: gamma, then gain
            c = {shift.gain * std::pow(std::clamp(c.r, 0.0, 1.0), shift.gamma),
                 shift.gain * std::pow(std::clamp(c.g, 0.0, 1.0), shift.gamma),
                 shift.gain * std::pow(std::clamp(c.b, 0.0, 1.0), shift.gamma)};
            buf[std::size_t(pi) * 3 + 0] = c.r;
            buf[std::size_t(pi) * 3 + 1] = c.g;
            buf[std::size_t(pi) * 3 + 2] = c.b;
        }

        // rain streaks (serial; a handful of short translucent segments)
        if (shift.streak_density > 0) {
            Rng srng(hash_combine(hash_combine(kStreamStreak, spec.seed), std::uint64_t(v)));
            const int count = int(std::lround(shift.streak_density * npix / 4.0));
            for (int k = 0; k < count; ++k) {
                const double x0 = srng.uniform(0.0, spec.image_w);
                const int y0 = int(srng.below(std::uint64_t(std::max(1, spec.image_h / 2))));
                const int len = spec.image_h / 4 + int(srng.below(std::uint64_t(std::max(1, spec.image_h / 4))));
                const double slope = srng.uniform(-0.2, 0.2);
                const double alpha = 0.28 + 0.15 * srng.uniform();
                for (int dy = 0; dy < len; ++dy) {
                    const int py = y0 + dy;
                    const int px = int(std::lround(x0 + slope * dy));
                    if (px < 0 || px >= spec.image_w || py < 0 || py >= spec.image_h) continue;
                    double* p = &buf[(std::size_t(py) * spec.image_w + px) * 3];
                    for (int ch = 0; ch < 3; ++ch)
                        p[ch] = p[ch] * (1 - alpha) + 0.78 * alpha;
                }
            }
        }

        // additive noise; per-pixel stream independent of evaluation order
        const std::uint64_t noise_stream =
            hash_combine(hash_combine(kStreamNoise, spec.seed), std::uint64_t(v));
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < std::int64_t(buf.size()); ++i) {
            double val = buf[std::size_t(i)];
            if (shift.noise_sigma > 0)
                val += shift.noise_sigma * hash_normal(noise_stream, std::uint64_t(i));
            img[std::size_t(i)] = float(std::clamp(val, 0.0, 1.0));
        }
    }
    return sample;
}

SparseDepthMap project_lidar_depth(const MultiViewSample& sample, int view) {
    BEVA_CHECK(view >= 0 && view < int(sample.rig.views.size()), "view index out of range");
    const CameraView& cam = sample.rig.views[std::size_t(view)];
    SparseDepthMap map;
    map.h = sample.image_h;
    map.w = sample.image_w;
    map.depth.assign(std::size_t(map.h) * map.w, 0.0);
    map.mask.assign(std::size_t(map.h) * map.w, 0);
    for (std::size_t i = 0; i < sample.lidar_count(); ++i) {
        const Vec3 p{sample.lidar[i * 3], sample.lidar[i * 3 + 1], sample.lidar[i * 3 + 2]};
        const Vec3 pc = cam.ego_to_cam.apply(p);
        if (pc.z <= 1e-9) continue;
        const auto uvd = cam.intrinsics.project(pc);
        const int ix = int(std::floor(uvd[0]));
        const int iy = int(std::floor(uvd[1]));
        if (ix < 0 || ix >= map.w || iy < 0 || iy >= map.h) continue;
        const std::size_t idx = std::size_t(iy) * map.w + ix;
        if (!map.mask[idx] || uvd[2] < map.depth[idx]) {
            map.depth[idx] = uvd[2];
            map.mask[idx] = 1;
        }
    }
    return map;
}

SparseDepthMap downsample_depth(const SparseDepthMap& full, int stride) {
    SparseDepthMap out;
    out.h = full.h / stride;
    out.w = full.w / stride;
    out.depth.assign(std::size_t(out.h) * out.w, 0.0);
    out.mask.assign(std::size_t(out.h) * out.w, 0);
    for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
            double best = 0.0;
            bool has = false;
            for (int dy = 0; dy < stride; ++dy)
                for (int dx = 0; dx < stride; ++dx) {
                    const std::size_t idx = std::size_t(oy * stride + dy) * full.w + ox * stride + dx;
                    if (!full.mask[idx]) continue;
                    if (!has || full.depth[idx] < best) {
                        best = full.depth[idx];
                        has = true;
                    }
                }
            if (has) {
                out.depth[std::size_t(oy) * out.w + ox] = best;
                out.mask[std::size_t(oy) * out.w + ox] = 1;
            }
        }
    return out;
}

} // namespace bevadapt::scenegen
