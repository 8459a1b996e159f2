#include "bevadapt/dat.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "bevadapt/common.hpp"
#include "bevadapt/rng.hpp"

namespace bevadapt::dat {

std::pair<Tensor, Tensor> uncertainty_from_passes(const std::vector<Tensor>& passes) {
    BEVA_CHECK(passes.size() >= 2, "uncertainty needs at least two passes");
    const int h = passes[0].dim(0), w = passes[0].dim(1), d = passes[0].dim(2);
    for (const Tensor& p : passes)
        BEVA_CHECK(p.dim(0) == h && p.dim(1) == w && p.dim(2) == d, "pass shape mismatch");
    const double m = double(passes.size());
    Tensor mu({h, w, d});
    for (const Tensor& p : passes) axpy(1.0 / m, p, mu);
    Tensor u({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (const Tensor& p : passes)
                for (int k = 0; k < d; ++k) {
                    const double diff = p.at(y, x, k) - mu.at(y, x, k);
                    acc += diff * diff;
                }
            u.at(y, x) = std::sqrt(acc / m);
        }
    return {std::move(mu), std::move(u)};
}

std::pair<Tensor, Tensor> mc_uncertainty_dmajor(const perception::Detector& det,
                                                const Tensor& view_feat, int m,
                                                std::uint64_t stream) {
    BEVA_CHECK(m >= 2, "mc_uncertainty needs m >= 2");
    const int fh = det.cfg.feat_h(), fw = det.cfg.feat_w(), d = det.cfg.frustum.d_bins;
    const int np = fh * fw;
    std::vector<Tensor> dists;
    dists.reserve(std::size_t(m));
    for (int i = 0; i < m; ++i)
        dists.push_back(det.depth_head_forward(view_feat, true,
                                               hash_combine(stream, std::uint64_t(i))));
    Tensor mu({d, fh, fw});
    for (const Tensor& p : dists) axpy(1.0 / m, p, mu);
    Tensor u({fh, fw});
    for (int pix = 0; pix < np; ++pix) {
        double acc = 0;
        for (const Tensor& p : dists)
            for (int k = 0; k < d; ++k) {
                const double diff = p[std::size_t(k) * np + pix] - mu[std::size_t(k) * np + pix];
                acc += diff * diff;
            }
        u[std::size_t(pix)] = std::sqrt(acc / m);
    }
    return {std::move(mu), std::move(u)};
}

std::pair<Tensor, Tensor> mc_uncertainty(const perception::Detector& det,
                                         const scenegen::MultiViewSample& sample, int view, int m,
                                         std::uint64_t stream) {
    perception::ViewActs va;
    det.encode_view(sample.images[std::size_t(view)], va);
    auto [mu_dm, u] = mc_uncertainty_dmajor(det, va.feat, m,
                                            hash_combine(stream, std::uint64_t(view)));
    const int fh = det.cfg.feat_h(), fw = det.cfg.feat_w(), d = det.cfg.frustum.d_bins;
    Tensor mu({fh, fw, d});
    for (int k = 0; k < d; ++k)
        for (int y = 0; y < fh; ++y)
            for (int x = 0; x < fw; ++x) mu.at(y, x, k) = mu_dm.at(k, y, x);
    return {std::move(mu), std::move(u)};
}

const char* to_string(GateMode m) {
    switch (m) {
        case GateMode::UNCERTAINTY: return "unc";
        case GateMode::CONFIDENCE: return "conf";
        case GateMode::ALL_PRED: return "pred";
        case GateMode::LIDAR_ONLY: return "lidar";
    }
    return "?";
}

GateMode gate_mode_from_string(const std::string& s) {
    if (s == "unc") return GateMode::UNCERTAINTY;
    if (s == "conf") return GateMode::CONFIDENCE;
    if (s == "pred") return GateMode::ALL_PRED;
    if (s == "lidar") return GateMode::LIDAR_ONLY;
    throw ContractError("unknown gate mode: " + s);
}

std::size_t DepthAwareMap::count(DepthSource s) const {
    std::size_t n = 0;
    for (DepthSource v : source)
        if (v == s) ++n;
    return n;
}

DepthAwareMap compose_depth_aware(const scenegen::SparseDepthMap& lidar_feat,
                                  const Tensor& mu_dmajor, const Tensor& uncertainty, double q,
                                  const geometry::FrustumGrid& fg, GateMode mode) {
    BEVA_CHECK(q >= 0.0 && q <= 1.0, "quantile must lie in [0, 1]");
    const int d = mu_dmajor.dim(0), h = mu_dmajor.dim(1), w = mu_dmajor.dim(2);
    BEVA_CHECK(lidar_feat.h == h && lidar_feat.w == w, "lidar map shape mismatch");
    BEVA_CHECK(uncertainty.dim(0) == h && uncertainty.dim(1) == w, "uncertainty shape mismatch");
    const int np = h * w;

    DepthAwareMap map;
    map.h = h;
    map.w = w;
    map.source.assign(std::size_t(np), DepthSource::NONE);
    map.depth.assign(std::size_t(np), 0.0);

    std::vector<int> free_pixels;
    for (int pix = 0; pix < np; ++pix) {
        const bool has_lidar = lidar_feat.mask[std::size_t(pix)] &&
                               lidar_feat.depth[std::size_t(pix)] >= fg.d_min &&
                               lidar_feat.depth[std::size_t(pix)] <= fg.d_max;
        if (has_lidar) {
            map.source[std::size_t(pix)] = DepthSource::LIDAR;
            map.depth[std::size_t(pix)] = lidar_feat.depth[std::size_t(pix)];
        } else {
            free_pixels.push_back(pix);
        }
    }

    auto pred_depth = [&](int pix) {
        int best = 0;
        double best_p = mu_dmajor[std::size_t(pix)];
        for (int k = 1; k < d; ++k) {
            const double p = mu_dmajor[std::size_t(k) * np + pix];
            if (p > best_p) {
                best_p = p;
                best = k;
            }
        }
        return fg.bin_center(best);
    };

    std::size_t keep = 0;
    if (mode == GateMode::LIDAR_ONLY || q <= 0.0) {
        keep = mode == GateMode::ALL_PRED ? free_pixels.size() : 0;
    } else if (mode == GateMode::ALL_PRED) {
        keep = free_pixels.size();
    } else {
        keep = std::size_t(std::ceil(q * double(free_pixels.size())));
        keep = std::min(keep, free_pixels.size());
        auto key = [&](int pix) {
            if (mode == GateMode::UNCERTAINTY) return uncertainty[std::size_t(pix)];
            // confidence: rank by max probability, descending
            double best_p = mu_dmajor[std::size_t(pix)];
            for (int k = 1; k < d; ++k)
                best_p = std::max(best_p, mu_dmajor[std::size_t(k) * np + pix]);
            return -best_p;
        };
        std::stable_sort(free_pixels.begin(), free_pixels.end(),
                         [&](int a, int b) { return key(a) < key(b); });
    }
    for (std::size_t i = 0; i < keep; ++i) {
        const int pix = free_pixels[i];
        map.source[std::size_t(pix)] = DepthSource::PRED;
        map.depth[std::size_t(pix)] = pred_depth(pix);
    }
    return map;
}

Tensor build_lift_dist(const DepthAwareMap& map, const Tensor& mu_dmajor,
                       const geometry::FrustumGrid& fg, double soft_blend) {
    BEVA_CHECK(soft_blend >= 0.0 && soft_blend < 1.0, "soft_blend must lie in [0, 1)");
    const int d = mu_dmajor.dim(0), h = mu_dmajor.dim(1), w = mu_dmajor.dim(2);
    const int np = h * w;
    Tensor dist({d, h, w});
    for (int pix = 0; pix < np; ++pix) {
        if (map.source[std::size_t(pix)] == DepthSource::NONE) {
            for (int k = 0; k < d; ++k)
                dist[std::size_t(k) * np + pix] = mu_dmajor[std::size_t(k) * np + pix];
            continue;
        }
        const int bin = fg.nearest_bin(map.depth[std::size_t(pix)]);
        for (int k = 0; k < d; ++k) {
            const double onehot = k == bin ? 1.0 : 0.0;
            dist[std::size_t(k) * np + pix] =
                (1.0 - soft_blend) * onehot + soft_blend * mu_dmajor[std::size_t(k) * np + pix];
        }
    }
    return dist;
}

void ema_update(TeacherState& teacher, const perception::ParamSet& student, double alpha) {
    BEVA_CHECK(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    BEVA_CHECK(teacher.model.params.shapes_match(student), "teacher/student shape mismatch");
    for (std::size_t i = 0; i < student.items.size(); ++i) {
        double* t = teacher.model.params.items[i].value.data();
        const double* s = student.items[i].value.data();
        const std::size_t n = student.items[i].value.size();
        for (std::size_t k = 0; k < n; ++k) t[k] = alpha * t[k] + (1.0 - alpha) * s[k];
    }
    ++teacher.iteration;
}

TeacherOutput teacher_forward(const TeacherState& teacher,
                              const scenegen::MultiViewSample& sample,
                              const geometry::FrustumMapping& map, const TeacherConfig& cfg,
                              std::uint64_t step_stream) {
    static std::atomic<bool> warned_no_lidar{false};
    const perception::Detector& det = teacher.model;
    const int views = det.cfg.num_views;

    TeacherOutput out;
    std::vector<Tensor> lift_dists;
    if (cfg.depth_aware) {
        if (sample.lidar.empty() && !warned_no_lidar.exchange(true))
            std::fprintf(stderr,
                         "warning: depth-aware teacher on a sample without lidar; "
                         "composing from predictions only\n");
        for (int v = 0; v < views; ++v) {
            perception::ViewActs va;
            det.encode_view(sample.images[std::size_t(v)], va);
            auto [mu, u] = mc_uncertainty_dmajor(
                det, va.feat, cfg.mc_passes,
                hash_combine(step_stream, hash_combine(fnv1a64("teacher.mc"), std::uint64_t(v))));
            const scenegen::SparseDepthMap full = scenegen::project_lidar_depth(sample, v);
            const scenegen::SparseDepthMap feat_depth =
                scenegen::downsample_depth(full, det.cfg.frustum.stride);
            DepthAwareMap dmap =
                compose_depth_aware(feat_depth, mu, u, cfg.quantile_q, det.cfg.frustum, cfg.gate);
            lift_dists.push_back(build_lift_dist(dmap, mu, det.cfg.frustum, cfg.soft_blend));
            out.depth_maps.push_back(std::move(dmap));
        }
    }

    perception::SampleActs acts;
    det.forward(sample, map, acts, false, 0, cfg.depth_aware ? &lift_dists : nullptr);
    out.spaces = det.spaces(acts);
    out.detections = perception::decode_detections(acts.heat, acts.reg, det.cfg.voxel,
                                                   cfg.decode_threshold, cfg.max_detections);
    return out;
}

std::vector<scenegen::GtBox> make_pseudo_labels(const std::vector<perception::Detection>& dets,
                                                double score_threshold) {
    std::vector<perception::Detection> kept;
    for (const auto& d : dets)
        if (d.score >= score_threshold) kept.push_back(d);
    return perception::detections_to_boxes(kept);
}

} // namespace bevadapt::dat
