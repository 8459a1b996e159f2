#pragma once

#include <utility>
#include <vector>

#include "bevadapt/perception.hpp"

namespace bevadapt::dat {

// Per-pixel dispersion of a stack of per-pixel distributions: the mean
// distribution and U = sqrt(mean_i ||p_i - mu||^2) with the Euclidean norm
// over bins. For one bin this reduces to the population standard deviation.
// passes: m tensors of shape H' x W' x D. Returns (mu, U).
std::pair<Tensor, Tensor> uncertainty_from_passes(const std::vector<Tensor>& passes);

// m stochastic depth-head evaluations on a shared trunk; D-major layouts.
// Returns mu (D x H' x W') and U (H' x W').
std::pair<Tensor, Tensor> mc_uncertainty_dmajor(const perception::Detector& det,
                                                const Tensor& view_feat, int m,
                                                std::uint64_t stream);

// Documented-layout op: runs the encoder itself. Returns (mu H'xW'xD, U H'xW').
std::pair<Tensor, Tensor> mc_uncertainty(const perception::Detector& det,
                                         const scenegen::MultiViewSample& sample, int view, int m,
                                         std::uint64_t stream);

enum class DepthSource : std::uint8_t { LIDAR = 0, PRED = 1, NONE = 2 };

enum class GateMode : std::uint8_t {
    UNCERTAINTY = 0, // keep the lowest-U fraction q of non-lidar pixels
    CONFIDENCE = 1,  // keep the highest max-probability fraction q
    ALL_PRED = 2,    // keep every non-lidar pixel
    LIDAR_ONLY = 3,  // no predicted depth at all
};

const char* to_string(GateMode m);
GateMode gate_mode_from_string(const std::string& s);

struct DepthAwareMap {
    int h = 0, w = 0;
    std::vector<DepthSource> source;
    std::vector<double> depth; // meters; meaningful iff source != NONE

    std::size_t count(DepthSource s) const;
};

// Lidar pixels (with in-range depth) win unconditionally; of the remaining
// pixels, the gate selects ceil(q * count) as PRED with depth = bin center of
// argmax(mu); everything else is NONE and later keeps mu as its lift
// distribution. q = 0 selects nothing.
DepthAwareMap compose_depth_aware(const scenegen::SparseDepthMap& lidar_feat,
                                  const Tensor& mu_dmajor, const Tensor& uncertainty, double q,
                                  const geometry::FrustumGrid& fg,
                                  GateMode mode = GateMode::UNCERTAINTY);

// Lift distributions for the composed map: one-hot at the nearest bin for
// LIDAR/PRED pixels (optionally blended with mu), mu for NONE pixels.
Tensor build_lift_dist(const DepthAwareMap& map, const Tensor& mu_dmajor,
                       const geometry::FrustumGrid& fg, double soft_blend = 0.0);

// EMA-tracked mirror of the student detector parameters.
struct TeacherState {
    perception::Detector model;
    double alpha = 0.99;
    std::int64_t iteration = 0;

    explicit TeacherState(const perception::NetConfig& cfg) : model(cfg) {}
};

// theta_T <- alpha * theta_T + (1 - alpha) * theta_S; increments iteration.
void ema_update(TeacherState& teacher, const perception::ParamSet& student, double alpha);

struct TeacherConfig {
    int mc_passes = 10;
    double quantile_q = 0.7;
    GateMode gate = GateMode::UNCERTAINTY;
    double soft_blend = 0.0;
    bool depth_aware = true; // toggled off: teacher lifts with its own prediction
    double decode_threshold = 0.1;
    int max_detections = 64;
};

struct TeacherOutput {
    geometry::SpaceFeatures spaces;
    std::vector<perception::Detection> detections;
    std::vector<DepthAwareMap> depth_maps; // per view (empty when depth_aware off)
};

// Full teacher pass on one target sample. No gradients ever flow into the
// teacher: the caller only reads the outputs. Samples without lidar fall back
// to PRED/NONE composition (warns once per process).
TeacherOutput teacher_forward(const TeacherState& teacher,
                              const scenegen::MultiViewSample& sample,
                              const geometry::FrustumMapping& map, const TeacherConfig& cfg,
                              std::uint64_t step_stream);

// Detections at or above the score threshold converted to training labels.
std::vector<scenegen::GtBox> make_pseudo_labels(const std::vector<perception::Detection>& dets,
                                                double score_threshold);

} // namespace bevadapt::dat
