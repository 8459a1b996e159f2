#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bevadapt/geometry.hpp"
#include "bevadapt/params.hpp"
#include "bevadapt/scenegen.hpp"
#include "bevadapt/tensor.hpp"

namespace bevadapt::perception {

// Shape-defining hyperparameters of the detector.
struct NetConfig {
    int image_h = 32, image_w = 48;
    int num_views = 4;
    int enc_c1 = 16, enc_c2 = 32, enc_c3 = 32;
    int c_img = 64;        // encoder output channels at stride 4 (linear head)
    int depth_hidden = 32; // depth sub-network hidden width (dropout site lives here)
    double dropout_rho = 0.3;
    geometry::FrustumGrid frustum; // d_bins over [d_min, d_max], stride
    geometry::VoxelGridSpec voxel;
    int bev_c_mid = 48;
    int c_bev = 48;
    int num_categories = 1;
    double heat_bias_init = -2.19; // sigmoid prior ~0.1

    int feat_h() const { return image_h / frustum.stride; }
    int feat_w() const { return image_w / frustum.stride; }
    int npix() const { return feat_h() * feat_w(); }
    void validate() const;
};

struct Detection {
    Vec3 center;
    double length = 0, width = 0, height = 0, yaw = 0;
    int category = 0;
    double score = 0;
};

// Per-view forward activations kept for the backward pass.
struct ViewActs {
    Tensor input;             // 3 x H x W
    Tensor a1, a2, a3;        // post-ELU encoder stages
    Tensor feat;              // c_img x h' x w' (linear output)
    Tensor feat_t;            // npix x c_img, pooling layout
    Tensor depth_hidden;      // post-ELU
    Tensor depth_dropped;     // after dropout (equals depth_hidden when inactive)
    Tensor depth_mask;        // dropout mask (empty when inactive)
    Tensor depth_logits;      // D x npix
    Tensor depth_dist;        // D x npix softmax of the logits
    Tensor lift_dist;         // D x npix distribution actually used for lifting
    bool lift_is_prediction = true;
};

struct SampleActs {
    std::vector<ViewActs> views;
    Tensor voxel;      // (X*Y*Z) x c_img rows == X x Y x Z x C layout
    Tensor bev_input;  // (Z*c_img) x X x Y
    Tensor bev_mid;    // post-ELU
    Tensor bev_feat;   // c_bev x X x Y (linear)
    Tensor heat;       // K x X x Y sigmoid probabilities
    Tensor reg;        // 6 x X x Y: dx, dy, z, log l, log w, yaw
};

// External gradient contributions entering the backward pass. Tensors may be
// empty (treated as zero).
struct BackwardSeeds {
    Tensor dheat;                    // dL/d(heat probabilities), K x X x Y
    Tensor dreg;                     // 6 x X x Y
    Tensor dbev;                     // c_bev x X x Y
    Tensor dvoxel;                   // (X*Y*Z) x c_img
    std::vector<Tensor> dimage;      // per view, c_img x h' x w'
    std::vector<Tensor> ddepth_logits; // per view, D x npix (pre-softmax, fused CE)
};

class Detector {
public:
    NetConfig cfg;
    ParamSet params;

    explicit Detector(const NetConfig& config);
    void init_params(std::uint64_t seed);

    // Distributions used for lifting can be overridden per view (depth-aware
    // teacher); stochastic enables the dropout site with the given stream.
    void forward(const scenegen::MultiViewSample& sample, const geometry::FrustumMapping& map,
                 SampleActs& acts, bool stochastic = false, std::uint64_t dropout_stream = 0,
                 const std::vector<Tensor>* lift_dist_override = nullptr) const;

    // Accumulates parameter gradients; acts must come from forward() on this
    // detector. Seeds may be partially empty.
    void backward(const geometry::FrustumMapping& map, const SampleActs& acts,
                  const BackwardSeeds& seeds);

    // Re-runs only the depth sub-network on saved trunk activations.
    // Returns D x npix softmax output.
    Tensor depth_head_forward(const Tensor& feat, bool stochastic,
                              std::uint64_t dropout_stream) const;

    geometry::SpaceFeatures spaces(const SampleActs& acts) const;

    void encode_view(const std::vector<float>& image, ViewActs& va) const;
};

// Standalone depth-distribution op in the documented H' x W' x D layout.
Tensor predict_depth_dist(const Detector& det, const scenegen::MultiViewSample& sample, int view,
                          bool stochastic, std::uint64_t dropout_stream);

// ---------------------------------------------------------------------------
// detection targets / decode / losses
// ---------------------------------------------------------------------------

struct CenterTarget {
    int ix = 0, iy = 0;   // BEV cell
    int category = 0;
    double reg[6] = {0, 0, 0, 0, 0, 0};
};

struct DetectionTargets {
    Tensor heat;                      // K x X x Y gaussian splat, 1.0 at centers
    std::vector<CenterTarget> centers;
};

DetectionTargets render_targets(const std::vector<scenegen::GtBox>& boxes,
                                const geometry::VoxelGridSpec& grid, int num_categories);

// Local 3x3 maxima above the score threshold, best max_k, sorted by score.
// Height is recovered from the z channel (boxes rest on the ground plane).
std::vector<Detection> decode_detections(const Tensor& heat, const Tensor& reg,
                                         const geometry::VoxelGridSpec& grid,
                                         double score_threshold, int max_k);

// Penalty-reduced focal loss on the splatted heatmap plus L1 on regression
// channels at center cells, both normalized by max(1, #centers). Zero exactly
// when heat is 1 at centers / 0 elsewhere and regression matches the targets.
double loss_detection(const Tensor& heat, const Tensor& reg, const DetectionTargets& targets);

// dheat/dreg are accumulated into (must be zero-initialized or carry other
// contributions already).
double loss_detection_grad(const Tensor& heat, const Tensor& reg, const DetectionTargets& targets,
                           Tensor& dheat, Tensor& dreg);

// Cross-entropy against the one-hot lidar bin, mean over valid pixels whose
// depth lies inside [d_min, d_max]; dist layout H' x W' x D.
double loss_depth(const Tensor& depth_dist, const scenegen::SparseDepthMap& feat_depth,
                  const geometry::FrustumGrid& fg);

// Fused gradient at the logits: (softmax - onehot) / V per valid pixel.
// dist layout D x npix (network layout); returns the same loss value.
double loss_depth_grad_logits(const Tensor& dist_dmajor, const scenegen::SparseDepthMap& feat_depth,
                              const geometry::FrustumGrid& fg, Tensor& dlogits);

std::vector<scenegen::GtBox> detections_to_boxes(const std::vector<Detection>& dets);

} // namespace bevadapt::perception
