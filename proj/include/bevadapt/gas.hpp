#pragma once

#include <array>

#include "bevadapt/geometry.hpp"
#include "bevadapt/params.hpp"
#include "bevadapt/scenegen.hpp"

namespace bevadapt::gas {

// Index order of the three geometric spaces everywhere in this module.
enum Space : int { kImage = 0, kVoxel = 1, kBev = 2 };

struct GasConfig {
    int c_embed = 256;     // shared embedding channel dimension
    int n_categories = 1;
    int proj_hidden = 128;
    int agg_hidden = 256;
    int disc_hidden = 64;
    double reversal_weight = 1.0; // lambda_r at the gradient-reversal boundary
    int c_img = 64, c_vox = 64, c_bev = 48; // per-space pooled channel counts
};

// Per-space projectors, the shared column-wise aggregator, and the domain
// discriminator.
struct AlignHead {
    GasConfig cfg;
    perception::ParamSet params;

    explicit AlignHead(const GasConfig& config);
    void init_params(std::uint64_t seed);
};

struct EmbedActs {
    std::array<Tensor, 3> pooled; // per-space pooled channel vector
    std::array<Tensor, 3> hidden; // projector hidden activation (post-ELU)
    Tensor embedding;             // 3 x C x n
    std::array<bool, 3> enabled{true, true, true};
};

// Global average pooling per space followed by the per-space projector.
// Disabled spaces contribute a zero slot and receive no gradient.
EmbedActs build_embedding(const geometry::SpaceFeatures& feats, const AlignHead& head,
                          std::array<bool, 3> enabled = {true, true, true});

struct ProtoActs {
    Tensor agg_hidden; // hidden x n
    Tensor prototype;  // C x n
};

// Column-wise shared MLP over the 3C-rearranged embedding.
ProtoActs aggregate_prototype(const EmbedActs& embed, const AlignHead& head);

struct DiscActs {
    Tensor hidden;
    double logit = 0;
    double prob = 0.5;
};

DiscActs discriminate(const Tensor& prototype, const AlignHead& head);

// Eq-style alignment objective: log D(F_s) + log(1 - D(F_t)), with the
// discriminator output clamped to [eps, 1-eps] to keep the logs finite.
double loss_gas(const Tensor& proto_src, const Tensor& proto_tgt, const AlignHead& head);

struct GasGrads {
    Tensor dproto_src; // true gradient of the objective value
    Tensor dproto_tgt;
    double value = 0;
};

// True gradients of the objective w.r.t. both prototypes; discriminator
// parameter gradients are accumulated scaled by disc_grad_scale (pass a
// negative scale to make the discriminator ascend the objective).
GasGrads loss_gas_grads(const Tensor& proto_src, const Tensor& proto_tgt, AlignHead& head,
                        double disc_grad_scale);

struct SpaceGrads {
    std::vector<Tensor> dimage; // per view, c_img x h' x w'
    Tensor dvoxel;              // cells x c_vox
    Tensor dbev;                // c_bev x X x Y
};

// Backprop dproto (which carries any loss scaling already) through the
// aggregator, projectors and the pooling broadcast; accumulates head
// parameter gradients and adds feature gradients into `out`, whose tensors
// must be pre-sized to the feature shapes.
void prototype_backward(const geometry::SpaceFeatures& feats, const EmbedActs& embed,
                        const ProtoActs& proto, const Tensor& dproto, AlignHead& head,
                        SpaceGrads& out);

} // namespace bevadapt::gas
