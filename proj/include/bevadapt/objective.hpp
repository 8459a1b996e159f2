#pragma once

#include "bevadapt/geometry.hpp"

namespace bevadapt::objective {

struct LossWeights {
    double lambda_uns = 1.0;
    double lambda_sup = 1.0;
    double lambda_mkt = 0.1;
    double lambda_gas = 0.1;
};

struct SpaceToggles {
    bool image = true, voxel = true, bev = true;
    bool any() const { return image || voxel || bev; }
};

// Multi-space feature-imitation loss: per enabled space, the squared
// Euclidean distance over channels summed over its spatial cells and divided
// by the cell count (the voxel space counts all X*Y*Z cells, the image space
// is per view H'*W', summed over views unless mean_views is set).
double loss_mkt(const geometry::SpaceFeatures& teacher, const geometry::SpaceFeatures& student,
                const SpaceToggles& spaces, bool image_mean_views = false);

// Adds dL/d(student features) into the provided buffers scaled by
// grad_scale; the teacher side is gradient-free. Buffers must be pre-sized;
// returns the loss value.
struct MktGrads {
    std::vector<Tensor>* dimage = nullptr;
    Tensor* dvoxel = nullptr;
    Tensor* dbev = nullptr;
};
double loss_mkt_grad(const geometry::SpaceFeatures& teacher,
                     const geometry::SpaceFeatures& student, const SpaceToggles& spaces,
                     bool image_mean_views, double grad_scale, const MktGrads& grads);

// lambda1*L_UNS + lambda2*L_SUP + lambda3*L_MKT + lambda4*L_GAS; rejects
// non-finite components naming the offender.
double loss_total(double l_uns, double l_sup, double l_mkt, double l_gas, const LossWeights& w);

} // namespace bevadapt::objective
