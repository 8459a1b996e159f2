#include "bevadapt/objective.hpp"

#include <cmath>

#include "bevadapt/common.hpp"

namespace bevadapt::objective {

namespace {

// one space term: sum_cells ||t - s||^2 / n_cells, optional gradient add
double space_term(const Tensor& t, const Tensor& s, double inv_cells, double grad_scale,
                  Tensor* ds) {
    BEVA_CHECK(t.size() == s.size(), "teacher/student feature shape mismatch");
    const double* tp = t.data();
    const double* sp = s.data();
    double acc = 0;
    if (ds) {
        BEVA_CHECK(ds->size() == s.size(), "gradient buffer shape mismatch");
        double* dp = ds->data();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double diff = sp[i] - tp[i];
            acc += diff * diff;
            dp[i] += grad_scale * 2.0 * diff * inv_cells;
        }
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double diff = sp[i] - tp[i];
            acc += diff * diff;
        }
    }
    return acc * inv_cells;
}

} // namespace

double loss_mkt(const geometry::SpaceFeatures& teacher, const geometry::SpaceFeatures& student,
                const SpaceToggles& spaces, bool image_mean_views) {
    return loss_mkt_grad(teacher, student, spaces, image_mean_views, 0.0, {});
}

double loss_mkt_grad(const geometry::SpaceFeatures& teacher,
                     const geometry::SpaceFeatures& student, const SpaceToggles& spaces,
                     bool image_mean_views, double grad_scale, const MktGrads& grads) {
    double total = 0;
    if (spaces.image) {
        BEVA_CHECK(teacher.image_feat.size() == student.image_feat.size(), "view count mismatch");
        const double view_scale =
            image_mean_views ? 1.0 / double(std::max<std::size_t>(1, student.image_feat.size()))
                             : 1.0;
        for (std::size_t v = 0; v < student.image_feat.size(); ++v) {
            const Tensor& s = student.image_feat[v];
            const int c = s.dim(0);
            const int cells = int(s.size()) / c;
            Tensor* ds = grads.dimage ? &(*grads.dimage)[v] : nullptr;
            total += space_term(teacher.image_feat[v], s, view_scale / cells, grad_scale, ds);
        }
    }
    if (spaces.voxel) {
        const Tensor& s = student.voxel_feat;
        const int c = s.dim(s.rank() - 1);
        const int cells = int(s.size()) / c;
        total += space_term(teacher.voxel_feat, s, 1.0 / cells, grad_scale, grads.dvoxel);
    }
    if (spaces.bev) {
        const Tensor& s = student.bev_feat;
        const int c = s.dim(0);
        const int cells = int(s.size()) / c;
        total += space_term(teacher.bev_feat, s, 1.0 / cells, grad_scale, grads.dbev);
    }
    return total;
}

double loss_total(double l_uns, double l_sup, double l_mkt, double l_gas, const LossWeights& w) {
    const double vals[4] = {l_uns, l_sup, l_mkt, l_gas};
    const char* names[4] = {"L_UNS", "L_SUP", "L_MKT", "L_GAS"};
    for (int i = 0; i < 4; ++i)
        BEVA_CHECK(std::isfinite(vals[i]), std::string("non-finite loss component ") + names[i]);
    return w.lambda_uns * l_uns + w.lambda_sup * l_sup + w.lambda_mkt * l_mkt +
           w.lambda_gas * l_gas;
}

} // namespace bevadapt::objective
