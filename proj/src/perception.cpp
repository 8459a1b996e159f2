#include "bevadapt/perception.hpp"

#include <algorithm>
#include <cmath>

#include "bevadapt/common.hpp"
#include "bevadapt/rng.hpp"

namespace bevadapt::perception {

using kernels::Conv2dShape;

void NetConfig::validate() const {
    BEVA_CHECK(image_h >= 32 && image_w >= 32, "image size too small");
    BEVA_CHECK(image_h % frustum.stride == 0 && image_w % frustum.stride == 0,
               "image size must be divisible by the feature stride");
    BEVA_CHECK(dropout_rho > 0 && dropout_rho < 1, "dropout rate must be in (0,1)");
    BEVA_CHECK(num_categories >= 1, "need at least one category");
    frustum.validate();
    voxel.validate();
}

namespace {

struct ConvLayer {
    Conv2dShape shape;
    const char* wname;
    const char* bname;
};

inline Conv2dShape conv_shape(int cin, int h, int w, int cout, int k, int stride) {
    Conv2dShape s;
    s.cin = cin; s.h = h; s.w = w;
    s.cout = cout; s.kh = k; s.kw = k;
    s.stride = stride; s.pad = k / 2;
    return s;
}

} // namespace

Detector::Detector(const NetConfig& config) : cfg(config) {
    cfg.validate();
    const int d = cfg.frustum.d_bins;
    const int zc = cfg.voxel.nz() * cfg.c_img;
    const int k = cfg.num_categories;
    params.add("enc1.w", {cfg.enc_c1, 3, 3, 3});
    params.add("enc1.b", {cfg.enc_c1});
    params.add("enc2.w", {cfg.enc_c2, cfg.enc_c1, 3, 3});
    params.add("enc2.b", {cfg.enc_c2});
    params.add("enc3.w", {cfg.enc_c3, cfg.enc_c2, 3, 3});
    params.add("enc3.b", {cfg.enc_c3});
    params.add("enc4.w", {cfg.c_img, cfg.enc_c3, 3, 3});
    params.add("enc4.b", {cfg.c_img});
    params.add("depth1.w", {cfg.depth_hidden, cfg.c_img, 3, 3});
    params.add("depth1.b", {cfg.depth_hidden});
    params.add("depth2.w", {d, cfg.depth_hidden, 1, 1});
    params.add("depth2.b", {d});
    params.add("bevr.w", {cfg.bev_c_mid, zc, 1, 1});
    params.add("bevr.b", {cfg.bev_c_mid});
    params.add("bev1.w", {cfg.c_bev, cfg.bev_c_mid, 3, 3});
    params.add("bev1.b", {cfg.c_bev});
    params.add("head_heat.w", {k, cfg.c_bev, 1, 1});
    params.add("head_heat.b", {k});
    params.add("head_reg.w", {6, cfg.c_bev, 1, 1});
    params.add("head_reg.b", {6});
    init_params(0);
}

void Detector::init_params(std::uint64_t seed) {
    Rng rng(hash_combine(fnv1a64("detector.init"), seed));
    for (auto& p : params.items) {
        if (p.name.ends_with(".b")) {
            p.value.zero();
            continue;
        }
        const auto& d = p.value.dims();
        const int fan_in = d.size() == 4 ? d[1] * d[2] * d[3] : d[1];
        double gain = std::sqrt(2.0 / fan_in); // ELU-friendly
        if (p.name == "enc4.w" || p.name == "bev1.w") gain = std::sqrt(1.0 / fan_in);
        if (p.name == "depth2.w") gain = 0.1 * std::sqrt(1.0 / fan_in);
        p.value.randn(rng, gain);
    }
    // detection heads start neutral: zero weights, focal-prior heat bias
    params.at("head_heat.w").value.zero();
    params.at("head_reg.w").value.zero();
    params.at("head_heat.b").value.fill(cfg.heat_bias_init);
    params.at("head_reg.b").value.zero();
}

void Detector::encode_view(const std::vector<float>& image, ViewActs& va) const {
    const int h = cfg.image_h, w = cfg.image_w;
    BEVA_CHECK(int(image.size()) == h * w * 3, "image size mismatch");
    va.input.reshape({3, h, w});
    // HWC float -> CHW double
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                va.input.at(c, y, x) = double(image[(std::size_t(y) * w + x) * 3 + c]);

    const Conv2dShape s1 = conv_shape(3, h, w, cfg.enc_c1, 3, 1);
    const Conv2dShape s2 = conv_shape(cfg.enc_c1, h, w, cfg.enc_c2, 3, 2);
    const Conv2dShape s3 = conv_shape(cfg.enc_c2, s2.oh(), s2.ow(), cfg.enc_c3, 3, 2);
    const Conv2dShape s4 = conv_shape(cfg.enc_c3, s3.oh(), s3.ow(), cfg.c_img, 3, 1);

    Tensor z({cfg.enc_c1, h, w});
    kernels::conv2d_forward(va.input.data(), params.at("enc1.w").value.data(),
                            params.at("enc1.b").value.data(), z.data(), s1);
    va.a1.reshape({cfg.enc_c1, h, w});
    kernels::elu_forward(z.data(), va.a1.data(), z.size());

    Tensor z2({cfg.enc_c2, s2.oh(), s2.ow()});
    kernels::conv2d_forward(va.a1.data(), params.at("enc2.w").value.data(),
                            params.at("enc2.b").value.data(), z2.data(), s2);
    va.a2.reshape({cfg.enc_c2, s2.oh(), s2.ow()});
    kernels::elu_forward(z2.data(), va.a2.data(), z2.size());

    Tensor z3({cfg.enc_c3, s3.oh(), s3.ow()});
    kernels::conv2d_forward(va.a2.data(), params.at("enc3.w").value.data(),
                            params.at("enc3.b").value.data(), z3.data(), s3);
    va.a3.reshape({cfg.enc_c3, s3.oh(), s3.ow()});
    kernels::elu_forward(z3.data(), va.a3.data(), z3.size());

    va.feat.reshape({cfg.c_img, s4.oh(), s4.ow()});
    kernels::conv2d_forward(va.a3.data(), params.at("enc4.w").value.data(),
                            params.at("enc4.b").value.data(), va.feat.data(), s4);
}

Tensor Detector::depth_head_forward(const Tensor& feat, bool stochastic,
                                    std::uint64_t dropout_stream) const {
    const int fh = cfg.feat_h(), fw = cfg.feat_w(), np = cfg.npix();
    const int d = cfg.frustum.d_bins;
    const Conv2dShape sd1 = conv_shape(cfg.c_img, fh, fw, cfg.depth_hidden, 3, 1);
    const Conv2dShape sd2 = conv_shape(cfg.depth_hidden, fh, fw, d, 1, 1);
    Tensor hid({cfg.depth_hidden, fh, fw});
    kernels::conv2d_forward(feat.data(), params.at("depth1.w").value.data(),
                            params.at("depth1.b").value.data(), hid.data(), sd1);
    Tensor act({cfg.depth_hidden, fh, fw});
    kernels::elu_forward(hid.data(), act.data(), hid.size());
    Tensor dropped = act;
    if (stochastic) {
        Tensor mask({cfg.depth_hidden, fh, fw});
        kernels::dropout_forward(act.data(), dropped.data(), mask.data(), act.size(),
                                 cfg.dropout_rho, dropout_stream);
    }
    Tensor logits({d, fh, fw});
    kernels::conv2d_forward(dropped.data(), params.at("depth2.w").value.data(),
                            params.at("depth2.b").value.data(), logits.data(), sd2);
    Tensor dist({d, fh, fw});
    kernels::softmax_channel(logits.data(), dist.data(), d, np);
    return dist;
}

void Detector::forward(const scenegen::MultiViewSample& sample,
                       const geometry::FrustumMapping& map, SampleActs& acts, bool stochastic,
                       std::uint64_t dropout_stream,
                       const std::vector<Tensor>* lift_dist_override) const {
    BEVA_CHECK(int(sample.images.size()) == cfg.num_views, "view count mismatch");
    BEVA_CHECK(map.feat_h == cfg.feat_h() && map.feat_w == cfg.feat_w(), "frustum mapping mismatch");
    const int fh = cfg.feat_h(), fw = cfg.feat_w(), np = cfg.npix();
    const int d = cfg.frustum.d_bins;

    acts.views.resize(std::size_t(cfg.num_views));
    std::vector<const double*> feat_ptrs, dist_ptrs;
    for (int v = 0; v < cfg.num_views; ++v) {
        ViewActs& va = acts.views[std::size_t(v)];
        encode_view(sample.images[std::size_t(v)], va);

        const Conv2dShape sd1 = conv_shape(cfg.c_img, fh, fw, cfg.depth_hidden, 3, 1);
        const Conv2dShape sd2 = conv_shape(cfg.depth_hidden, fh, fw, d, 1, 1);
        Tensor hid({cfg.depth_hidden, fh, fw});
        kernels::conv2d_forward(va.feat.data(), params.at("depth1.w").value.data(),
                                params.at("depth1.b").value.data(), hid.data(), sd1);
        va.depth_hidden.reshape({cfg.depth_hidden, fh, fw});
        kernels::elu_forward(hid.data(), va.depth_hidden.data(), hid.size());
        if (stochastic) {
            va.depth_dropped.reshape({cfg.depth_hidden, fh, fw});
            va.depth_mask.reshape({cfg.depth_hidden, fh, fw});
            kernels::dropout_forward(va.depth_hidden.data(), va.depth_dropped.data(),
                                     va.depth_mask.data(), va.depth_hidden.size(),
                                     cfg.dropout_rho,
                                     hash_combine(dropout_stream, std::uint64_t(v)));
        } else {
            va.depth_dropped = va.depth_hidden;
            va.depth_mask = Tensor();
        }
        va.depth_logits.reshape({d, fh, fw});
        kernels::conv2d_forward(va.depth_dropped.data(), params.at("depth2.w").value.data(),
                                params.at("depth2.b").value.data(), va.depth_logits.data(), sd2);
        va.depth_dist.reshape({d, fh, fw});
        kernels::softmax_channel(va.depth_logits.data(), va.depth_dist.data(), d, np);

        va.lift_is_prediction = lift_dist_override == nullptr;
        va.lift_dist = va.lift_is_prediction ? va.depth_dist : (*lift_dist_override)[std::size_t(v)];
        BEVA_CHECK(int(va.lift_dist.size()) == d * np, "lift distribution shape mismatch");

        va.feat_t.reshape({np, cfg.c_img});
        kernels::transpose_cp(va.feat.data(), va.feat_t.data(), cfg.c_img, np);
        feat_ptrs.push_back(va.feat_t.data());
        dist_ptrs.push_back(va.lift_dist.data());
    }

    const int cells = cfg.voxel.n_cells();
    acts.voxel.reshape({cells, cfg.c_img});
    kernels::liftpool_forward(feat_ptrs, dist_ptrs, map.segments, acts.voxel.data(), cfg.c_img, d,
                              np);

    // voxel rows are (x*ny+y) pixels with nz*c_img channels; conv wants
    // channel-major
    const int nbev = cfg.voxel.nx() * cfg.voxel.ny();
    const int zc = cfg.voxel.nz() * cfg.c_img;
    acts.bev_input.reshape({zc, cfg.voxel.nx(), cfg.voxel.ny()});
    kernels::transpose_pc(acts.voxel.data(), acts.bev_input.data(), nbev, zc);

    const Conv2dShape sr = conv_shape(zc, cfg.voxel.nx(), cfg.voxel.ny(), cfg.bev_c_mid, 1, 1);
    const Conv2dShape sb = conv_shape(cfg.bev_c_mid, cfg.voxel.nx(), cfg.voxel.ny(), cfg.c_bev, 3, 1);
    Tensor zr({cfg.bev_c_mid, cfg.voxel.nx(), cfg.voxel.ny()});
    kernels::conv2d_forward(acts.bev_input.data(), params.at("bevr.w").value.data(),
                            params.at("bevr.b").value.data(), zr.data(), sr);
    acts.bev_mid.reshape({cfg.bev_c_mid, cfg.voxel.nx(), cfg.voxel.ny()});
    kernels::elu_forward(zr.data(), acts.bev_mid.data(), zr.size());
    acts.bev_feat.reshape({cfg.c_bev, cfg.voxel.nx(), cfg.voxel.ny()});
    kernels::conv2d_forward(acts.bev_mid.data(), params.at("bev1.w").value.data(),
                            params.at("bev1.b").value.data(), acts.bev_feat.data(), sb);

    const Conv2dShape sh = conv_shape(cfg.c_bev, cfg.voxel.nx(), cfg.voxel.ny(),
                                      cfg.num_categories, 1, 1);
    const Conv2dShape sg = conv_shape(cfg.c_bev, cfg.voxel.nx(), cfg.voxel.ny(), 6, 1, 1);
    Tensor heat_logits({cfg.num_categories, cfg.voxel.nx(), cfg.voxel.ny()});
    kernels::conv2d_forward(acts.bev_feat.data(), params.at("head_heat.w").value.data(),
                            params.at("head_heat.b").value.data(), heat_logits.data(), sh);
    acts.heat.reshape({cfg.num_categories, cfg.voxel.nx(), cfg.voxel.ny()});
    for (std::size_t i = 0; i < heat_logits.size(); ++i)
        acts.heat[i] = 1.0 / (1.0 + std::exp(-heat_logits[i]));
    acts.reg.reshape({6, cfg.voxel.nx(), cfg.voxel.ny()});
    kernels::conv2d_forward(acts.bev_feat.data(), params.at("head_reg.w").value.data(),
                            params.at("head_reg.b").value.data(), acts.reg.data(), sg);
}

void Detector::backward(const geometry::FrustumMapping& map, const SampleActs& acts,
                        const BackwardSeeds& seeds) {
    const int fh = cfg.feat_h(), fw = cfg.feat_w(), np = cfg.npix();
    const int d = cfg.frustum.d_bins;
    const int nx = cfg.voxel.nx(), ny = cfg.voxel.ny();
    const int nbev = nx * ny;
    const int zc = cfg.voxel.nz() * cfg.c_img;

    // heads -> bev_feat
    Tensor dbev({cfg.c_bev, nx, ny});
    if (!seeds.dbev.empty()) {
        BEVA_CHECK(seeds.dbev.size() == dbev.size(), "dbev seed shape mismatch");
        std::copy(seeds.dbev.data(), seeds.dbev.data() + dbev.size(), dbev.data());
    }
    const Conv2dShape sh = conv_shape(cfg.c_bev, nx, ny, cfg.num_categories, 1, 1);
    const Conv2dShape sg = conv_shape(cfg.c_bev, nx, ny, 6, 1, 1);
    if (!seeds.dheat.empty()) {
        // chain through the sigmoid
        Tensor dlogits({cfg.num_categories, nx, ny});
        for (std::size_t i = 0; i < dlogits.size(); ++i)
            dlogits[i] = seeds.dheat[i] * acts.heat[i] * (1.0 - acts.heat[i]);
        kernels::conv2d_backward_params(dlogits.data(), acts.bev_feat.data(),
                                        params.at("head_heat.w").grad.data(),
                                        params.at("head_heat.b").grad.data(), sh);
        Tensor tmp({cfg.c_bev, nx, ny});
        kernels::conv2d_backward_input(dlogits.data(), params.at("head_heat.w").value.data(),
                                       tmp.data(), sh);
        axpy(1.0, tmp, dbev);
    }
    if (!seeds.dreg.empty()) {
        kernels::conv2d_backward_params(seeds.dreg.data(), acts.bev_feat.data(),
                                        params.at("head_reg.w").grad.data(),
                                        params.at("head_reg.b").grad.data(), sg);
        Tensor tmp({cfg.c_bev, nx, ny});
        kernels::conv2d_backward_input(seeds.dreg.data(), params.at("head_reg.w").value.data(),
                                       tmp.data(), sg);
        axpy(1.0, tmp, dbev);
    }

    // BEV encoder
    const Conv2dShape sb = conv_shape(cfg.bev_c_mid, nx, ny, cfg.c_bev, 3, 1);
    const Conv2dShape sr = conv_shape(zc, nx, ny, cfg.bev_c_mid, 1, 1);
    kernels::conv2d_backward_params(dbev.data(), acts.bev_mid.data(),
                                    params.at("bev1.w").grad.data(),
                                    params.at("bev1.b").grad.data(), sb);
    Tensor dmid({cfg.bev_c_mid, nx, ny});
    kernels::conv2d_backward_input(dbev.data(), params.at("bev1.w").value.data(), dmid.data(), sb);
    Tensor dmid_pre({cfg.bev_c_mid, nx, ny});
    kernels::elu_backward(acts.bev_mid.data(), dmid.data(), dmid_pre.data(), dmid.size());
    kernels::conv2d_backward_params(dmid_pre.data(), acts.bev_input.data(),
                                    params.at("bevr.w").grad.data(),
                                    params.at("bevr.b").grad.data(), sr);
    Tensor dbev_in({zc, nx, ny});
    kernels::conv2d_backward_input(dmid_pre.data(), params.at("bevr.w").value.data(),
                                   dbev_in.data(), sr);

    // back to voxel rows, add the external voxel seed
    Tensor dvoxel({nbev * cfg.voxel.nz(), cfg.c_img});
    kernels::transpose_cp(dbev_in.data(), dvoxel.data(), zc, nbev);
    if (!seeds.dvoxel.empty()) {
        BEVA_CHECK(seeds.dvoxel.size() == dvoxel.size(), "dvoxel seed shape mismatch");
        axpy(1.0, seeds.dvoxel, dvoxel);
    }

    // splat backward
    std::vector<const double*> feat_ptrs, dist_ptrs;
    std::vector<Tensor> dfeat_t(std::size_t(cfg.num_views)), ddist(std::size_t(cfg.num_views));
    std::vector<double*> dfeat_ptrs, ddist_ptrs;
    for (int v = 0; v < cfg.num_views; ++v) {
        const ViewActs& va = acts.views[std::size_t(v)];
        feat_ptrs.push_back(va.feat_t.data());
        dist_ptrs.push_back(va.lift_dist.data());
        dfeat_t[std::size_t(v)].reshape({np, cfg.c_img});
        ddist[std::size_t(v)].reshape({d, fh, fw});
        dfeat_ptrs.push_back(dfeat_t[std::size_t(v)].data());
        ddist_ptrs.push_back(ddist[std::size_t(v)].data());
    }
    kernels::liftpool_backward(feat_ptrs, dist_ptrs, map.segments, dvoxel.data(), dfeat_ptrs,
                               ddist_ptrs, cfg.c_img, d, np);

    const Conv2dShape s1 = conv_shape(3, cfg.image_h, cfg.image_w, cfg.enc_c1, 3, 1);
    const Conv2dShape s2 = conv_shape(cfg.enc_c1, cfg.image_h, cfg.image_w, cfg.enc_c2, 3, 2);
    const Conv2dShape s3 = conv_shape(cfg.enc_c2, s2.oh(), s2.ow(), cfg.enc_c3, 3, 2);
    const Conv2dShape s4 = conv_shape(cfg.enc_c3, s3.oh(), s3.ow(), cfg.c_img, 3, 1);
    const Conv2dShape sd1 = conv_shape(cfg.c_img, fh, fw, cfg.depth_hidden, 3, 1);
    const Conv2dShape sd2 = conv_shape(cfg.depth_hidden, fh, fw, d, 1, 1);

    for (int v = 0; v < cfg.num_views; ++v) {
        const ViewActs& va = acts.views[std::size_t(v)];

        // depth path: lift gradient flows only when lifting used the
        // predicted distribution (the teacher's composed lift is constant)
        Tensor dlogits({d, fh, fw});
        if (va.lift_is_prediction)
            kernels::softmax_backward_channel(va.depth_dist.data(), ddist[std::size_t(v)].data(),
                                              dlogits.data(), d, np);
        if (!seeds.ddepth_logits.empty() && !seeds.ddepth_logits[std::size_t(v)].empty())
            axpy(1.0, seeds.ddepth_logits[std::size_t(v)], dlogits);

        kernels::conv2d_backward_params(dlogits.data(), va.depth_dropped.data(),
                                        params.at("depth2.w").grad.data(),
                                        params.at("depth2.b").grad.data(), sd2);
        Tensor ddropped({cfg.depth_hidden, fh, fw});
        kernels::conv2d_backward_input(dlogits.data(), params.at("depth2.w").value.data(),
                                       ddropped.data(), sd2);
        Tensor dhid({cfg.depth_hidden, fh, fw});
        if (!va.depth_mask.empty())
            kernels::dropout_backward(va.depth_mask.data(), ddropped.data(), dhid.data(),
                                      ddropped.size());
        else
            dhid = ddropped;
        Tensor dhid_pre({cfg.depth_hidden, fh, fw});
        kernels::elu_backward(va.depth_hidden.data(), dhid.data(), dhid_pre.data(), dhid.size());
        kernels::conv2d_backward_params(dhid_pre.data(), va.feat.data(),
                                        params.at("depth1.w").grad.data(),
                                        params.at("depth1.b").grad.data(), sd1);
        Tensor dfeat({cfg.c_img, fh, fw});
        kernels::conv2d_backward_input(dhid_pre.data(), params.at("depth1.w").value.data(),
                                       dfeat.data(), sd1);

        // add splat and external image-space contributions
        Tensor dfeat_from_pool({cfg.c_img, fh, fw});
        kernels::transpose_pc(dfeat_t[std::size_t(v)].data(), dfeat_from_pool.data(), np,
                              cfg.c_img);
        axpy(1.0, dfeat_from_pool, dfeat);
        if (!seeds.dimage.empty() && !seeds.dimage[std::size_t(v)].empty())
            axpy(1.0, seeds.dimage[std::size_t(v)], dfeat);

        // encoder
        kernels::conv2d_backward_params(dfeat.data(), va.a3.data(),
                                        params.at("enc4.w").grad.data(),
                                        params.at("enc4.b").grad.data(), s4);
        Tensor da3({cfg.enc_c3, s3.oh(), s3.ow()});
        kernels::conv2d_backward_input(dfeat.data(), params.at("enc4.w").value.data(), da3.data(),
                                       s4);
        Tensor da3_pre({cfg.enc_c3, s3.oh(), s3.ow()});
        kernels::elu_backward(va.a3.data(), da3.data(), da3_pre.data(), da3.size());
        kernels::conv2d_backward_params(da3_pre.data(), va.a2.data(),
                                        params.at("enc3.w").grad.data(),
                                        params.at("enc3.b").grad.data(), s3);
        Tensor da2({cfg.enc_c2, s2.oh(), s2.ow()});
        kernels::conv2d_backward_input(da3_pre.data(), params.at("enc3.w").value.data(),
                                       da2.data(), s3);
        Tensor da2_pre({cfg.enc_c2, s2.oh(), s2.ow()});
        kernels::elu_backward(va.a2.data(), da2.data(), da2_pre.data(), da2.size());
        kernels::conv2d_backward_params(da2_pre.data(), va.a1.data(),
                                        params.at("enc2.w").grad.data(),
                                        params.at("enc2.b").grad.data(), s2);
        Tensor da1({cfg.enc_c1, cfg.image_h, cfg.image_w});
        kernels::conv2d_backward_input(da2_pre.data(), params.at("enc2.w").value.data(),
                                       da1.data(), s2);
        Tensor da1_pre({cfg.enc_c1, cfg.image_h, cfg.image_w});
        kernels::elu_backward(va.a1.data(), da1.data(), da1_pre.data(), da1.size());
        kernels::conv2d_backward_params(da1_pre.data(), va.input.data(),
                                        params.at("enc1.w").grad.data(),
                                        params.at("enc1.b").grad.data(), s1);
    }
}

geometry::SpaceFeatures Detector::spaces(const SampleActs& acts) const {
    geometry::SpaceFeatures sf;
    for (const auto& va : acts.views) sf.image_feat.push_back(va.feat);
    sf.voxel_feat = acts.voxel;
    sf.bev_feat = acts.bev_feat;
    return sf;
}

Tensor predict_depth_dist(const Detector& det, const scenegen::MultiViewSample& sample, int view,
                          bool stochastic, std::uint64_t dropout_stream) {
    BEVA_CHECK(view >= 0 && view < int(sample.images.size()), "view out of range");
    ViewActs va;
    det.encode_view(sample.images[std::size_t(view)], va);
    Tensor dist = det.depth_head_forward(va.feat, stochastic,
                                         hash_combine(dropout_stream, std::uint64_t(view)));
    const int fh = det.cfg.feat_h(), fw = det.cfg.feat_w(), d = det.cfg.frustum.d_bins;
    Tensor out({fh, fw, d});
    for (int k = 0; k < d; ++k)
        for (int y = 0; y < fh; ++y)
            for (int x = 0; x < fw; ++x) out.at(y, x, k) = dist.at(k, y, x);
    return out;
}

// ---------------------------------------------------------------------------
// targets, decode, losses
// ---------------------------------------------------------------------------

DetectionTargets render_targets(const std::vector<scenegen::GtBox>& boxes,
                                const geometry::VoxelGridSpec& grid, int num_categories) {
    const int nx = grid.nx(), ny = grid.ny();
    DetectionTargets t;
    t.heat.reshape({num_categories, nx, ny});
    for (const auto& b : boxes) {
        const int ix = int(std::floor((b.center.x - grid.x_min) / grid.dx));
        const int iy = int(std::floor((b.center.y - grid.y_min) / grid.dy));
        if (ix < 0 || ix >= nx || iy < 0 || iy >= ny) continue; // outside BEV range
        CenterTarget c;
        c.ix = ix;
        c.iy = iy;
        c.category = b.category % num_categories;
        c.reg[0] = (b.center.x - grid.x_min) / grid.dx - (ix + 0.5);
        c.reg[1] = (b.center.y - grid.y_min) / grid.dy - (iy + 0.5);
        c.reg[2] = b.center.z;
        c.reg[3] = std::log(b.length);
        c.reg[4] = std::log(b.width);
        c.reg[5] = b.yaw;
        t.centers.push_back(c);

        const int radius =
            std::max(1, int(std::lround(0.3 * std::max(b.length, b.width) / grid.dx)));
        const double sigma = (2.0 * radius + 1.0) / 6.0;
        for (int dx = -radius; dx <= radius; ++dx)
            for (int dy = -radius; dy <= radius; ++dy) {
                const int px = ix + dx, py = iy + dy;
                if (px < 0 || px >= nx || py < 0 || py >= ny) continue;
                const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                double& cell = t.heat.at(c.category, px, py);
                cell = std::max(cell, g);
            }
        t.heat.at(c.category, ix, iy) = 1.0;
    }
    return t;
}

std::vector<Detection> decode_detections(const Tensor& heat, const Tensor& reg,
                                         const geometry::VoxelGridSpec& grid,
                                         double score_threshold, int max_k) {
    const int k = heat.dim(0), nx = heat.dim(1), ny = heat.dim(2);
    std::vector<Detection> dets;
    for (int c = 0; c < k; ++c)
        for (int ix = 0; ix < nx; ++ix)
            for (int iy = 0; iy < ny; ++iy) {
                const double p = heat.at(c, ix, iy);
                if (p <= score_threshold) continue;
                bool is_peak = true;
                for (int dx = -1; dx <= 1 && is_peak; ++dx)
                    for (int dy = -1; dy <= 1; ++dy) {
                        if (dx == 0 && dy == 0) continue;
                        const int px = ix + dx, py = iy + dy;
                        if (px < 0 || px >= nx || py < 0 || py >= ny) continue;
                        if (heat.at(c, px, py) > p) {
                            is_peak = false;
                            break;
                        }
                    }
                if (!is_peak) continue;
                Detection det;
                det.score = p;
                det.category = c;
                det.center.x = grid.x_min + (ix + 0.5 + reg.at(0, ix, iy)) * grid.dx;
                det.center.y = grid.y_min + (iy + 0.5 + reg.at(1, ix, iy)) * grid.dy;
                det.center.z = reg.at(2, ix, iy);
                det.length = std::exp(reg.at(3, ix, iy));
                det.width = std::exp(reg.at(4, ix, iy));
                det.height = std::max(0.1, 2.0 * det.center.z); // boxes rest on the ground
                det.yaw = reg.at(5, ix, iy);
                dets.push_back(det);
            }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (int(dets.size()) > max_k) dets.resize(std::size_t(max_k));
    return dets;
}

namespace {
inline double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }
} // namespace

double loss_detection(const Tensor& heat, const Tensor& reg, const DetectionTargets& targets) {
    Tensor dh, dr;
    return loss_detection_grad(heat, reg, targets, dh, dr);
}

double loss_detection_grad(const Tensor& heat, const Tensor& reg, const DetectionTargets& targets,
                           Tensor& dheat, Tensor& dreg) {
    BEVA_CHECK(heat.same_shape(targets.heat), "heatmap shape mismatch");
    const bool want_grad = !dheat.empty() || !dreg.empty();
    if (want_grad) {
        BEVA_CHECK(dheat.same_shape(heat) && dreg.same_shape(reg), "gradient buffers mismatch");
    }
    const double n = std::max<std::size_t>(1, targets.centers.size());
    const std::size_t total = heat.size();
    std::vector<double> terms(total);
    // focal part; exact zero at (p=1 on centers, p=0 elsewhere)
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(total); ++i) {
        const double y = targets.heat[std::size_t(i)];
        const double p_raw = heat[std::size_t(i)];
        if (y == 1.0) {
            if (p_raw >= 1.0) {
                terms[std::size_t(i)] = 0.0;
                continue;
            }
            const double p = clamp_prob(p_raw);
            terms[std::size_t(i)] = -(1 - p) * (1 - p) * std::log(p);
        } else {
            if (p_raw <= 0.0) {
                terms[std::size_t(i)] = 0.0;
                continue;
            }
            const double p = clamp_prob(p_raw);
            const double wneg = std::pow(1 - y, 4.0);
            terms[std::size_t(i)] = -wneg * p * p * std::log(1 - p);
        }
    }
    double loss = kernels::sum_det(terms.data(), total) / n;
    if (!dheat.empty()) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < std::int64_t(total); ++i) {
            const double y = targets.heat[std::size_t(i)];
            const double p = clamp_prob(heat[std::size_t(i)]);
            double g;
            if (y == 1.0) {
                g = 2 * (1 - p) * std::log(p) - (1 - p) * (1 - p) / p;
            } else {
                const double wneg = std::pow(1 - y, 4.0);
                g = -wneg * (2 * p * std::log(1 - p) - p * p / (1 - p));
            }
            dheat[std::size_t(i)] += g / n;
        }
    }
    // L1 regression at center cells
    double reg_loss = 0;
    for (const auto& c : targets.centers) {
        for (int ch = 0; ch < 6; ++ch) {
            const double diff = reg.at(ch, c.ix, c.iy) - c.reg[ch];
            reg_loss += std::abs(diff);
            if (!dreg.empty()) dreg.at(ch, c.ix, c.iy) += (diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0) / n;
        }
    }
    loss += reg_loss / n;
    return loss;
}

double loss_depth(const Tensor& depth_dist, const scenegen::SparseDepthMap& feat_depth,
                  const geometry::FrustumGrid& fg) {
    BEVA_CHECK(depth_dist.rank() == 3, "expected H' x W' x D");
    const int h = depth_dist.dim(0), w = depth_dist.dim(1), d = depth_dist.dim(2);
    BEVA_CHECK(feat_depth.h == h && feat_depth.w == w, "depth map shape mismatch");
    BEVA_CHECK(d == fg.d_bins, "bin count mismatch");
    double acc = 0;
    std::size_t valid = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = std::size_t(y) * w + x;
            if (!feat_depth.mask[idx]) continue;
            const int bin = fg.containing_bin(feat_depth.depth[idx]);
            if (bin < 0) continue; // out-of-range lidar pixel is skipped
            acc += -std::log(clamp_prob(depth_dist.at(y, x, bin)));
            ++valid;
        }
    return valid == 0 ? 0.0 : acc / double(valid);
}

double loss_depth_grad_logits(const Tensor& dist_dmajor,
                              const scenegen::SparseDepthMap& feat_depth,
                              const geometry::FrustumGrid& fg, Tensor& dlogits) {
    const int d = dist_dmajor.dim(0), h = dist_dmajor.dim(1), w = dist_dmajor.dim(2);
    BEVA_CHECK(feat_depth.h == h && feat_depth.w == w, "depth map shape mismatch");
    const int np = h * w;
    // count valid pixels first (normalization)
    std::vector<int> bins(std::size_t(np), -1);
    std::size_t valid = 0;
    for (int pix = 0; pix < np; ++pix) {
        if (!feat_depth.mask[std::size_t(pix)]) continue;
        const int bin = fg.containing_bin(feat_depth.depth[std::size_t(pix)]);
        if (bin < 0) continue;
        bins[std::size_t(pix)] = bin;
        ++valid;
    }
    if (!dlogits.empty())
        BEVA_CHECK(dlogits.same_shape(dist_dmajor), "dlogits shape mismatch");
    if (valid == 0) return 0.0;
    double acc = 0;
    const double inv = 1.0 / double(valid);
    for (int pix = 0; pix < np; ++pix) {
        const int bin = bins[std::size_t(pix)];
        if (bin < 0) continue;
        acc += -std::log(clamp_prob(dist_dmajor[std::size_t(bin) * np + pix]));
        if (!dlogits.empty())
            for (int k = 0; k < d; ++k)
                dlogits[std::size_t(k) * np + pix] +=
                    (dist_dmajor[std::size_t(k) * np + pix] - (k == bin ? 1.0 : 0.0)) * inv;
    }
    return acc * inv;
}

std::vector<scenegen::GtBox> detections_to_boxes(const std::vector<Detection>& dets) {
    std::vector<scenegen::GtBox> boxes;
    boxes.reserve(dets.size());
    for (const auto& d : dets) {
        scenegen::GtBox b;
        b.center = d.center;
        b.length = d.length;
        b.width = d.width;
        b.height = d.height;
        b.yaw = d.yaw;
        b.category = d.category;
        boxes.push_back(b);
    }
    return boxes;
}

} // namespace bevadapt::perception
