#include "bevadapt/gas.hpp"

#include <cmath>

#include "bevadapt/common.hpp"
#include "bevadapt/rng.hpp"

namespace bevadapt::gas {

namespace {

const char* space_name(int s) { return s == kImage ? "img" : s == kVoxel ? "vox" : "bev"; }

inline double elu(double x) { return x > 0 ? x : std::expm1(x); }
inline double elu_grad_from_out(double out) { return out > 0 ? 1.0 : out + 1.0; }

constexpr double kEps = 1e-7;

} // namespace

AlignHead::AlignHead(const GasConfig& config) : cfg(config) {
    const int cn = cfg.c_embed * cfg.n_categories;
    const int cs[3] = {cfg.c_img, cfg.c_vox, cfg.c_bev};
    for (int s = 0; s < 3; ++s) {
        const std::string p = std::string("proj_") + space_name(s);
        params.add(p + ".w1", {cfg.proj_hidden, cs[s]});
        params.add(p + ".b1", {cfg.proj_hidden});
        params.add(p + ".w2", {cn, cfg.proj_hidden});
        params.add(p + ".b2", {cn});
    }
    params.add("agg.w1", {cfg.agg_hidden, 3 * cfg.c_embed});
    params.add("agg.b1", {cfg.agg_hidden});
    params.add("agg.w2", {cfg.c_embed, cfg.agg_hidden});
    params.add("agg.b2", {cfg.c_embed});
    params.add("disc.w1", {cfg.disc_hidden, cn});
    params.add("disc.b1", {cfg.disc_hidden});
    params.add("disc.w2", {1, cfg.disc_hidden});
    params.add("disc.b2", {1});
    init_params(0);
}

void AlignHead::init_params(std::uint64_t seed) {
    Rng rng(hash_combine(fnv1a64("align.init"), seed));
    for (auto& p : params.items) {
        if (p.name.ends_with(".b1") || p.name.ends_with(".b2")) {
            p.value.zero();
            continue;
        }
        const int fan_in = p.value.dim(1);
        p.value.randn(rng, std::sqrt(2.0 / fan_in));
    }
    // zero-initialized final discriminator layer starts at D = 0.5 exactly
    params.at("disc.w2").value.zero();
}

EmbedActs build_embedding(const geometry::SpaceFeatures& feats, const AlignHead& head,
                          std::array<bool, 3> enabled) {
    const GasConfig& cfg = head.cfg;
    const int cn = cfg.c_embed * cfg.n_categories;
    EmbedActs acts;
    acts.enabled = enabled;
    acts.embedding.reshape({3, cfg.c_embed, cfg.n_categories});

    for (int s = 0; s < 3; ++s) {
        if (!enabled[std::size_t(s)]) continue;
        // pool the space to a channel vector
        Tensor pooled;
        if (s == kImage) {
            BEVA_CHECK(!feats.image_feat.empty(), "missing image features");
            const int c = feats.image_feat[0].dim(0);
            const int np = int(feats.image_feat[0].size()) / c;
            pooled.reshape({c});
            for (const Tensor& view : feats.image_feat)
                for (int ch = 0; ch < c; ++ch) {
                    const double* row = view.data() + std::size_t(ch) * np;
                    double acc = 0;
                    for (int p = 0; p < np; ++p) acc += row[p];
                    pooled[std::size_t(ch)] += acc;
                }
            const double inv = 1.0 / (double(feats.image_feat.size()) * np);
            for (int ch = 0; ch < c; ++ch) pooled[std::size_t(ch)] *= inv;
        } else if (s == kVoxel) {
            // voxel rows are cells, columns are channels
            const int c = feats.voxel_feat.dim(feats.voxel_feat.rank() - 1);
            const int cells = int(feats.voxel_feat.size()) / c;
            pooled.reshape({c});
            const double* v = feats.voxel_feat.data();
            for (int cell = 0; cell < cells; ++cell)
                for (int ch = 0; ch < c; ++ch) pooled[std::size_t(ch)] += v[std::size_t(cell) * c + ch];
            for (int ch = 0; ch < c; ++ch) pooled[std::size_t(ch)] /= cells;
        } else {
            const int c = feats.bev_feat.dim(0);
            const int np = int(feats.bev_feat.size()) / c;
            pooled.reshape({c});
            kernels::global_avg_pool(feats.bev_feat.data(), pooled.data(), c, np);
        }
        const std::string p = std::string("proj_") + space_name(s);
        const Tensor& w1 = head.params.at(p + ".w1").value;
        BEVA_CHECK(w1.dim(1) == pooled.dim(0), "projector input width mismatch");

        Tensor pre({cfg.proj_hidden});
        kernels::dense_forward(pooled.data(), w1.data(), head.params.at(p + ".b1").value.data(),
                               pre.data(), 1, pooled.dim(0), cfg.proj_hidden);
        Tensor hid({cfg.proj_hidden});
        for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = elu(pre[i]);
        Tensor out({cn});
        kernels::dense_forward(hid.data(), head.params.at(p + ".w2").value.data(),
                               head.params.at(p + ".b2").value.data(), out.data(), 1,
                               cfg.proj_hidden, cn);
        for (int c = 0; c < cfg.c_embed; ++c)
            for (int j = 0; j < cfg.n_categories; ++j)
                acts.embedding.at(s, c, j) = out[std::size_t(c) * cfg.n_categories + j];
        acts.pooled[std::size_t(s)] = std::move(pooled);
        acts.hidden[std::size_t(s)] = std::move(hid);
    }
    return acts;
}

ProtoActs aggregate_prototype(const EmbedActs& embed, const AlignHead& head) {
    const GasConfig& cfg = head.cfg;
    BEVA_CHECK(embed.embedding.rank() == 3 && embed.embedding.dim(0) == 3 &&
                   embed.embedding.dim(1) == cfg.c_embed,
               "embedding must be 3 x C x n");
    const int n = embed.embedding.dim(2);
    // rearrange to n rows of 3C
    Tensor cols({n, 3 * cfg.c_embed});
    for (int j = 0; j < n; ++j)
        for (int s = 0; s < 3; ++s)
            for (int c = 0; c < cfg.c_embed; ++c)
                cols.at(j, s * cfg.c_embed + c) = embed.embedding.at(s, c, j);
    ProtoActs acts;
    Tensor pre({n, cfg.agg_hidden});
    kernels::dense_forward(cols.data(), head.params.at("agg.w1").value.data(),
                           head.params.at("agg.b1").value.data(), pre.data(), n,
                           3 * cfg.c_embed, cfg.agg_hidden);
    acts.agg_hidden.reshape({n, cfg.agg_hidden});
    for (std::size_t i = 0; i < pre.size(); ++i) acts.agg_hidden[i] = elu(pre[i]);
    Tensor out({n, cfg.c_embed});
    kernels::dense_forward(acts.agg_hidden.data(), head.params.at("agg.w2").value.data(),
                           head.params.at("agg.b2").value.data(), out.data(), n, cfg.agg_hidden,
                           cfg.c_embed);
    acts.prototype.reshape({cfg.c_embed, n});
    for (int c = 0; c < cfg.c_embed; ++c)
        for (int j = 0; j < n; ++j) acts.prototype.at(c, j) = out.at(j, c);
    return acts;
}

DiscActs discriminate(const Tensor& prototype, const AlignHead& head) {
    const GasConfig& cfg = head.cfg;
    const int cn = cfg.c_embed * cfg.n_categories;
    BEVA_CHECK(int(prototype.size()) == cn, "prototype must be C x n");
    DiscActs acts;
    Tensor pre({cfg.disc_hidden});
    kernels::dense_forward(prototype.data(), head.params.at("disc.w1").value.data(),
                           head.params.at("disc.b1").value.data(), pre.data(), 1, cn,
                           cfg.disc_hidden);
    acts.hidden.reshape({cfg.disc_hidden});
    for (std::size_t i = 0; i < pre.size(); ++i) acts.hidden[i] = elu(pre[i]);
    Tensor z({1});
    kernels::dense_forward(acts.hidden.data(), head.params.at("disc.w2").value.data(),
                           head.params.at("disc.b2").value.data(), z.data(), 1, cfg.disc_hidden, 1);
    acts.logit = z[0];
    acts.prob = 1.0 / (1.0 + std::exp(-acts.logit));
    return acts;
}

double loss_gas(const Tensor& proto_src, const Tensor& proto_tgt, const AlignHead& head) {
    const DiscActs ds = discriminate(proto_src, head);
    const DiscActs dt = discriminate(proto_tgt, head);
    const double ps = std::clamp(ds.prob, kEps, 1.0 - kEps);
    const double pt = std::clamp(dt.prob, kEps, 1.0 - kEps);
    return std::log(ps) + std::log(1.0 - pt);
}

namespace {

// backprop one discriminator evaluation from dL/dz; accumulates parameter
// grads scaled by param_scale and returns dL/d(prototype)
Tensor disc_backward(const Tensor& prototype, const DiscActs& acts, double dz, AlignHead& head,
                     double param_scale) {
    const GasConfig& cfg = head.cfg;
    const int cn = cfg.c_embed * cfg.n_categories;
    Tensor dhid({cfg.disc_hidden});
    const Tensor& w2 = head.params.at("disc.w2").value;
    for (int i = 0; i < cfg.disc_hidden; ++i)
        dhid[std::size_t(i)] = dz * w2[std::size_t(i)] * elu_grad_from_out(acts.hidden[std::size_t(i)]);
    // param grads
    Tensor& gw2 = head.params.at("disc.w2").grad;
    Tensor& gb2 = head.params.at("disc.b2").grad;
    for (int i = 0; i < cfg.disc_hidden; ++i)
        gw2[std::size_t(i)] += param_scale * dz * acts.hidden[std::size_t(i)];
    gb2[0] += param_scale * dz;
    Tensor& gw1 = head.params.at("disc.w1").grad;
    Tensor& gb1 = head.params.at("disc.b1").grad;
    const Tensor& w1 = head.params.at("disc.w1").value;
    Tensor dproto({cfg.c_embed, cfg.n_categories});
    for (int i = 0; i < cfg.disc_hidden; ++i) {
        const double g = dhid[std::size_t(i)];
        gb1[std::size_t(i)] += param_scale * g;
        for (int k = 0; k < cn; ++k) {
            gw1[std::size_t(i) * cn + k] += param_scale * g * prototype[std::size_t(k)];
            dproto[std::size_t(k)] += g * w1[std::size_t(i) * cn + k];
        }
    }
    return dproto;
}

} // namespace

GasGrads loss_gas_grads(const Tensor& proto_src, const Tensor& proto_tgt, AlignHead& head,
                        double disc_grad_scale) {
    const DiscActs ds = discriminate(proto_src, head);
    const DiscActs dt = discriminate(proto_tgt, head);
    const double ps = std::clamp(ds.prob, kEps, 1.0 - kEps);
    const double pt = std::clamp(dt.prob, kEps, 1.0 - kEps);
    GasGrads out;
    out.value = std::log(ps) + std::log(1.0 - pt);
    // d log(sigma(z))/dz = 1 - sigma; d log(1-sigma)/dz = -sigma; zero when clamped
    const double dzs = (ds.prob > kEps && ds.prob < 1.0 - kEps) ? (1.0 - ds.prob) : 0.0;
    const double dzt = (dt.prob > kEps && dt.prob < 1.0 - kEps) ? (-dt.prob) : 0.0;
    out.dproto_src = disc_backward(proto_src, ds, dzs, head, disc_grad_scale);
    out.dproto_tgt = disc_backward(proto_tgt, dt, dzt, head, disc_grad_scale);
    return out;
}

void prototype_backward(const geometry::SpaceFeatures& feats, const EmbedActs& embed,
                        const ProtoActs& proto, const Tensor& dproto, AlignHead& head,
                        SpaceGrads& out) {
    const GasConfig& cfg = head.cfg;
    const int n = cfg.n_categories;
    const int cn = cfg.c_embed * n;

    // aggregator backward (column-wise, batch = n)
    Tensor dout({n, cfg.c_embed});
    for (int c = 0; c < cfg.c_embed; ++c)
        for (int j = 0; j < n; ++j) dout.at(j, c) = dproto.at(c, j);
    Tensor dhid({n, cfg.agg_hidden});
    kernels::dense_backward_input(dout.data(), head.params.at("agg.w2").value.data(), dhid.data(),
                                  n, cfg.agg_hidden, cfg.c_embed);
    kernels::dense_backward_params(dout.data(), proto.agg_hidden.data(),
                                   head.params.at("agg.w2").grad.data(),
                                   head.params.at("agg.b2").grad.data(), n, cfg.agg_hidden,
                                   cfg.c_embed);
    for (std::size_t i = 0; i < dhid.size(); ++i)
        dhid[i] *= elu_grad_from_out(proto.agg_hidden[i]);
    // rebuild aggregator input (3C per column) for the weight gradient
    Tensor cols({n, 3 * cfg.c_embed});
    for (int j = 0; j < n; ++j)
        for (int s = 0; s < 3; ++s)
            for (int c = 0; c < cfg.c_embed; ++c)
                cols.at(j, s * cfg.c_embed + c) = embed.embedding.at(s, c, j);
    Tensor dcols({n, 3 * cfg.c_embed});
    kernels::dense_backward_input(dhid.data(), head.params.at("agg.w1").value.data(), dcols.data(),
                                  n, 3 * cfg.c_embed, cfg.agg_hidden);
    kernels::dense_backward_params(dhid.data(), cols.data(), head.params.at("agg.w1").grad.data(),
                                   head.params.at("agg.b1").grad.data(), n, 3 * cfg.c_embed,
                                   cfg.agg_hidden);

    // per-space projector backward + broadcast into the feature grids
    for (int s = 0; s < 3; ++s) {
        if (!embed.enabled[std::size_t(s)]) continue;
        const std::string p = std::string("proj_") + space_name(s);
        Tensor dembed({cn});
        for (int c = 0; c < cfg.c_embed; ++c)
            for (int j = 0; j < n; ++j)
                dembed[std::size_t(c) * n + j] = dcols.at(j, s * cfg.c_embed + c);
        const Tensor& hid = embed.hidden[std::size_t(s)];
        const Tensor& pooled = embed.pooled[std::size_t(s)];
        Tensor dh({cfg.proj_hidden});
        kernels::dense_backward_input(dembed.data(), head.params.at(p + ".w2").value.data(),
                                      dh.data(), 1, cfg.proj_hidden, cn);
        kernels::dense_backward_params(dembed.data(), hid.data(),
                                       head.params.at(p + ".w2").grad.data(),
                                       head.params.at(p + ".b2").grad.data(), 1, cfg.proj_hidden,
                                       cn);
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= elu_grad_from_out(hid[i]);
        const int c_in = pooled.dim(0);
        Tensor dpooled({c_in});
        kernels::dense_backward_input(dh.data(), head.params.at(p + ".w1").value.data(),
                                      dpooled.data(), 1, c_in, cfg.proj_hidden);
        kernels::dense_backward_params(dh.data(), pooled.data(),
                                       head.params.at(p + ".w1").grad.data(),
                                       head.params.at(p + ".b1").grad.data(), 1, c_in,
                                       cfg.proj_hidden);

        // mean-pool broadcast
        if (s == kImage) {
            const int c = c_in;
            const int np = int(feats.image_feat[0].size()) / c;
            const double inv = 1.0 / (double(feats.image_feat.size()) * np);
            for (std::size_t v = 0; v < feats.image_feat.size(); ++v) {
                BEVA_CHECK(out.dimage[v].size() == feats.image_feat[v].size(),
                           "dimage buffer mismatch");
                double* dst = out.dimage[v].data();
                for (int ch = 0; ch < c; ++ch) {
                    const double g = dpooled[std::size_t(ch)] * inv;
                    double* row = dst + std::size_t(ch) * np;
                    for (int pix = 0; pix < np; ++pix) row[pix] += g;
                }
            }
        } else if (s == kVoxel) {
            const int c = c_in;
            const int cells = int(feats.voxel_feat.size()) / c;
            const double inv = 1.0 / cells;
            BEVA_CHECK(out.dvoxel.size() == feats.voxel_feat.size(), "dvoxel buffer mismatch");
            double* dst = out.dvoxel.data();
            for (int cell = 0; cell < cells; ++cell)
                for (int ch = 0; ch < c; ++ch)
                    dst[std::size_t(cell) * c + ch] += dpooled[std::size_t(ch)] * inv;
        } else {
            const int c = c_in;
            const int np = int(feats.bev_feat.size()) / c;
            BEVA_CHECK(out.dbev.size() == feats.bev_feat.size(), "dbev buffer mismatch");
            kernels::global_avg_pool_backward_accum(dpooled.data(), out.dbev.data(), c, np);
        }
    }
}

} // namespace bevadapt::gas
