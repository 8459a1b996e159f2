#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bevadapt/kernels.hpp"
#include "bevadapt/rng.hpp"
#include "bevadapt/tensor.hpp"
#include "oracles.hpp"

using namespace bevadapt;
namespace k = bevadapt::kernels;

template <class F>
double oracles_fd(F&& f, double* x) {
    return oracles::central_diff(std::function<double()>(f), x);
}

namespace {

Tensor randn(std::initializer_list<int> dims, std::uint64_t seed, double scale = 1.0) {
    Tensor t(dims);
    Rng rng(seed);
    t.randn(rng, scale);
    return t;
}

// plain O(everything) convolution, no reuse of the library loop structure
Tensor conv_naive(const Tensor& in, const Tensor& w, const Tensor& b, const k::Conv2dShape& s) {
    Tensor out({s.cout, s.oh(), s.ow()});
    for (int oc = 0; oc < s.cout; ++oc)
        for (int oy = 0; oy < s.oh(); ++oy)
            for (int ox = 0; ox < s.ow(); ++ox) {
                double acc = b.empty() ? 0.0 : b[std::size_t(oc)];
                for (int ic = 0; ic < s.cin; ++ic)
                    for (int ky = 0; ky < s.kh; ++ky)
                        for (int kx = 0; kx < s.kw; ++kx) {
                            const int iy = oy * s.stride - s.pad + ky;
                            const int ix = ox * s.stride - s.pad + kx;
                            if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                            acc += in.at(ic, iy, ix) * w.at(oc, ic, ky, kx);
                        }
                out.at(oc, oy, ox) = acc;
            }
    return out;
}

} // namespace

TEST_CASE("conv2d forward matches a naive reference and the serial twin bitwise") {
    for (int stride : {1, 2}) {
        k::Conv2dShape s;
        s.cin = 5;
        s.h = 13;
        s.w = 17;
        s.cout = 7;
        s.kh = s.kw = 3;
        s.stride = stride;
        s.pad = 1;
        const Tensor in = randn({s.cin, s.h, s.w}, 11);
        const Tensor w = randn({s.cout, s.cin, 3, 3}, 22);
        const Tensor b = randn({s.cout}, 33);
        Tensor out({s.cout, s.oh(), s.ow()});
        Tensor out_ref({s.cout, s.oh(), s.ow()});
        k::conv2d_forward(in.data(), w.data(), b.data(), out.data(), s);
        k::serial::conv2d_forward(in.data(), w.data(), b.data(), out_ref.data(), s);
        CHECK(max_abs_diff(out, out_ref) == 0.0);
        const Tensor naive = conv_naive(in, w, b, s);
        CHECK(max_abs_diff(out, naive) < 1e-10);
    }
}

TEST_CASE("conv2d backward matches finite differences through the forward") {
    k::Conv2dShape s;
    s.cin = 3;
    s.h = 6;
    s.w = 5;
    s.cout = 4;
    s.kh = s.kw = 3;
    s.stride = 2;
    s.pad = 1;
    Tensor in = randn({s.cin, s.h, s.w}, 1);
    Tensor w = randn({s.cout, s.cin, 3, 3}, 2);
    Tensor b = randn({s.cout}, 3);
    const Tensor proj = randn({s.cout, s.oh(), s.ow()}, 4); // loss = <proj, out>

    auto loss = [&] {
        Tensor out({s.cout, s.oh(), s.ow()});
        k::conv2d_forward(in.data(), w.data(), b.data(), out.data(), s);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += proj[i] * out[i];
        return acc;
    };

    Tensor din({s.cin, s.h, s.w});
    k::conv2d_backward_input(proj.data(), w.data(), din.data(), s);
    Tensor dw({s.cout, s.cin, 3, 3}), db({s.cout});
    k::conv2d_backward_params(proj.data(), in.data(), dw.data(), db.data(), s);

    Rng rng(99);
    for (int probe = 0; probe < 30; ++probe) {
        const std::size_t i = rng.below(in.size());
        const double fd = oracles_fd(loss, &in[i]);
        CHECK(std::abs(fd - din[i]) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (int probe = 0; probe < 30; ++probe) {
        const std::size_t i = rng.below(w.size());
        const double fd = oracles_fd(loss, &w[i]);
        CHECK(std::abs(fd - dw[i]) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double fd = oracles_fd(loss, &b[i]);
        CHECK(std::abs(fd - db[i]) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("dense layers round-trip gradients") {
    const int bs = 3, nin = 7, nout = 5;
    Tensor in = randn({bs, nin}, 5);
    Tensor w = randn({nout, nin}, 6);
    Tensor b = randn({nout}, 7);
    const Tensor proj = randn({bs, nout}, 8);
    auto loss = [&] {
        Tensor out({bs, nout});
        k::dense_forward(in.data(), w.data(), b.data(), out.data(), bs, nin, nout);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += proj[i] * out[i];
        return acc;
    };
    Tensor din({bs, nin}), dw({nout, nin}), db({nout});
    k::dense_backward_input(proj.data(), w.data(), din.data(), bs, nin, nout);
    k::dense_backward_params(proj.data(), in.data(), dw.data(), db.data(), bs, nin, nout);
    for (std::size_t i = 0; i < in.size(); ++i)
        CHECK(std::abs(oracles_fd(loss, &in[i]) - din[i]) < 1e-6);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(std::abs(oracles_fd(loss, &w[i]) - dw[i]) < 1e-6);
    for (std::size_t i = 0; i < b.size(); ++i)
        CHECK(std::abs(oracles_fd(loss, &b[i]) - db[i]) < 1e-6);
}

TEST_CASE("softmax normalizes and its backward matches finite differences") {
    const int d = 6, np = 10;
    Tensor z = randn({d, np}, 13);
    Tensor p({d, np});
    k::softmax_channel(z.data(), p.data(), d, np);
    for (int pix = 0; pix < np; ++pix) {
        double sum = 0;
        for (int kk = 0; kk < d; ++kk) sum += p[std::size_t(kk) * np + pix];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    Tensor p_ref({d, np});
    k::serial::softmax_channel(z.data(), p_ref.data(), d, np);
    CHECK(max_abs_diff(p, p_ref) == 0.0);

    const Tensor proj = randn({d, np}, 14);
    auto loss = [&] {
        Tensor q({d, np});
        k::softmax_channel(z.data(), q.data(), d, np);
        double acc = 0;
        for (std::size_t i = 0; i < q.size(); ++i) acc += proj[i] * q[i];
        return acc;
    };
    Tensor dz({d, np});
    k::softmax_backward_channel(p.data(), proj.data(), dz.data(), d, np);
    Rng rng(15);
    for (int probe = 0; probe < 40; ++probe) {
        const std::size_t i = rng.below(z.size());
        CHECK(std::abs(oracles_fd(loss, &z[i]) - dz[i]) < 1e-6);
    }
}

TEST_CASE("elu and dropout backward agree with finite differences") {
    const std::size_t n = 64;
    Tensor x = randn({int(n)}, 21);
    Tensor proj = randn({int(n)}, 22);
    auto loss = [&] {
        Tensor y({int(n)});
        k::elu_forward(x.data(), y.data(), n);
        double acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += proj[i] * y[i];
        return acc;
    };
    Tensor y({int(n)}), dx({int(n)});
    k::elu_forward(x.data(), y.data(), n);
    k::elu_backward(y.data(), proj.data(), dx.data(), n);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(std::abs(oracles_fd(loss, &x[i]) - dx[i]) < 1e-5);

    // dropout: same mask for the same stream, zero/scale structure
    Tensor m1({int(n)}), m2({int(n)}), out({int(n)});
    k::dropout_forward(x.data(), out.data(), m1.data(), n, 0.4, 123);
    k::dropout_forward(x.data(), out.data(), m2.data(), n, 0.4, 123);
    CHECK(max_abs_diff(m1, m2) == 0.0);
    for (std::size_t i = 0; i < n; ++i)
        CHECK((m1[i] == 0.0 || std::abs(m1[i] - 1.0 / 0.6) < 1e-12));
}

TEST_CASE("pool segments group points deterministically and pool matches serial") {
    Rng rng(31);
    const int p = 500, c = 9, cells = 40;
    std::vector<int> cell_of(p);
    for (int i = 0; i < p; ++i) cell_of[std::size_t(i)] = int(rng.below(cells + 5)) - 5; // some -1..-5
    for (int& ci : cell_of)
        if (ci < 0) ci = -1;
    k::PoolSegments seg;
    seg.build(cell_of, cells);
    // grouped ids cover exactly the inside points, ascending inside each cell
    std::size_t counted = 0;
    for (int cell = 0; cell < cells; ++cell)
        for (int i = seg.offsets[std::size_t(cell)]; i < seg.offsets[std::size_t(cell) + 1]; ++i) {
            CHECK(seg.cell_of[std::size_t(seg.order[std::size_t(i)])] == cell);
            if (i > seg.offsets[std::size_t(cell)])
                CHECK(seg.order[std::size_t(i)] > seg.order[std::size_t(i - 1)]);
            ++counted;
        }
    std::size_t inside = 0;
    for (int ci : cell_of)
        if (ci >= 0) ++inside;
    CHECK(counted == inside);

    const Tensor feat = randn({p, c}, 32);
    Tensor out({cells, c}), out_ref({cells, c});
    k::pool_sum_forward(feat.data(), seg, out.data(), c);
    k::serial::pool_sum_forward(feat.data(), seg, out_ref.data(), c);
    CHECK(max_abs_diff(out, out_ref) == 0.0);

    // backward is the gather of the cell gradient
    const Tensor dout = randn({cells, c}, 33);
    Tensor dfeat({p, c});
    k::pool_sum_backward(dout.data(), seg, dfeat.data(), c);
    for (int i = 0; i < p; ++i)
        for (int ch = 0; ch < c; ++ch)
            CHECK(dfeat.at(i, ch) ==
                  (cell_of[std::size_t(i)] < 0 ? 0.0 : dout.at(cell_of[std::size_t(i)], ch)));
}

TEST_CASE("deterministic sum is exact on a permutation-fixed order and matches serial") {
    Tensor x = randn({10007}, 44);
    CHECK(k::sum_det(x.data(), x.size()) == k::serial::sum_det(x.data(), x.size()));
}

TEST_CASE("fused liftpool equals lift followed by pooling, serial and parallel") {
    Rng rng(55);
    const int views = 2, np = 12, d = 5, c = 7, cells = 30;
    std::vector<int> cell_of(std::size_t(views) * np * d);
    for (auto& ci : cell_of) ci = int(rng.below(cells + 3)) - 3;
    for (auto& ci : cell_of)
        if (ci < 0) ci = -1;
    k::PoolSegments seg;
    seg.build(cell_of, cells);

    std::vector<Tensor> feat_t, dist;
    std::vector<const double*> fp, dp;
    for (int v = 0; v < views; ++v) {
        feat_t.push_back(randn({np, c}, 100 + std::uint64_t(v)));
        Tensor logits = randn({d, np}, 200 + std::uint64_t(v));
        Tensor pd({d, np});
        k::softmax_channel(logits.data(), pd.data(), d, np);
        dist.push_back(pd);
    }
    for (int v = 0; v < views; ++v) {
        fp.push_back(feat_t[std::size_t(v)].data());
        dp.push_back(dist[std::size_t(v)].data());
    }
    Tensor fused({cells, c}), fused_ref({cells, c});
    k::liftpool_forward(fp, dp, seg, fused.data(), c, d, np);
    k::serial::liftpool_forward(fp, dp, seg, fused_ref.data(), c, d, np);
    CHECK(max_abs_diff(fused, fused_ref) == 0.0);

    // composed route: materialize lifted features per frustum point, pool them
    Tensor lifted({views * np * d, c});
    for (int v = 0; v < views; ++v)
        for (int pix = 0; pix < np; ++pix)
            for (int bin = 0; bin < d; ++bin)
                for (int ch = 0; ch < c; ++ch)
                    lifted.at((v * np + pix) * d + bin, ch) =
                        dist[std::size_t(v)][std::size_t(bin) * np + pix] *
                        feat_t[std::size_t(v)].at(pix, ch);
    Tensor pooled({cells, c});
    k::pool_sum_forward(lifted.data(), seg, pooled.data(), c);
    CHECK(max_abs_diff(fused, pooled) < 1e-12);

    // backward vs finite differences through the fused forward
    const Tensor proj = randn({cells, c}, 300);
    auto loss = [&] {
        Tensor out({cells, c});
        k::liftpool_forward(fp, dp, seg, out.data(), c, d, np);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += proj[i] * out[i];
        return acc;
    };
    std::vector<Tensor> dfeat(views), ddist(views);
    std::vector<double*> dfp, ddp;
    for (int v = 0; v < views; ++v) {
        dfeat[std::size_t(v)].reshape({np, c});
        ddist[std::size_t(v)].reshape({d, np});
        dfp.push_back(dfeat[std::size_t(v)].data());
        ddp.push_back(ddist[std::size_t(v)].data());
    }
    k::liftpool_backward(fp, dp, seg, proj.data(), dfp, ddp, c, d, np);
    for (int probe = 0; probe < 40; ++probe) {
        const int v = int(rng.below(views));
        const std::size_t i = rng.below(feat_t[std::size_t(v)].size());
        CHECK(std::abs(oracles_fd(loss, &feat_t[std::size_t(v)][i]) - dfeat[std::size_t(v)][i]) <
              1e-6);
        const std::size_t j = rng.below(dist[std::size_t(v)].size());
        CHECK(std::abs(oracles_fd(loss, &dist[std::size_t(v)][j]) - ddist[std::size_t(v)][j]) <
              1e-6);
    }
}

TEST_CASE("transpose kernels invert each other") {
    const int c = 6, np = 11;
    Tensor a = randn({c, np}, 61);
    Tensor b({np, c}), back({c, np});
    k::transpose_cp(a.data(), b.data(), c, np);
    k::transpose_pc(b.data(), back.data(), np, c);
    CHECK(max_abs_diff(a, back) == 0.0);
}
