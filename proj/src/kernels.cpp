#include "bevadapt/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "bevadapt/common.hpp"
#include "bevadapt/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bevadapt::kernels {

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

// One output row (fixed oc, oy). Accumulates over (ic, ky, kx) with the ox
// loop innermost so the compiler can vectorize along the row.
inline void conv2d_row(const double* in, const double* w, const double* b, double* out,
                       const Conv2dShape& s, int oc, int oy) {
    const int ow = s.ow();
    double* orow = out + (std::size_t(oc) * s.oh() + oy) * ow;
    const double bias = b ? b[oc] : 0.0;
    for (int ox = 0; ox < ow; ++ox) orow[ox] = bias;
    for (int ic = 0; ic < s.cin; ++ic) {
        const double* iplane = in + std::size_t(ic) * s.h * s.w;
        const double* wboard = w + (std::size_t(oc) * s.cin + ic) * s.kh * s.kw;
        for (int ky = 0; ky < s.kh; ++ky) {
            const int iy = oy * s.stride - s.pad + ky;
            if (iy < 0 || iy >= s.h) continue;
            const double* irow = iplane + std::size_t(iy) * s.w;
            for (int kx = 0; kx < s.kw; ++kx) {
                const double wv = wboard[ky * s.kw + kx];
                const int x0 = -s.pad + kx;
                // valid ox range for this tap
                int lo = 0, hi = ow;
                if (s.stride == 1) {
                    lo = std::max(0, -x0);
                    hi = std::min(ow, s.w - x0);
                    const double* ip = irow + x0;
                    for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * ip[ox];
                } else {
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * s.stride + x0;
                        if (ix >= 0 && ix < s.w) orow[ox] += wv * irow[ix];
                    }
                }
            }
        }
    }
}

// One input row of the gradient (fixed ic, iy), gather form.
inline void conv2d_din_row(const double* dout, const double* w, double* din,
                           const Conv2dShape& s, int ic, int iy) {
    const int oh = s.oh(), ow = s.ow();
    double* drow = din + (std::size_t(ic) * s.h + iy) * s.w;
    for (int ix = 0; ix < s.w; ++ix) drow[ix] = 0.0;
    for (int oc = 0; oc < s.cout; ++oc) {
        const double* dplane = dout + std::size_t(oc) * oh * ow;
        const double* wboard = w + (std::size_t(oc) * s.cin + ic) * s.kh * s.kw;
        for (int ky = 0; ky < s.kh; ++ky) {
            const int ynum = iy + s.pad - ky;
            if (ynum < 0 || ynum % s.stride != 0) continue;
            const int oy = ynum / s.stride;
            if (oy >= oh) continue;
            const double* drow_o = dplane + std::size_t(oy) * ow;
            for (int kx = 0; kx < s.kw; ++kx) {
                const double wv = wboard[ky * s.kw + kx];
                if (s.stride == 1) {
                    const int shift = s.pad - kx; // ox = ix + shift
                    const int lo = std::max(0, -shift);
                    const int hi = std::min(s.w, ow - shift);
                    const double* dp = drow_o + shift;
                    for (int ix = lo; ix < hi; ++ix) drow[ix] += wv * dp[ix];
                } else {
                    for (int ix = 0; ix < s.w; ++ix) {
                        const int xnum = ix + s.pad - kx;
                        if (xnum < 0 || xnum % s.stride != 0) continue;
                        const int ox = xnum / s.stride;
                        if (ox < ow) drow[ix] += wv * drow_o[ox];
                    }
                }
            }
        }
    }
}

// Gradient of one filter tap (fixed oc, ic, ky, kx): full spatial reduction.
inline double conv2d_dw_tap(const double* dout, const double* in, const Conv2dShape& s,
                            int oc, int ic, int ky, int kx) {
    const int oh = s.oh(), ow = s.ow();
    const double* dplane = dout + std::size_t(oc) * oh * ow;
    const double* iplane = in + std::size_t(ic) * s.h * s.w;
    double acc = 0.0;
    for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * s.stride - s.pad + ky;
        if (iy < 0 || iy >= s.h) continue;
        const double* drow = dplane + std::size_t(oy) * ow;
        const double* irow = iplane + std::size_t(iy) * s.w;
        const int x0 = -s.pad + kx;
        if (s.stride == 1) {
            const int lo = std::max(0, -x0);
            const int hi = std::min(ow, s.w - x0);
            const double* ip = irow + x0;
            for (int ox = lo; ox < hi; ++ox) acc += drow[ox] * ip[ox];
        } else {
            for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * s.stride + x0;
                if (ix >= 0 && ix < s.w) acc += drow[ox] * irow[ix];
            }
        }
    }
    return acc;
}

} // namespace

void conv2d_forward(const double* in, const double* w, const double* b, double* out,
                    const Conv2dShape& s) {
    const int oh = s.oh();
    const int rows = s.cout * oh;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) conv2d_row(in, w, b, out, s, r / oh, r % oh);
}

void serial::conv2d_forward(const double* in, const double* w, const double* b, double* out,
                            const Conv2dShape& s) {
    const int oh = s.oh();
    for (int r = 0; r < s.cout * oh; ++r) conv2d_row(in, w, b, out, s, r / oh, r % oh);
}

void conv2d_backward_input(const double* dout, const double* w, double* din,
                           const Conv2dShape& s) {
    const int rows = s.cin * s.h;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) conv2d_din_row(dout, w, din, s, r / s.h, r % s.h);
}

void serial::conv2d_backward_input(const double* dout, const double* w, double* din,
                                   const Conv2dShape& s) {
    for (int r = 0; r < s.cin * s.h; ++r) conv2d_din_row(dout, w, din, s, r / s.h, r % s.h);
}

void conv2d_backward_params(const double* dout, const double* in, double* dw, double* db,
                            const Conv2dShape& s) {
    const int taps = s.cout * s.cin * s.kh * s.kw;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < taps; ++t) {
        const int kx = t % s.kw;
        const int ky = (t / s.kw) % s.kh;
        const int ic = (t / (s.kw * s.kh)) % s.cin;
        const int oc = t / (s.kw * s.kh * s.cin);
        dw[t] += conv2d_dw_tap(dout, in, s, oc, ic, ky, kx);
    }
    if (db) {
        const int oh = s.oh(), ow = s.ow();
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < s.cout; ++oc) {
            const double* dplane = dout + std::size_t(oc) * oh * ow;
            double acc = 0.0;
            for (int i = 0; i < oh * ow; ++i) acc += dplane[i];
            db[oc] += acc;
        }
    }
}

void serial::conv2d_backward_params(const double* dout, const double* in, double* dw, double* db,
                                    const Conv2dShape& s) {
    const int taps = s.cout * s.cin * s.kh * s.kw;
    for (int t = 0; t < taps; ++t) {
        const int kx = t % s.kw;
        const int ky = (t / s.kw) % s.kh;
        const int ic = (t / (s.kw * s.kh)) % s.cin;
        const int oc = t / (s.kw * s.kh * s.cin);
        dw[t] += conv2d_dw_tap(dout, in, s, oc, ic, ky, kx);
    }
    if (db) {
        const int oh = s.oh(), ow = s.ow();
        for (int oc = 0; oc < s.cout; ++oc) {
            const double* dplane = dout + std::size_t(oc) * oh * ow;
            double acc = 0.0;
            for (int i = 0; i < oh * ow; ++i) acc += dplane[i];
            db[oc] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

namespace {
inline double dense_out_one(const double* in, const double* w, const double* bias,
                            int nin, int bi, int o) {
    const double* irow = in + std::size_t(bi) * nin;
    const double* wrow = w + std::size_t(o) * nin;
    double acc = bias ? bias[o] : 0.0;
    for (int i = 0; i < nin; ++i) acc += irow[i] * wrow[i];
    return acc;
}
} // namespace

void dense_forward(const double* in, const double* w, const double* bias, double* out,
                   int b, int nin, int nout) {
    const int total = b * nout;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < total; ++t)
        out[t] = dense_out_one(in, w, bias, nin, t / nout, t % nout);
}

void serial::dense_forward(const double* in, const double* w, const double* bias, double* out,
                           int b, int nin, int nout) {
    for (int t = 0; t < b * nout; ++t)
        out[t] = dense_out_one(in, w, bias, nin, t / nout, t % nout);
}

void dense_backward_input(const double* dout, const double* w, double* din,
                          int b, int nin, int nout) {
    const int total = b * nin;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < total; ++t) {
        const int bi = t / nin, i = t % nin;
        const double* drow = dout + std::size_t(bi) * nout;
        double acc = 0.0;
        for (int o = 0; o < nout; ++o) acc += drow[o] * w[std::size_t(o) * nin + i];
        din[t] = acc;
    }
}

void dense_backward_params(const double* dout, const double* in, double* dw, double* dbias,
                           int b, int nin, int nout) {
    const int total = nout * nin;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < total; ++t) {
        const int o = t / nin, i = t % nin;
        double acc = 0.0;
        for (int bi = 0; bi < b; ++bi)
            acc += dout[std::size_t(bi) * nout + o] * in[std::size_t(bi) * nin + i];
        dw[t] += acc;
    }
    if (dbias) {
        for (int o = 0; o < nout; ++o) {
            double acc = 0.0;
            for (int bi = 0; bi < b; ++bi) acc += dout[std::size_t(bi) * nout + o];
            dbias[o] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// pointwise
// ---------------------------------------------------------------------------

void elu_forward(const double* in, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i)
        out[i] = in[i] > 0.0 ? in[i] : std::expm1(in[i]);
}

void serial::elu_forward(const double* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = in[i] > 0.0 ? in[i] : std::expm1(in[i]);
}

void elu_backward(const double* out, const double* dout, double* din, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i)
        din[i] = out[i] > 0.0 ? dout[i] : dout[i] * (out[i] + 1.0);
}

void dropout_forward(const double* in, double* out, double* mask, std::size_t n,
                     double rho, std::uint64_t stream) {
    const double keep_scale = 1.0 / (1.0 - rho);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
        const double m = hash_uniform(stream, std::uint64_t(i)) < rho ? 0.0 : keep_scale;
        mask[i] = m;
        out[i] = in[i] * m;
    }
}

void dropout_backward(const double* mask, const double* dout, double* din, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i) din[i] = dout[i] * mask[i];
}

// ---------------------------------------------------------------------------
// softmax over the channel axis
// ---------------------------------------------------------------------------

namespace {
inline void softmax_one(const double* z, double* p, int d, int npix, int pix) {
    double zmax = z[pix];
    for (int k = 1; k < d; ++k) zmax = std::max(zmax, z[std::size_t(k) * npix + pix]);
    double sum = 0.0;
    for (int k = 0; k < d; ++k) {
        const double e = std::exp(z[std::size_t(k) * npix + pix] - zmax);
        p[std::size_t(k) * npix + pix] = e;
        sum += e;
    }
    const double inv = 1.0 / sum;
    for (int k = 0; k < d; ++k) p[std::size_t(k) * npix + pix] *= inv;
}
} // namespace

void softmax_channel(const double* z, double* p, int d, int npix) {
#pragma omp parallel for schedule(static)
    for (int pix = 0; pix < npix; ++pix) softmax_one(z, p, d, npix, pix);
}

void serial::softmax_channel(const double* z, double* p, int d, int npix) {
    for (int pix = 0; pix < npix; ++pix) softmax_one(z, p, d, npix, pix);
}

void softmax_backward_channel(const double* p, const double* dp, double* dz, int d, int npix) {
#pragma omp parallel for schedule(static)
    for (int pix = 0; pix < npix; ++pix) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k)
            dot += p[std::size_t(k) * npix + pix] * dp[std::size_t(k) * npix + pix];
        for (int k = 0; k < d; ++k) {
            const std::size_t idx = std::size_t(k) * npix + pix;
            dz[idx] = p[idx] * (dp[idx] - dot);
        }
    }
}

// ---------------------------------------------------------------------------
// layout helpers / reductions
// ---------------------------------------------------------------------------

void transpose_cp(const double* in, double* out, int c, int npix) {
#pragma omp parallel for schedule(static)
    for (int p = 0; p < npix; ++p)
        for (int k = 0; k < c; ++k)
            out[std::size_t(p) * c + k] = in[std::size_t(k) * npix + p];
}

void transpose_pc(const double* in, double* out, int npix, int c) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < c; ++k)
        for (int p = 0; p < npix; ++p)
            out[std::size_t(k) * npix + p] = in[std::size_t(p) * c + k];
}

void global_avg_pool(const double* in, double* out, int c, int npix) {
    const double inv = 1.0 / npix;
#pragma omp parallel for schedule(static)
    for (int k = 0; k < c; ++k) {
        const double* row = in + std::size_t(k) * npix;
        double acc = 0.0;
        for (int p = 0; p < npix; ++p) acc += row[p];
        out[k] = acc * inv;
    }
}

void global_avg_pool_backward_accum(const double* dout, double* din, int c, int npix) {
    const double inv = 1.0 / npix;
#pragma omp parallel for schedule(static)
    for (int k = 0; k < c; ++k) {
        const double g = dout[k] * inv;
        double* row = din + std::size_t(k) * npix;
        for (int p = 0; p < npix; ++p) row[p] += g;
    }
}

namespace {
constexpr std::size_t kSumChunks = 256;
}

double sum_det(const double* x, std::size_t n) {
    if (n == 0) return 0.0;
    const std::size_t chunk = (n + kSumChunks - 1) / kSumChunks;
    double partial[kSumChunks] = {0.0};
    const int used = int((n + chunk - 1) / chunk);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < used; ++ci) {
        const std::size_t lo = std::size_t(ci) * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i];
        partial[ci] = acc;
    }
    double total = 0.0;
    for (int ci = 0; ci < used; ++ci) total += partial[ci];
    return total;
}

double serial::sum_det(const double* x, std::size_t n) {
    if (n == 0) return 0.0;
    const std::size_t chunk = (n + kSumChunks - 1) / kSumChunks;
    double partial[kSumChunks] = {0.0};
    const int used = int((n + chunk - 1) / chunk);
    for (int ci = 0; ci < used; ++ci) {
        const std::size_t lo = std::size_t(ci) * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i];
        partial[ci] = acc;
    }
    double total = 0.0;
    for (int ci = 0; ci < used; ++ci) total += partial[ci];
    return total;
}

void add_scaled(double* y, const double* x, double a, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i) y[i] += a * x[i];
}

void scale(double* y, double a, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i) y[i] *= a;
}

// ---------------------------------------------------------------------------
// sum pooling over cells
// ---------------------------------------------------------------------------

void PoolSegments::build(std::vector<int> cell_of_point, int cells) {
    n_cells = cells;
    cell_of = std::move(cell_of_point);
    offsets.assign(std::size_t(n_cells) + 1, 0);
    for (int c : cell_of)
        if (c >= 0) ++offsets[std::size_t(c) + 1];
    for (int i = 0; i < n_cells; ++i) offsets[std::size_t(i) + 1] += offsets[i];
    order.assign(offsets[std::size_t(n_cells)], 0);
    std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
    // counting sort keeps ascending point order within each cell
    for (int p = 0; p < int(cell_of.size()); ++p) {
        const int c = cell_of[std::size_t(p)];
        if (c >= 0) order[std::size_t(cursor[std::size_t(c)]++)] = p;
    }
}

namespace {
inline void pool_cell(const double* feat, const PoolSegments& seg, double* out, int c, int cell) {
    double* orow = out + std::size_t(cell) * c;
    for (int k = 0; k < c; ++k) orow[k] = 0.0;
    for (int i = seg.offsets[std::size_t(cell)]; i < seg.offsets[std::size_t(cell) + 1]; ++i) {
        const double* frow = feat + std::size_t(seg.order[std::size_t(i)]) * c;
        for (int k = 0; k < c; ++k) orow[k] += frow[k];
    }
}
} // namespace

void pool_sum_forward(const double* feat, const PoolSegments& seg, double* out, int c) {
#pragma omp parallel for schedule(static)
    for (int cell = 0; cell < seg.n_cells; ++cell) pool_cell(feat, seg, out, c, cell);
}

void serial::pool_sum_forward(const double* feat, const PoolSegments& seg, double* out, int c) {
    for (int cell = 0; cell < seg.n_cells; ++cell) pool_cell(feat, seg, out, c, cell);
}

void pool_sum_backward(const double* dout, const PoolSegments& seg, double* dfeat, int c) {
    const int p = int(seg.cell_of.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < p; ++i) {
        const int cell = seg.cell_of[std::size_t(i)];
        double* drow = dfeat + std::size_t(i) * c;
        if (cell < 0) {
            for (int k = 0; k < c; ++k) drow[k] = 0.0;
        } else {
            const double* grow = dout + std::size_t(cell) * c;
            for (int k = 0; k < c; ++k) drow[k] = grow[k];
        }
    }
}

// ---------------------------------------------------------------------------
// fused lift + splat
// ---------------------------------------------------------------------------

namespace {
inline void liftpool_cell(const std::vector<const double*>& feat_t,
                          const std::vector<const double*>& dist,
                          const PoolSegments& seg, double* out,
                          int c, int d, int npix, int cell) {
    double* orow = out + std::size_t(cell) * c;
    for (int k = 0; k < c; ++k) orow[k] = 0.0;
    for (int i = seg.offsets[std::size_t(cell)]; i < seg.offsets[std::size_t(cell) + 1]; ++i) {
        const int id = seg.order[std::size_t(i)];
        const int bin = id % d;
        const int pix = (id / d) % npix;
        const int view = id / (d * npix);
        const double coef = dist[std::size_t(view)][std::size_t(bin) * npix + pix];
        const double* frow = feat_t[std::size_t(view)] + std::size_t(pix) * c;
        for (int k = 0; k < c; ++k) orow[k] += coef * frow[k];
    }
}
} // namespace

void liftpool_forward(const std::vector<const double*>& feat_t,
                      const std::vector<const double*>& dist,
                      const PoolSegments& seg, double* out,
                      int c, int d, int npix) {
#pragma omp parallel for schedule(static)
    for (int cell = 0; cell < seg.n_cells; ++cell)
        liftpool_cell(feat_t, dist, seg, out, c, d, npix, cell);
}

void serial::liftpool_forward(const std::vector<const double*>& feat_t,
                              const std::vector<const double*>& dist,
                              const PoolSegments& seg, double* out,
                              int c, int d, int npix) {
    for (int cell = 0; cell < seg.n_cells; ++cell)
        liftpool_cell(feat_t, dist, seg, out, c, d, npix, cell);
}

void liftpool_backward(const std::vector<const double*>& feat_t,
                       const std::vector<const double*>& dist,
                       const PoolSegments& seg, const double* dout,
                       const std::vector<double*>& dfeat_t,
                       const std::vector<double*>& ddist,
                       int c, int d, int npix) {
    const int views = int(feat_t.size());
    const int total = views * npix;
    // each (view, pixel) owns its dfeat row and ddist column exclusively
#pragma omp parallel for schedule(static)
    for (int t = 0; t < total; ++t) {
        const int view = t / npix;
        const int pix = t % npix;
        double* df = dfeat_t[std::size_t(view)] + std::size_t(pix) * c;
        for (int k = 0; k < c; ++k) df[k] = 0.0;
        const double* frow = feat_t[std::size_t(view)] + std::size_t(pix) * c;
        for (int bin = 0; bin < d; ++bin) {
            const int id = (view * npix + pix) * d + bin;
            const int cell = seg.cell_of[std::size_t(id)];
            double& dd = ddist[std::size_t(view)][std::size_t(bin) * npix + pix];
            if (cell < 0) {
                dd = 0.0;
                continue;
            }
            const double* grow = dout + std::size_t(cell) * c;
            const double coef = dist[std::size_t(view)][std::size_t(bin) * npix + pix];
            double acc = 0.0;
            for (int k = 0; k < c; ++k) {
                acc += frow[k] * grow[k];
                df[k] += coef * grow[k];
            }
            dd = acc;
        }
    }
}

} // namespace bevadapt::kernels
