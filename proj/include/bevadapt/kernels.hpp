#pragma once

// Numeric kernels behind the network and geometry code. Every kernel here has
// two drivers around a shared per-output worker: the OpenMP-parallel one used
// by the library, and a serial reference under kernels::serial used by tests
// and the benchmark. Outputs are computed element-wise by exactly one thread
// with a fixed accumulation order, so parallel and serial results are
// bit-identical and independent of the thread count.

#include <cstdint>
#include <vector>

namespace bevadapt::kernels {

struct Conv2dShape {
    int cin = 0, h = 0, w = 0;      // input feature map
    int cout = 0, kh = 0, kw = 0;   // filters
    int stride = 1, pad = 0;

    int oh() const { return (h + 2 * pad - kh) / stride + 1; }
    int ow() const { return (w + 2 * pad - kw) / stride + 1; }
    std::size_t in_size() const { return std::size_t(cin) * h * w; }
    std::size_t out_size() const { return std::size_t(cout) * oh() * ow(); }
    std::size_t w_size() const { return std::size_t(cout) * cin * kh * kw; }
};

// in: cin x h x w, w: cout x cin x kh x kw, b: cout (may be null), out: cout x oh x ow
void conv2d_forward(const double* in, const double* w, const double* b, double* out,
                    const Conv2dShape& s);
// din is overwritten
void conv2d_backward_input(const double* dout, const double* w, double* din,
                           const Conv2dShape& s);
// dw/db are accumulated into
void conv2d_backward_params(const double* dout, const double* in, double* dw, double* db,
                            const Conv2dShape& s);

// in: b x nin, w: nout x nin, bias: nout (may be null), out: b x nout
void dense_forward(const double* in, const double* w, const double* bias, double* out,
                   int b, int nin, int nout);
void dense_backward_input(const double* dout, const double* w, double* din,
                          int b, int nin, int nout);
void dense_backward_params(const double* dout, const double* in, double* dw, double* dbias,
                           int b, int nin, int nout);

// ELU with alpha = 1; backward recovers the derivative from the saved output.
void elu_forward(const double* in, double* out, std::size_t n);
void elu_backward(const double* out, const double* dout, double* din, std::size_t n);

// Inverted dropout; keep mask is a function of (stream, element index) only.
void dropout_forward(const double* in, double* out, double* mask, std::size_t n,
                     double rho, std::uint64_t stream);
void dropout_backward(const double* mask, const double* dout, double* din, std::size_t n);

// z, p: d x npix (channel-major); softmax over the channel axis per pixel.
void softmax_channel(const double* z, double* p, int d, int npix);
// dz from dp at the saved probabilities p
void softmax_backward_channel(const double* p, const double* dp, double* dz, int d, int npix);

// c x npix -> npix x c and back
void transpose_cp(const double* in, double* out, int c, int npix);
void transpose_pc(const double* in, double* out, int npix, int c);

// in: c x npix -> out: c (mean over pixels)
void global_avg_pool(const double* in, double* out, int c, int npix);
// din += dout / npix broadcast
void global_avg_pool_backward_accum(const double* dout, double* din, int c, int npix);

// Deterministic sum: fixed chunk decomposition, independent of thread count.
double sum_det(const double* x, std::size_t n);

void add_scaled(double* y, const double* x, double a, std::size_t n);
void scale(double* y, double a, std::size_t n);

// Grouping of P points into cells for order-independent sum pooling. The
// member lists preserve ascending point order inside each cell, so the
// accumulation order per cell is fixed no matter how the loop is scheduled.
struct PoolSegments {
    int n_cells = 0;
    std::vector<int> cell_of;   // per point; -1 = outside the grid
    std::vector<int> offsets;   // n_cells + 1
    std::vector<int> order;     // point ids grouped by cell

    void build(std::vector<int> cell_of_point, int n_cells);
};

// feat: P x c (pixel-major), out: n_cells x c
void pool_sum_forward(const double* feat, const PoolSegments& seg, double* out, int c);
// dfeat: P x c, overwritten
void pool_sum_backward(const double* dout, const PoolSegments& seg, double* dfeat, int c);

// Fused lift + splat over all views: frustum point id = (view*npix + pixel)*d + bin.
// feat_t[view]: npix x c (pixel-major), dist[view]: d x npix.
void liftpool_forward(const std::vector<const double*>& feat_t,
                      const std::vector<const double*>& dist,
                      const PoolSegments& seg, double* out,
                      int c, int d, int npix);
// dfeat_t[view]: npix x c and ddist[view]: d x npix are overwritten
void liftpool_backward(const std::vector<const double*>& feat_t,
                       const std::vector<const double*>& dist,
                       const PoolSegments& seg, const double* dout,
                       const std::vector<double*>& dfeat_t,
                       const std::vector<double*>& ddist,
                       int c, int d, int npix);

namespace serial {
void conv2d_forward(const double* in, const double* w, const double* b, double* out,
                    const Conv2dShape& s);
void conv2d_backward_input(const double* dout, const double* w, double* din,
                           const Conv2dShape& s);
void conv2d_backward_params(const double* dout, const double* in, double* dw, double* db,
                            const Conv2dShape& s);
void dense_forward(const double* in, const double* w, const double* bias, double* out,
                   int b, int nin, int nout);
void elu_forward(const double* in, double* out, std::size_t n);
void softmax_channel(const double* z, double* p, int d, int npix);
void pool_sum_forward(const double* feat, const PoolSegments& seg, double* out, int c);
void liftpool_forward(const std::vector<const double*>& feat_t,
                      const std::vector<const double*>& dist,
                      const PoolSegments& seg, double* out,
                      int c, int d, int npix);
double sum_det(const double* x, std::size_t n);
} // namespace serial

} // namespace bevadapt::kernels
