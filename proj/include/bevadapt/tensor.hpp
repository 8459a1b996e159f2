#pragma once

#include <vector>
#include <array>
#include <numeric>
#include <algorithm>
#include <initializer_list>

#include "bevadapt/common.hpp"
#include "bevadapt/rng.hpp"

namespace bevadapt {

// Dense row-major double tensor, rank 1..4. Deliberately minimal: kernels
// operate on raw pointers, this only owns storage and shape bookkeeping.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::initializer_list<int> dims) { reshape(dims); }
    explicit Tensor(const std::vector<int>& dims) { reshape(dims); }

    void reshape(std::initializer_list<int> dims) { reshape(std::vector<int>(dims)); }

    void reshape(const std::vector<int>& dims) {
        BEVA_CHECK(!dims.empty() && dims.size() <= 4, "tensor rank must be 1..4");
        std::size_t n = 1;
        for (int d : dims) {
            BEVA_CHECK(d >= 0, "negative dimension");
            n *= std::size_t(d);
        }
        dims_ = dims;
        data_.assign(n, 0.0);
    }

    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }
    const std::vector<int>& dims() const { return dims_; }
    int dim(int i) const { return dims_[std::size_t(i)]; }
    int rank() const { return int(dims_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int i, int j) { return data_[std::size_t(i) * dims_[1] + j]; }
    double at(int i, int j) const { return data_[std::size_t(i) * dims_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(std::size_t(i) * dims_[1] + j) * dims_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(std::size_t(i) * dims_[1] + j) * dims_[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return data_[((std::size_t(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }
    double at(int i, int j, int k, int l) const {
        return data_[((std::size_t(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }

    void zero() { std::fill(data_.begin(), data_.end(), 0.0); }
    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void randn(Rng& rng, double scale) {
        for (auto& v : data_) v = scale * rng.normal();
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    bool all_finite() const {
        for (double v : data_) if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

inline void axpy(double a, const Tensor& x, Tensor& y) {
    BEVA_CHECK(x.size() == y.size(), "axpy size mismatch");
    const double* xp = x.data();
    double* yp = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) yp[i] += a * xp[i];
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    BEVA_CHECK(a.size() == b.size(), "size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace bevadapt
