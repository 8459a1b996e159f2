#pragma once

#include <array>
#include <cmath>

#include "bevadapt/common.hpp"

namespace bevadapt {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
};

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        Mat3 a;
        a.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
        return a;
    }

    static Mat3 rot_z(double yaw) {
        double c = std::cos(yaw), s = std::sin(yaw);
        Mat3 a;
        a.m = {c, -s, 0, s, c, 0, 0, 0, 1};
        return a;
    }

    double operator()(int r, int c) const { return m[std::size_t(r) * 3 + c]; }
    double& operator()(int r, int c) { return m[std::size_t(r) * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    // max |R^T R - I| entry
    double orthonormality_error() const {
        Mat3 e = transposed() * (*this);
        double worst = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                worst = std::max(worst, std::abs(e(i, j) - (i == j ? 1.0 : 0.0)));
        return worst;
    }
};

// Rigid transform p_out = R * p_in + t.
struct RigidTransform {
    Mat3 R;
    Vec3 t;

    Vec3 apply(const Vec3& p) const { return R * p + t; }

    RigidTransform inverse() const {
        Mat3 Rt = R.transposed();
        return {Rt, (Rt * t) * -1.0};
    }
};

// Pinhole intrinsics: u = fx*x/z + cx, v = fy*y/z + cy, camera looks down +z,
// +x right, +y down.
struct Intrinsics {
    double fx = 1, fy = 1, cx = 0, cy = 0;

    // returns (u, v, depth); depth <= 0 means behind the camera
    std::array<double, 3> project(const Vec3& p_cam) const {
        if (p_cam.z <= 0) return {0, 0, p_cam.z};
        return {fx * p_cam.x / p_cam.z + cx, fy * p_cam.y / p_cam.z + cy, p_cam.z};
    }

    // inverse of project at a known depth d (> 0)
    Vec3 unproject(double u, double v, double d) const {
        return {(u - cx) / fx * d, (v - cy) / fy * d, d};
    }
};

} // namespace bevadapt
