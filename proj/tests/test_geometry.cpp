#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bevadapt/geometry.hpp"
#include "bevadapt/rng.hpp"
#include "oracles.hpp"

using namespace bevadapt;
using namespace bevadapt::geometry;

namespace {

Tensor random_simplex(int h, int w, int d, std::uint64_t seed) {
    Rng rng(seed);
    Tensor dist({h, w, d});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = 0;
            for (int k = 0; k < d; ++k) {
                const double e = std::exp(rng.normal());
                dist.at(y, x, k) = e;
                sum += e;
            }
            for (int k = 0; k < d; ++k) dist.at(y, x, k) /= sum;
        }
    return dist;
}

} // namespace

TEST_CASE("lift is the per-pixel outer product") {
    Tensor feat({1, 1, 1});
    feat.at(0, 0, 0) = 2.0;
    Tensor dist({1, 1, 2});
    dist.at(0, 0, 0) = 0.5;
    dist.at(0, 0, 1) = 0.5;
    const Tensor out = lift(feat, dist);
    CHECK(out.at(0, 0, 0, 0) == 1.0);
    CHECK(out.at(0, 0, 1, 0) == 1.0);
}

TEST_CASE("one-hot distribution places the feature in exactly one bin") {
    Tensor feat({1, 1, 3});
    feat.at(0, 0, 0) = 1.0;
    feat.at(0, 0, 1) = -2.0;
    feat.at(0, 0, 2) = 0.5;
    Tensor dist({1, 1, 4});
    dist.at(0, 0, 2) = 1.0;
    const Tensor out = lift(feat, dist);
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 3; ++c)
            CHECK(out.at(0, 0, k, c) == (k == 2 ? feat.at(0, 0, c) : 0.0));
}

TEST_CASE("lift conserves feature mass over bins") {
    Rng rng(5);
    Tensor feat({4, 4, 3});
    feat.randn(rng, 1.0);
    const Tensor dist = random_simplex(4, 4, 5, 6);
    const Tensor out = lift(feat, dist);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int k = 0; k < 5; ++k) acc += out.at(y, x, k, c);
                CHECK(std::abs(acc - feat.at(y, x, c)) <= 1e-6);
            }
}

TEST_CASE("lift rejects non-normalized distributions") {
    Tensor feat({1, 1, 1});
    Tensor dist({1, 1, 2});
    dist.at(0, 0, 0) = 0.7;
    dist.at(0, 0, 1) = 0.4;
    CHECK_THROWS_AS(lift(feat, dist), ContractError);
    dist.at(0, 0, 1) = -0.1;
    CHECK_THROWS_AS(lift(feat, dist), ContractError);
}

TEST_CASE("frustum_to_ego: optical axis, round trip, translation linearity") {
    Intrinsics intr{25.0, 25.0, 16.0, 12.0};
    SUBCASE("principal point at depth 10 with identity extrinsics") {
        RigidTransform identity;
        const Vec3 p = frustum_to_ego(16.0, 12.0, 10.0, intr, identity);
        CHECK(p.x == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(p.y == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(p.z == doctest::Approx(10.0));
    }
    SUBCASE("forward-then-inverse is the identity over the frustum") {
        Rng rng(8);
        RigidTransform ego_to_cam;
        ego_to_cam.R = Mat3::rot_z(0.7) * Mat3::from_rows({1, 0, 0}, {0, 0, -1}, {0, 1, 0});
        ego_to_cam.t = {0.3, -1.2, 0.8};
        for (int i = 0; i < 1000; ++i) {
            const double u = rng.uniform(0, 32), v = rng.uniform(0, 24);
            const double d = rng.uniform(1.0, 40.0);
            const Vec3 p = frustum_to_ego(u, v, d, intr, ego_to_cam);
            const auto uvd = project_to_view(p, intr, ego_to_cam);
            CHECK(std::abs(uvd[0] - u) <= 1e-6);
            CHECK(std::abs(uvd[1] - v) <= 1e-6);
            CHECK(std::abs(uvd[2] - d) <= 1e-6);
        }
    }
    SUBCASE("pure translation shifts the output exactly") {
        RigidTransform a; // identity
        RigidTransform b;
        const Vec3 t{1.5, -2.0, 0.25};
        b.t = (b.R * t) * -1.0; // camera moved by +t in ego coordinates
        const Vec3 pa = frustum_to_ego(10.0, 5.0, 7.0, intr, a);
        const Vec3 pb = frustum_to_ego(10.0, 5.0, 7.0, intr, b);
        CHECK((pb - (pa + t)).norm() <= 1e-12);
    }
}

TEST_CASE("voxel pooling: additivity, bounds, oracle, invariances") {
    VoxelGridSpec g;
    g.x_min = -4;
    g.x_max = 4;
    g.y_min = -4;
    g.y_max = 4;
    g.z_min = 0;
    g.z_max = 2;
    g.dx = g.dy = g.dz = 1.0;

    SUBCASE("two points in one cell accumulate") {
        Tensor pts({2, 3});
        pts.at(0, 0) = 0.2;
        pts.at(0, 1) = 0.3;
        pts.at(0, 2) = 0.5;
        pts.at(1, 0) = 0.7;
        pts.at(1, 1) = 0.1;
        pts.at(1, 2) = 0.9;
        Tensor f({2, 1});
        f.at(0, 0) = 1.0;
        f.at(1, 0) = 2.0;
        const Tensor grid = voxel_pool(pts, f, g);
        CHECK(grid.at(4, 4, 0, 0) == 3.0);
    }

    SUBCASE("points at or beyond the upper bound contribute nothing") {
        Tensor pts({1, 3});
        pts.at(0, 0) = g.x_max + 1e-9;
        pts.at(0, 1) = 0;
        pts.at(0, 2) = 0.5;
        Tensor f({1, 1});
        f.at(0, 0) = 5.0;
        const Tensor grid = voxel_pool(pts, f, g);
        double total = 0;
        for (std::size_t i = 0; i < grid.size(); ++i) total += grid[i];
        CHECK(total == 0.0);
    }

    SUBCASE("1000 random points match the brute-force oracle") {
        Rng rng(17);
        Tensor pts({1000, 3});
        Tensor f({1000, 4});
        for (int i = 0; i < 1000; ++i) {
            pts.at(i, 0) = rng.uniform(-6, 6);
            pts.at(i, 1) = rng.uniform(-6, 6);
            pts.at(i, 2) = rng.uniform(-1, 3);
            for (int c = 0; c < 4; ++c) f.at(i, c) = rng.normal();
        }
        const Tensor fast = voxel_pool(pts, f, g);
        const Tensor slow = oracles::voxel_pool_bruteforce(pts, f, g);
        CHECK(max_abs_diff(fast, slow) <= 1e-6);
    }

    SUBCASE("permutation invariance and linearity") {
        Rng rng(19);
        const int n = 257;
        Tensor pts({n, 3}), f({n, 2}), f2({n, 2});
        for (int i = 0; i < n; ++i) {
            pts.at(i, 0) = rng.uniform(-5, 5);
            pts.at(i, 1) = rng.uniform(-5, 5);
            pts.at(i, 2) = rng.uniform(-1, 3);
            for (int c = 0; c < 2; ++c) {
                f.at(i, c) = rng.normal();
                f2.at(i, c) = rng.normal();
            }
        }
        // permuted copies
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[std::size_t(i)] = i;
        for (int i = n - 1; i > 0; --i) std::swap(perm[std::size_t(i)], perm[rng.below(std::uint64_t(i + 1))]);
        Tensor pts_p({n, 3}), f_p({n, 2});
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) {
                pts_p.at(i, c) = pts.at(perm[std::size_t(i)], c);
                if (c < 2) f_p.at(i, c) = f.at(perm[std::size_t(i)], c);
            }
        const Tensor a = voxel_pool(pts, f, g);
        const Tensor b = voxel_pool(pts_p, f_p, g);
        CHECK(max_abs_diff(a, b) <= 1e-12);

        // pool(a*F + b*G) = a*pool(F) + b*pool(G)
        Tensor combo({n, 2});
        for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = 0.25 * f[i] + 2.0 * f2[i];
        const Tensor lhs = voxel_pool(pts, combo, g);
        const Tensor pf = voxel_pool(pts, f, g);
        const Tensor pg = voxel_pool(pts, f2, g);
        for (std::size_t i = 0; i < lhs.size(); ++i)
            CHECK(std::abs(lhs[i] - (0.25 * pf[i] + 2.0 * pg[i])) <= 1e-9);
    }
}

TEST_CASE("bev collapse is a lossless reshape with an exact inverse") {
    SUBCASE("z = 1 is the identity") {
        Rng rng(23);
        Tensor vox({3, 4, 1, 5});
        vox.randn(rng, 1.0);
        const Tensor bev = bev_collapse(vox);
        CHECK(bev.dim(2) == 5);
        for (std::size_t i = 0; i < vox.size(); ++i) CHECK(bev[i] == vox[i]);
    }
    SUBCASE("zero grid collapses to zero") {
        Tensor vox({2, 2, 3, 4});
        const Tensor bev = bev_collapse(vox);
        for (std::size_t i = 0; i < bev.size(); ++i) CHECK(bev[i] == 0.0);
    }
    SUBCASE("uncollapse restores the grid bitwise") {
        Rng rng(29);
        Tensor vox({4, 3, 2, 6});
        vox.randn(rng, 2.0);
        const Tensor bev = bev_collapse(vox);
        const Tensor back = bev_uncollapse(bev, 2, 6);
        CHECK(max_abs_diff(vox, back) == 0.0);
        CHECK(vox.dims() == back.dims());
    }
}

TEST_CASE("frustum mapping sends bin centers into the right voxel cells") {
    scenegen::SceneSpec spec = scenegen::SceneSpec::defaults();
    spec.image_h = 32;
    spec.image_w = 32;
    spec.num_views = 2;
    spec.fov_deg = 155;
    const auto rig = scenegen::make_rig(spec);
    FrustumGrid fg;
    fg.d_bins = 8;
    fg.d_min = 1;
    fg.d_max = 17;
    fg.stride = 4;
    VoxelGridSpec vg;
    vg.x_min = vg.y_min = -8;
    vg.x_max = vg.y_max = 8;
    vg.z_min = -1;
    vg.z_max = 3;
    vg.dx = vg.dy = 1;
    vg.dz = 2;
    const auto map = build_frustum_mapping(rig, fg, vg, 8, 8);
    CHECK(map.segments.cell_of.size() == std::size_t(2 * 64 * 8));
    // recompute a few cells independently
    Rng rng(31);
    for (int probe = 0; probe < 200; ++probe) {
        const int v = int(rng.below(2));
        const int pix = int(rng.below(64));
        const int k = int(rng.below(8));
        const double u = (pix % 8 + 0.5) * 4;
        const double vv = (pix / 8 + 0.5) * 4;
        const Vec3 p = frustum_to_ego(u, vv, fg.bin_center(k), rig.views[std::size_t(v)].intrinsics,
                                      rig.views[std::size_t(v)].ego_to_cam);
        const int want = vg.cell_index(p.x, p.y, p.z);
        CHECK(map.segments.cell_of[std::size_t((v * 64 + pix) * 8 + k)] == want);
    }
}

TEST_CASE("lift and pooling are differentiable: finite-difference spot checks") {
    // lift gradient via mass conservation is linear; check d(out)/d(feat) = dist
    Tensor feat({2, 2, 2});
    Rng rng(37);
    feat.randn(rng, 1.0);
    const Tensor dist = random_simplex(2, 2, 3, 38);
    const Tensor base = lift(feat, dist);
    const double h = 1e-6;
    feat.at(1, 0, 1) += h;
    const Tensor bumped = lift(feat, dist);
    feat.at(1, 0, 1) -= h;
    for (int k = 0; k < 3; ++k) {
        const double fd = (bumped.at(1, 0, k, 1) - base.at(1, 0, k, 1)) / h;
        CHECK(std::abs(fd - dist.at(1, 0, k)) <= 1e-6);
    }
}
