#include <benchmark/benchmark.h>

#include "bevadapt/kernels.hpp"
#include "bevadapt/perception.hpp"
#include "bevadapt/rng.hpp"
#include "bevadapt/scenegen.hpp"
#include "bevadapt/trainer.hpp"

using namespace bevadapt;
namespace k = bevadapt::kernels;

namespace {

Tensor randn(std::initializer_list<int> dims, std::uint64_t seed) {
    Tensor t(dims);
    Rng rng(seed);
    t.randn(rng, 1.0);
    return t;
}

k::Conv2dShape bev_shape() {
    k::Conv2dShape s;
    s.cin = 48;
    s.h = 32;
    s.w = 32;
    s.cout = 48;
    s.kh = s.kw = 3;
    s.stride = 1;
    s.pad = 1;
    return s;
}

} // namespace

static void BM_conv2d_parallel(benchmark::State& state) {
    const auto s = bev_shape();
    const Tensor in = randn({s.cin, s.h, s.w}, 1);
    const Tensor w = randn({s.cout, s.cin, 3, 3}, 2);
    const Tensor b = randn({s.cout}, 3);
    Tensor out({s.cout, s.oh(), s.ow()});
    for (auto _ : state) {
        k::conv2d_forward(in.data(), w.data(), b.data(), out.data(), s);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_conv2d_parallel);

static void BM_conv2d_serial(benchmark::State& state) {
    const auto s = bev_shape();
    const Tensor in = randn({s.cin, s.h, s.w}, 1);
    const Tensor w = randn({s.cout, s.cin, 3, 3}, 2);
    const Tensor b = randn({s.cout}, 3);
    Tensor out({s.cout, s.oh(), s.ow()});
    for (auto _ : state) {
        k::serial::conv2d_forward(in.data(), w.data(), b.data(), out.data(), s);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_conv2d_serial);

static void BM_liftpool_parallel(benchmark::State& state) {
    Rng rng(5);
    const int views = 4, np = 96, d = 32, c = 64, cells = 4096;
    std::vector<int> cell_of(std::size_t(views) * np * d);
    for (auto& ci : cell_of) ci = int(rng.below(cells));
    k::PoolSegments seg;
    seg.build(cell_of, cells);
    std::vector<Tensor> feat, dist;
    std::vector<const double*> fp, dp;
    for (int v = 0; v < views; ++v) {
        feat.push_back(randn({np, c}, 10 + std::uint64_t(v)));
        dist.push_back(randn({d, np}, 20 + std::uint64_t(v)));
    }
    for (int v = 0; v < views; ++v) {
        fp.push_back(feat[std::size_t(v)].data());
        dp.push_back(dist[std::size_t(v)].data());
    }
    Tensor out({cells, c});
    for (auto _ : state) {
        k::liftpool_forward(fp, dp, seg, out.data(), c, d, np);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_liftpool_parallel);

static void BM_liftpool_serial(benchmark::State& state) {
    Rng rng(5);
    const int views = 4, np = 96, d = 32, c = 64, cells = 4096;
    std::vector<int> cell_of(std::size_t(views) * np * d);
    for (auto& ci : cell_of) ci = int(rng.below(cells));
    k::PoolSegments seg;
    seg.build(cell_of, cells);
    std::vector<Tensor> feat, dist;
    std::vector<const double*> fp, dp;
    for (int v = 0; v < views; ++v) {
        feat.push_back(randn({np, c}, 10 + std::uint64_t(v)));
        dist.push_back(randn({d, np}, 20 + std::uint64_t(v)));
    }
    for (int v = 0; v < views; ++v) {
        fp.push_back(feat[std::size_t(v)].data());
        dp.push_back(dist[std::size_t(v)].data());
    }
    Tensor out({cells, c});
    for (auto _ : state) {
        k::serial::liftpool_forward(fp, dp, seg, out.data(), c, d, np);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_liftpool_serial);

static void BM_render_sample(benchmark::State& state) {
    scenegen::SceneSpec spec = scenegen::SceneSpec::defaults();
    spec.image_h = 32;
    spec.image_w = 48;
    spec.num_objects = 5;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        spec.seed = seed++;
        auto s = scenegen::generate_sample(spec, scenegen::DomainShiftConfig::none());
        benchmark::DoNotOptimize(s.lidar.data());
    }
}
BENCHMARK(BM_render_sample);

static void BM_detector_forward_backward(benchmark::State& state) {
    trainer::TrainConfig cfg;
    scenegen::SceneSpec spec = scenegen::SceneSpec::defaults();
    spec.image_h = cfg.net.image_h;
    spec.image_w = cfg.net.image_w;
    spec.num_views = cfg.net.num_views;
    spec.num_objects = 5;
    spec.seed = 3;
    const auto sample = scenegen::generate_sample(spec, scenegen::DomainShiftConfig::none());
    perception::Detector det(cfg.net);
    det.init_params(1);
    const auto map = geometry::build_frustum_mapping(sample.rig, cfg.net.frustum, cfg.net.voxel,
                                                     cfg.net.feat_h(), cfg.net.feat_w());
    perception::SampleActs acts;
    for (auto _ : state) {
        det.forward(sample, map, acts);
        const auto targets =
            perception::render_targets(sample.gt_boxes, cfg.net.voxel, cfg.net.num_categories);
        perception::BackwardSeeds seeds;
        seeds.dheat.reshape({cfg.net.num_categories, cfg.net.voxel.nx(), cfg.net.voxel.ny()});
        seeds.dreg.reshape({6, cfg.net.voxel.nx(), cfg.net.voxel.ny()});
        perception::loss_detection_grad(acts.heat, acts.reg, targets, seeds.dheat, seeds.dreg);
        det.params.zero_grads();
        det.backward(map, acts, seeds);
        benchmark::DoNotOptimize(det.params.items[0].grad.data());
    }
}
BENCHMARK(BM_detector_forward_backward);

BENCHMARK_MAIN();
