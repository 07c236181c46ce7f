#include <benchmark/benchmark.h>

#include "crowdkd/arch.hpp"
#include "crowdkd/density.hpp"
#include "crowdkd/distill.hpp"
#include "crowdkd/review.hpp"
#include "crowdkd/rng.hpp"

using namespace crowdkd;

namespace {

Tensor random_feature(std::vector<int> shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    ParamStore store;
    Rng rng(1);
    ConvOpts o;
    o.pad = 1;
    Conv2dLayer conv = make_conv(store, "c", c, c, 3, o, rng);
    const Tensor x = random_feature({c, 32, 32}, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv(constant(x)).value().data());
    }
}
BENCHMARK(BM_Conv3x3Forward)->Arg(8)->Arg(32)->Arg(64);

void BM_FspMatrix(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const Tensor f1 = random_feature({c, 16, 16}, 3);
    const Tensor f2 = random_feature({c, 16, 16}, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fsp_matrix(f1, f2).values.data());
    }
}
BENCHMARK(BM_FspMatrix)->Arg(8)->Arg(64)->Arg(256);

void BM_IntraLoss(benchmark::State& state) {
    std::vector<Tensor> t, s;
    for (int k = 0; k < 5; ++k) {
        t.push_back(random_feature({16, 32, 32}, static_cast<std::uint64_t>(k)));
        s.push_back(random_feature({16, 32, 32}, static_cast<std::uint64_t>(k) + 10));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(intra_pt_loss(t, s));
    }
}
BENCHMARK(BM_IntraLoss);

void BM_Rasterize(benchmark::State& state) {
    Rng rng(7);
    std::vector<Point> points;
    for (int i = 0; i < 30; ++i) points.push_back({rng.uniform(0, 64), rng.uniform(0, 64)});
    for (auto _ : state) {
        benchmark::DoNotOptimize(rasterize_density(points, 64, 64, 4.0, 8).values.data());
    }
}
BENCHMARK(BM_Rasterize);

void BM_ToyReviewForward(benchmark::State& state) {
    const int rounds = static_cast<int>(state.range(0));
    auto teacher = build_teacher(NetworkProfile::toy(), 1);
    ReviewWrapper wrapped = wrap_with_review(*teacher, rounds);
    const Tensor image = random_feature({3, 64, 64}, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(wrapped.forward(constant(image)).value().data());
    }
}
BENCHMARK(BM_ToyReviewForward)->Arg(0)->Arg(2);

}  // namespace

BENCHMARK_MAIN();
