#include <benchmark/benchmark.h>

#include <random>

#include "anomsynth/descmatch.hpp"
#include "anomsynth/imageops.hpp"
#include "anomsynth/metrics.hpp"
#include "anomsynth/synthpipe.hpp"
#include "anomsynth/texlib.hpp"

using namespace anomsynth;

namespace {

GrayImage noise_gray(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(n) * n);
    for (auto& x : v) x = u(rng);
    return GrayImage(n, n, std::move(v));
}

LatentTensor noise_latent(int c, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    LatentTensor t(c, n, n);
    for (auto& v : t.values()) v = d(rng);
    return t;
}

}  // namespace

static void BM_Canny(benchmark::State& state) {
    const GrayImage g = noise_gray(static_cast<int>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(imageops::canny(g));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Canny)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_SsimMap(benchmark::State& state) {
    const GrayImage a = noise_gray(static_cast<int>(state.range(0)), 2);
    const GrayImage b = noise_gray(static_cast<int>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(imageops::ssim_map(a, b));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_SsimMap)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_Match(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> d;
    const std::size_t dim = 512;
    auto vec = [&] {
        std::vector<float> v(dim);
        for (auto& x : v) x = d(rng);
        return EmbeddingVector(std::move(v));
    };
    std::vector<texlib::PoolEntry> pool;
    for (int i = 0; i < state.range(0); ++i) pool.push_back({"asset-" + std::to_string(i), "cracked", vec()});
    const EmbeddingVector q = vec();
    const auto desc = descmatch::make_descriptor("cashew", "cracked");
    for (auto _ : state) benchmark::DoNotOptimize(descmatch::match(desc, q, pool));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Match)->Arg(64)->Arg(1000)->Arg(10000);

static void BM_DdimChain(benchmark::State& state) {
    const synthpipe::NoiseSchedule s = synthpipe::NoiseSchedule::cosine(20);
    const LatentTensor z = noise_latent(4, 128, 5);
    const LatentTensor eps = noise_latent(4, 128, 6);
    for (auto _ : state) {
        LatentTensor cur = synthpipe::add_noise(z, 16, eps, s);
        for (int t = 16; t >= 1; --t) cur = synthpipe::ddim_step(cur, t, eps, s);
        benchmark::DoNotOptimize(cur);
    }
}
BENCHMARK(BM_DdimChain)->Unit(benchmark::kMillisecond);

static void BM_KMeans(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    metrics::Points pts(static_cast<std::size_t>(state.range(0)), std::vector<double>(67));
    for (auto& p : pts)
        for (auto& v : p) v = u(rng);
    for (auto _ : state) {
        std::mt19937_64 seed(8);
        benchmark::DoNotOptimize(metrics::kmeans_reduce(pts, 100, seed));
    }
}
BENCHMARK(BM_KMeans)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
