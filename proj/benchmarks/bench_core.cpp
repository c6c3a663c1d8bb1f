#include <benchmark/benchmark.h>

#include <cmath>

#include "voidseg/eval.hpp"
#include "voidseg/postprocess.hpp"
#include "voidseg/targets.hpp"

using namespace voidseg;

namespace {

// Disks of radius r on a regular grid, shifted by (dy, dx).
LabelMap disk_grid(int size, int spacing, double r, int dy = 0, int dx = 0) {
    LabelMap labels(Shape{size, size}, 0);
    std::int32_t id = 0;
    for (int cy = spacing / 2; cy < size; cy += spacing) {
        for (int cx = spacing / 2; cx < size; cx += spacing) {
            ++id;
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    if (std::hypot(y - cy - dy, x - cx - dx) <= r) labels(y, x) = id;
                }
            }
        }
    }
    return labels;
}

void BM_AveragePrecision(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const auto gt = disk_grid(size, 24, 9.0);
    const auto pred = disk_grid(size, 24, 8.0, 2, 1);
    for (auto _ : state) benchmark::DoNotOptimize(eval::average_precision(gt, pred));
}
BENCHMARK(BM_AveragePrecision)->Arg(128)->Arg(256)->Arg(512);

void BM_SegScore(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const auto gt = disk_grid(size, 24, 9.0);
    const auto pred = disk_grid(size, 24, 8.0, 2, 1);
    for (auto _ : state) benchmark::DoNotOptimize(eval::seg_score(gt, pred));
}
BENCHMARK(BM_SegScore)->Arg(256);

void BM_StarDistances(benchmark::State& state) {
    const auto labels = disk_grid(static_cast<int>(state.range(0)), 24, 10.0);
    for (auto _ : state) benchmark::DoNotOptimize(targets::star_distances(labels));
}
BENCHMARK(BM_StarDistances)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ThreeClass(benchmark::State& state) {
    const auto labels = disk_grid(256, 24, 10.0);
    for (auto _ : state) benchmark::DoNotOptimize(targets::to_three_class(labels));
}
BENCHMARK(BM_ThreeClass);

void BM_StardistNms(benchmark::State& state) {
    // Ground-truth targets stand in for network output.
    const auto labels = disk_grid(static_cast<int>(state.range(0)), 24, 10.0);
    const auto star = targets::star_distances(labels);
    std::vector<RawImage> distances;
    for (int k = 0; k < star.n_rays; ++k) {
        RawImage d(star.shape);
        for (int y = 0; y < star.shape.height; ++y) {
            for (int x = 0; x < star.shape.width; ++x) d(y, x) = star.distance(k, y, x);
        }
        distances.push_back(std::move(d));
    }
    for (auto _ : state) benchmark::DoNotOptimize(infer::stardist_nms(star.object_prob, distances, 0.5));
}
BENCHMARK(BM_StardistNms)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
