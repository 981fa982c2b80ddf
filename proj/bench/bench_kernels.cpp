// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP builds.
#include "tinyedit/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace
{

using namespace tinyedit;

Image noise(int side, unsigned seed)
{
    Image img(side, side);
    std::mt19937 rng(seed);
    for (auto& v: img.pixels())
        v = static_cast<std::uint8_t>(rng());
    return img;
}

std::vector<BBox> boxes(int side)
{
    std::vector<BBox> out;
    for (int i = 0; i < 8; ++i)
        out.push_back({ i * side / 16, i * side / 20, side / 2 + i * side / 20, side / 2 + i * side / 16 });
    return out;
}

template <auto Fn>
void diff_mask(benchmark::State& state)
{
    auto const side = static_cast<int>(state.range(0));
    auto const a = noise(side, 1);
    auto const b = noise(side, 2);
    for (auto _: state)
        benchmark::DoNotOptimize(Fn(a, b, 12));
    state.SetItemsProcessed(state.iterations() * side * side);
}

template <auto Fn>
void resize(benchmark::State& state)
{
    auto const side = static_cast<int>(state.range(0));
    auto const src = noise(side, 3);
    for (auto _: state)
        benchmark::DoNotOptimize(Fn(src, side * 2, side * 2));
    state.SetItemsProcessed(state.iterations() * side * side * 4);
}

template <auto Fn>
void fill_white(benchmark::State& state)
{
    auto const side = static_cast<int>(state.range(0));
    auto const base = noise(side, 4);
    auto const regions = boxes(side);
    for (auto _: state)
    {
        auto img = base;
        Fn(img, regions);
        benchmark::DoNotOptimize(img.pixels().data());
    }
}

} // namespace

BENCHMARK(diff_mask<kernels::serial::diff_mask>)->Name("diff_mask/serial")->Arg(256)->Arg(1024);
BENCHMARK(diff_mask<kernels::parallel::diff_mask>)->Name("diff_mask/parallel")->Arg(256)->Arg(1024);
BENCHMARK(resize<kernels::serial::resize_bicubic>)->Name("resize_bicubic/serial")->Arg(128)->Arg(512);
BENCHMARK(resize<kernels::parallel::resize_bicubic>)->Name("resize_bicubic/parallel")->Arg(128)->Arg(512);
BENCHMARK(fill_white<kernels::serial::fill_boxes_white>)->Name("fill_boxes_white/serial")->Arg(256)->Arg(1024);
BENCHMARK(fill_white<kernels::parallel::fill_boxes_white>)->Name("fill_boxes_white/parallel")->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
