#include "flowcast/constraints.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/gp.hpp"
#include "flowcast/graph_gru.hpp"
#include "flowcast/rng.hpp"
#include "flowcast/weighting.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace flowcast;

namespace {

WatershedSeries bench_series(int n_nodes, int n_years) {
    return generate_synthetic(n_nodes, n_years, 99);
}

void bm_generate(benchmark::State& state) {
    const int years = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(generate_synthetic(8, years, 99));
    }
}
BENCHMARK(bm_generate)->Arg(10)->Arg(35);

void bm_forward(benchmark::State& state) {
    const int hidden = static_cast<int>(state.range(0));
    const WatershedSeries data = bench_series(8, 20);
    const ModelParameters params = init_parameters(data.feature_count(), hidden, hidden, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(params, data.graph, data.features));
    }
}
BENCHMARK(bm_forward)->Arg(32)->Arg(128)->Arg(256);

void bm_loss_gradient(benchmark::State& state) {
    const int hidden = static_cast<int>(state.range(0));
    const WatershedSeries data = bench_series(8, 20);
    const ModelParameters params = init_parameters(data.feature_count(), hidden, hidden, 1);
    const Eigen::VectorXd weights = Eigen::VectorXd::Ones(data.months());
    const LossSpec spec{LossKind::squared, ConstraintMode::projection, 0.0};
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_and_gradient(params, data, weights, spec));
    }
}
BENCHMARK(bm_loss_gradient)->Arg(32)->Arg(128);

void bm_projection(benchmark::State& state) {
    const WatershedSeries data = bench_series(8, 30);
    const auto budgets = annual_budgets(data);
    Rng rng(5);
    Eigen::VectorXd pred(data.months());
    for (int t = 0; t < data.months(); ++t) pred[t] = rng.uniform(0.0, 60.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_projection(pred, budgets));
    }
}
BENCHMARK(bm_projection);

void bm_gp_fit(benchmark::State& state) {
    const int t = static_cast<int>(state.range(0));
    Rng rng(7);
    Eigen::MatrixXd latents(t, 32);
    Eigen::VectorXd targets(t);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < 32; ++j) latents(i, j) = rng.normal(0.0, 1.0);
        targets[i] = rng.uniform(0.0, 50.0);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(gp_fit(latents, targets));
    }
}
BENCHMARK(bm_gp_fit)->Arg(60)->Arg(240);

void bm_gp_predict(benchmark::State& state) {
    Rng rng(9);
    Eigen::MatrixXd latents(240, 32);
    Eigen::VectorXd targets(240);
    for (int i = 0; i < 240; ++i) {
        for (int j = 0; j < 32; ++j) latents(i, j) = rng.normal(0.0, 1.0);
        targets[i] = rng.uniform(0.0, 50.0);
    }
    const GpState gp = gp_fit(latents, targets);
    Eigen::RowVectorXd z(32);
    for (int j = 0; j < 32; ++j) z[j] = rng.normal(0.0, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(gp_predict(gp, z));
    }
}
BENCHMARK(bm_gp_predict);

void bm_grouping(benchmark::State& state) {
    Rng rng(11);
    std::vector<double> losses(1000);
    for (double& l : losses) l = rng.uniform(0.0, 5.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(assign_weights(group_samples(losses, 10), 1.0, default_b(1.0, 10)));
    }
}
BENCHMARK(bm_grouping);

} // namespace

BENCHMARK_MAIN();
