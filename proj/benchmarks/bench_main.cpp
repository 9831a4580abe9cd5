#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "physr/compiled_expr.hpp"
#include "physr/expr.hpp"
#include "physr/gpsr.hpp"
#include "physr/rng.hpp"
#include "physr/simulate.hpp"
#include "physr/sindy.hpp"
#include "physr/systems.hpp"

using namespace physr;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

void BM_TreeEvaluate(benchmark::State& state) {
    const Expr e = parse("x*sin(y) + 0.3*x*x*y - exp(-y*y)", {"x", "y"});
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(e, {{"x", 0.4}, {"y", -1.2}}));
}
BENCHMARK(BM_TreeEvaluate);

void BM_CompiledEvaluate(benchmark::State& state) {
    const Expr e = parse("x*sin(y) + 0.3*x*x*y - exp(-y*y)", {"x", "y"});
    const CompiledExpr c(e, {"x", "y"});
    const Eigen::MatrixXd data = random_matrix(state.range(0), 2, 1);
    for (auto _ : state) benchmark::DoNotOptimize(c.evaluate(data));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CompiledEvaluate)->Arg(1000)->Arg(100000);

void BM_Stlsq(benchmark::State& state) {
    const auto rows = state.range(0);
    const Eigen::MatrixXd features = random_matrix(rows, 20, 2);
    const Eigen::MatrixXd W = random_matrix(2, 20, 3);
    const Eigen::MatrixXd targets = features * W.transpose();
    for (auto _ : state) benchmark::DoNotOptimize(sindy::stlsq(features, targets, 0.05, true));
}
BENCHMARK(BM_Stlsq)->Arg(1000)->Arg(50000);

void BM_Rk4Oscillator(benchmark::State& state) {
    const auto& spec = data::builtin_system("van_der_pol");
    const data::OdeRhs rhs(spec.states, spec.rhs);
    const auto f = rhs.field();
    Eigen::VectorXd x0(2);
    x0 << 1.0, 0.5;
    for (auto _ : state) benchmark::DoNotOptimize(data::integrate(f, x0, 0.1, 10, 200));
}
BENCHMARK(BM_Rk4Oscillator);

void BM_GpGenerations(benchmark::State& state) {
    const Eigen::MatrixXd X = random_matrix(200, 1, 4);
    const Eigen::VectorXd y = (X.col(0).array().square() + X.col(0).array()).matrix();
    gp::GpConfig cfg;
    cfg.niterations = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(gp::fit(X, y, {"x"}, cfg));
}
BENCHMARK(BM_GpGenerations)->Arg(5)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
