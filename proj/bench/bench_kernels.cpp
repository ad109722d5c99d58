// Serial reference kernels against their OpenMP counterparts.
//
//   ./lmlab_bench --benchmark_filter=softmax_table

#include <benchmark/benchmark.h>

#include "lmlab/kernels.hpp"
#include "lmlab/rng.hpp"

namespace {

using namespace lmlab;

struct Inputs {
  Matrix phi;
  Matrix theta;
  Matrix pstar;
  Vector weights;
};

Inputs make_inputs(std::size_t V, std::size_t S, std::size_t d) {
  Rng rng(7);
  Inputs in{rng.normal_matrix(d, V), rng.normal_matrix(d, S), Matrix(V, S), rng.dirichlet(S, 1.0)};
  for (std::size_t s = 0; s < S; ++s) in.pstar.set_col(s, rng.dirichlet(V, 1.0));
  return in;
}

template <Matrix (*Fn)(const Matrix&, const Matrix&, Vector*)>
void softmax_table(benchmark::State& state) {
  const Inputs in = make_inputs(state.range(0), state.range(1), 8);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(in.phi, in.theta, nullptr));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

template <Vector (*Fn)(const Matrix&, const Matrix&, const Matrix&)>
void softmax_xent(benchmark::State& state) {
  const Inputs in = make_inputs(state.range(0), state.range(1), 8);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(in.phi, in.theta, in.pstar));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

template <Matrix (*Fn)(const Matrix&, std::span<const double>)>
void outer_sum(benchmark::State& state) {
  const Inputs in = make_inputs(state.range(0), state.range(1), 8);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(in.pstar, in.weights));
}

template <double (*Fn)(const Matrix&, std::span<const double>)>
void logsumexp(benchmark::State& state) {
  Rng rng(9);
  const Matrix phi = rng.normal_matrix(10, state.range(0));
  const Vector theta = rng.normal_vector(10);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(phi, theta));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

#define TABLE_ARGS Args({200, 400})->Args({2000, 400})

BENCHMARK(softmax_table<ref::softmax_table>)->Name("ref/softmax_table")->TABLE_ARGS;
BENCHMARK(softmax_table<par::softmax_table>)->Name("par/softmax_table")->TABLE_ARGS;
BENCHMARK(softmax_xent<ref::softmax_xent_terms>)->Name("ref/softmax_xent_terms")->TABLE_ARGS;
BENCHMARK(softmax_xent<par::softmax_xent_terms>)->Name("par/softmax_xent_terms")->TABLE_ARGS;
BENCHMARK(outer_sum<ref::weighted_outer_sum>)->Name("ref/weighted_outer_sum")->Args({200, 400});
BENCHMARK(outer_sum<par::weighted_outer_sum>)->Name("par/weighted_outer_sum")->Args({200, 400});
BENCHMARK(logsumexp<ref::logsumexp_logits>)->Name("ref/logsumexp_logits")->Arg(100000);
BENCHMARK(logsumexp<par::logsumexp_logits>)->Name("par/logsumexp_logits")->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
