// Hot-path timings.

#include <benchmark/benchmark.h>

#include <vector>

#include "adacbm/concept_selector.hpp"
#include "adacbm/synthetic.hpp"
#include "adacbm/trainer.hpp"

namespace {

using namespace adacbm;

SyntheticProblem problem_for(std::size_t dims) {
  SyntheticSpec spec;
  spec.dims = dims;
  spec.n_classes = 8;
  spec.planted_per_class = 2;
  spec.distractors_per_class = 6;
  return make_synthetic_problem(spec);
}

BottleneckInit init_for(const SyntheticProblem& p) {
  const auto sel = select_concepts(p.train, p.concept_embeddings, p.concepts,
                                   {4, 0.9, TStatMode::kPaper});
  return bottleneck_from_selection(sel, p.concept_embeddings, p.concepts);
}

std::vector<Vector> rows_of(const Dataset& ds, std::size_t n) {
  std::vector<Vector> out;
  for (std::size_t r = 0; r < n && r < ds.size(); ++r) out.push_back(ds.embeddings.row_as_vector(r));
  return out;
}

void BM_ForwardLogits(benchmark::State& state) {
  const auto p = problem_for(static_cast<std::size_t>(state.range(0)));
  TrainConfig cfg;
  const auto model = std::get<AdaCbmModel>(
      initial_model(p.train.dims(), init_for(p), cfg, default_class_names(p.train.n_classes)));
  const auto xs = rows_of(p.test, 64);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_logits(model, xs[i++ % xs.size()]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardLogits)->Arg(32)->Arg(64)->Arg(256);

void BM_Backward(benchmark::State& state) {
  const auto p = problem_for(64);
  TrainConfig cfg;
  const auto model = initial_model(p.train.dims(), init_for(p), cfg,
                                   default_class_names(p.train.n_classes));
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  const auto xs = rows_of(p.train, batch_size);
  const auto labels = p.train.labels();
  std::vector<Sample> batch;
  for (std::size_t s = 0; s < xs.size(); ++s) batch.push_back({xs[s], labels[s]});
  for (auto _ : state) benchmark::DoNotOptimize(backward(model, batch));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_Backward)->Arg(32)->Arg(256);

void BM_SelectConcepts(benchmark::State& state) {
  const auto p = problem_for(64);
  const SelectionOptions opts{static_cast<std::size_t>(state.range(0)), 0.9, TStatMode::kPaper};
  for (auto _ : state) {
    benchmark::DoNotOptimize(select_concepts(p.train, p.concept_embeddings, p.concepts, opts));
  }
}
BENCHMARK(BM_SelectConcepts)->Arg(2)->Arg(6);

}  // namespace

BENCHMARK_MAIN();
