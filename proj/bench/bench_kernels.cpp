// Serial reference vs OpenMP kernels. Arg 0 selects Exec::serial, 1 Exec::parallel.

#include <benchmark/benchmark.h>

#include "aal/clustering.hpp"
#include "aal/exec.hpp"
#include "aal/rng.hpp"
#include "aal/strategies.hpp"
#include "aal/tagger.hpp"

using namespace aal;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

Matrix random_points(int n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, 2);
  for (int i = 0; i < n; ++i) {
    m(i, 0) = rng.normal() + 4.0 * (i % 5);
    m(i, 1) = rng.normal();
  }
  return m;
}

struct TaggerFixture {
  TaggerModel model;
  std::vector<EncodedSentence> sentences;
  std::vector<const EncodedSentence*> batch;
  std::vector<const Matrix*> inputs;

  explicit TaggerFixture(BackboneKind kind) {
    ModelSpec spec;
    spec.kind = kind;
    spec.input_dim = 50;
    spec.hidden = 32;
    model = TaggerModel::create(spec, 1);
    Rng rng(2);
    sentences.resize(256);
    for (auto& s : sentences) {
      const long T = 8 + static_cast<long>(rng.below(20));
      s.x.resize(T, 50);
      for (Eigen::Index k = 0; k < s.x.size(); ++k) s.x.data()[k] = rng.normal();
      for (long t = 0; t < T; ++t) s.gold.push_back(static_cast<int>(rng.below(3)));
    }
    for (auto& s : sentences) {
      batch.push_back(&s);
      inputs.push_back(&s.x);
    }
  }
};

void BM_silhouette(benchmark::State& state) {
  const Matrix p = random_points(2000, 3);
  std::vector<int> lab(2000);
  for (int i = 0; i < 2000; ++i) lab[i] = i % 5;
  for (auto _ : state) benchmark::DoNotOptimize(cluster_quality(p, lab, QualityMetric::silhouette, exec_of(state)));
}

void BM_dbscan(benchmark::State& state) {
  const Matrix p = random_points(4000, 4);
  for (auto _ : state) benchmark::DoNotOptimize(fit_dbscan(p, 0.3, 5, exec_of(state)));
}

void BM_gradient(benchmark::State& state) {
  static TaggerFixture f(BackboneKind::bilstm);
  for (auto _ : state) benchmark::DoNotOptimize(nll_and_gradient(f.model, f.batch, true, 9, exec_of(state)));
}

void BM_score_pool(benchmark::State& state) {
  static TaggerFixture f(BackboneKind::bilstm);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        score_pool(f.model, f.inputs, Criterion::entropy, PosteriorMode::crf_marginals, exec_of(state)));
  }
}

}  // namespace

BENCHMARK(BM_silhouette)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_dbscan)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score_pool)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
