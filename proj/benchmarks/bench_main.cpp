// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "rescap/cot_captioner.hpp"
#include "rescap/degradation_adapter.hpp"
#include "rescap/text_conditioning.hpp"

namespace {

using namespace rescap;

void BM_ExtendRichness(benchmark::State& state) {
  std::string text;
  for (int i = 0; i < 3; ++i) text += "a narrow stone bridge crosses a slow river under a pale sky ";
  const auto seq = encode_stub(text, 768);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(extend_richness(seq, k));
}
BENCHMARK(BM_ExtendRichness)->Arg(0)->Arg(3)->Arg(10);

AdapterState bench_adapter() { return init_adapter(AdapterConfig{16, 256, 36, 64, Activation::relu}, 1); }

Eigen::MatrixXd bench_features(int rows, int cols) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd f(rows, cols);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
  return f;
}

void BM_AdapterForward(benchmark::State& state) {
  const auto s = bench_adapter();
  const auto f = bench_features(16, 256);
  for (auto _ : state) benchmark::DoNotOptimize(adapter_forward(s, f));
}
BENCHMARK(BM_AdapterForward);

void BM_AdapterBackward(benchmark::State& state) {
  const auto s = bench_adapter();
  const auto f = bench_features(16, 256);
  const auto g = bench_features(36, 256);
  for (auto _ : state) benchmark::DoNotOptimize(adapter_backward(s, f, g));
}
BENCHMARK(BM_AdapterBackward);

void BM_FilterHarmful(benchmark::State& state) {
  const auto lexicon = default_harmful_lexicon();
  std::string text;
  for (int i = 0; i < 20; ++i)
    text += i % 7 == 3 ? "The background is blurred with a bokeh effect. " : "A wooden boat rests on the sand. ";
  const auto caption = make_caption(text);
  for (auto _ : state) benchmark::DoNotOptimize(filter_harmful(caption, lexicon));
}
BENCHMARK(BM_FilterHarmful);

void BM_MeanOffset(benchmark::State& state) {
  std::vector<LengthAnnotation> annotations;
  std::map<std::string, CoTCaption> predictions;
  for (int i = 0; i < 1000; ++i) {
    const auto id = "img" + std::to_string(i);
    annotations.push_back({id, 80 + i % 300, {}});
    predictions[id] = {100 + (i * 37) % 300, "x"};
  }
  for (auto _ : state) benchmark::DoNotOptimize(mean_offset(annotations, predictions));
}
BENCHMARK(BM_MeanOffset);

}  // namespace
BENCHMARK_MAIN();
