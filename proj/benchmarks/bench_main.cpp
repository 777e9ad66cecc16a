#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "morphgan/config.hpp"
#include "morphgan/eval.hpp"
#include "morphgan/nets.hpp"
#include "morphgan/trainer.hpp"

namespace {

using namespace morphgan;

NetworkSpec spec_at(NetKind kind, int size) {
  NetworkSpec s;
  s.kind = kind;
  s.input_size = size;
  return s;
}

void BM_GeneratorForward(benchmark::State& st) {
  const auto spec = spec_at(NetKind::generator, static_cast<int>(st.range(0)));
  const auto w = init_weights(spec, 1);
  const auto x = torch::rand({16, 1, spec.input_size, spec.input_size});
  for (auto _ : st) benchmark::DoNotOptimize(generator_forward(spec, w, x, Mode::eval, 0));
  st.SetItemsProcessed(st.iterations() * 16);
}
BENCHMARK(BM_GeneratorForward)->Arg(32)->Arg(64)->Arg(108)->Unit(benchmark::kMillisecond);

void BM_AutoencoderForward(benchmark::State& st) {
  auto spec = spec_at(NetKind::autoencoder_discriminator, static_cast<int>(st.range(0)));
  const auto w = init_weights(spec, 2);
  const auto x = torch::rand({16, 1, spec.input_size, spec.input_size});
  for (auto _ : st) benchmark::DoNotOptimize(autoencode(spec, w, x));
  st.SetItemsProcessed(st.iterations() * 16);
}
BENCHMARK(BM_AutoencoderForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EmbedderForward(benchmark::State& st) {
  TrainConfig c;
  const auto spec = embedder_spec(c);
  const auto w = init_weights(spec, 3);
  const auto x = torch::rand({64, 1, spec.input_size, spec.input_size});
  for (auto _ : st) benchmark::DoNotOptimize(embed(spec, w, x));
  st.SetItemsProcessed(st.iterations() * 64);
}
BENCHMARK(BM_EmbedderForward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
  TrainConfig c;
  c.log_every = 0;
  c.data.synthetic.num_ids = 20;
  c.data.real.num_ids = 20;
  const auto bundle = build_datasets(c.data);
  const auto emb = init_weights(embedder_spec(c), 4).detached();
  auto state = init_state(c, emb);
  std::int64_t iter = 0;
  for (auto _ : st) {
    auto r = train_step(state, sample_batches(bundle, c, iter++), c);
    state = std::move(r.state);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_ComputeEer(benchmark::State& st) {
  const auto n = st.range(0);
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(5);
  const auto d = torch::rand({n}, gen, torch::kDouble).contiguous();
  std::vector<double> dist(d.data_ptr<double>(), d.data_ptr<double>() + n);
  std::vector<bool> same(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) same[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(i)] < 0.5;
  for (auto _ : st) benchmark::DoNotOptimize(compute_eer(dist, same));
  st.SetComplexityN(n);
}
BENCHMARK(BM_ComputeEer)->Range(1 << 8, 1 << 16)->Complexity();

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
