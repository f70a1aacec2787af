#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "delta/core.h"
#include "delta/decoder.h"
#include "delta/ngram.h"

namespace {

using namespace delta;

LogitVector random_logits(std::size_t v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::vector<double> x(v);
  for (auto& e : x) e = normal(rng);
  return LogitVector(std::move(x));
}

void BM_Combine(benchmark::State& state) {
  const auto v = static_cast<std::size_t>(state.range(0));
  const auto base = random_logits(v, 1), expert = random_logits(v, 2), expert_base = random_logits(v, 3);
  for (auto _ : state) benchmark::DoNotOptimize(combine_logits(base, expert, expert_base, 1.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Combine)->Arg(1 << 10)->Arg(1 << 15)->Arg(152064);

void BM_Softmax(benchmark::State& state) {
  const auto logits = random_logits(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_with_temperature(logits, 0.7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Softmax)->Arg(1 << 10)->Arg(1 << 15)->Arg(152064);

void BM_Nucleus(benchmark::State& state) {
  const auto dist = softmax_with_temperature(random_logits(static_cast<std::size_t>(state.range(0)), 5), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(nucleus_filter(dist, 0.95));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Nucleus)->Arg(1 << 10)->Arg(1 << 15)->Arg(152064);

struct NgramFixture {
  Vocabulary vocab;
  NGramModel model;
};

NgramFixture make_ngram(int order) {
  std::string words;
  for (int i = 0; i < 500; ++i) words += "w" + std::to_string(i) + " ";
  auto vocab = Vocabulary::from_words(std::vector<std::string>{words});
  std::mt19937_64 rng(6);
  std::vector<std::vector<TokenId>> corpus(2000);
  for (auto& d : corpus) {
    d.resize(20);
    for (auto& t : d) t = static_cast<TokenId>(rng() % vocab.size());
  }
  auto model = train_ngram(corpus, order, 0.1, vocab);
  return {std::move(vocab), std::move(model)};
}

void BM_NgramScore(benchmark::State& state) {
  const auto f = make_ngram(static_cast<int>(state.range(0)));
  const std::vector<TokenId> prefix{3, 14, 15, 92};
  for (auto _ : state) benchmark::DoNotOptimize(f.model.score(prefix));
}
BENCHMARK(BM_NgramScore)->Arg(2)->Arg(3)->Arg(4);

void BM_TransferDecode(benchmark::State& state) {
  const auto base = make_ngram(3);
  const auto expert = make_ngram(2);
  DecodeConfig cfg;
  cfg.lambda = 1.0;
  cfg.max_tokens = state.range(0);
  const std::vector<TokenId> prompt{1, 2, 3};
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode({&base.model, &expert.model, &expert.model}, prompt, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TransferDecode)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
