#include <benchmark/benchmark.h>

#include "lingo/decode.hpp"
#include "lingo/metrics.hpp"
#include "lingo/model.hpp"
#include "lingo/ops.hpp"
#include "lingo/rng.hpp"

namespace {

using namespace lingo;

MatF random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    MatF m(r, c);
    for (auto& v : m.data) v = static_cast<float>(rng.gaussian());
    return m;
}

void BM_matmul(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const MatF a = random_matrix(n, n, 1);
    const MatF b = random_matrix(n, n, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

struct BenchModel {
    Vocabulary vocab{std::vector<std::string>{"ba", "be", "bi", "bo", "bu", "ka", "ke", "ki",
                                              "ko", "ku", " "},
                     std::vector<std::string>{"one", "two"}};
    ModelConfig cfg;
    Model<float> model;
    MatF features;

    BenchModel() {
        cfg.feature_dim = 24;
        cfg.model_dim = 48;
        cfg.ffn_dim = 96;
        model = Model<float>(cfg, vocab, 7);
        features = random_matrix(80, 24, 3);
    }
};

void BM_encode(benchmark::State& state) {
    BenchModel b;
    for (auto _ : state) {
        benchmark::DoNotOptimize(b.model.encode(b.features));
    }
}
BENCHMARK(BM_encode);

void BM_decode_step(benchmark::State& state) {
    BenchModel b;
    const MatF memory = b.model.encode(b.features);
    EmbeddingView<float> view = b.model.emb.base_view(b.vocab);
    TokenSeq prefix{b.vocab.sot(), b.vocab.lid_id("one")};
    for (int i = 0; i < 10; ++i) prefix.push_back(b.vocab.vocab_id_at(i % b.vocab.vocab_size()));
    for (auto _ : state) {
        benchmark::DoNotOptimize(b.model.decode_step(memory, prefix, view));
    }
}
BENCHMARK(BM_decode_step);

void BM_sequence_loss_backward(benchmark::State& state) {
    BenchModel b;
    const MatF memory = b.model.encode(b.features);
    EmbeddingView<float> view = b.model.emb.base_view(b.vocab);
    TokenSeq target{b.vocab.sot(), b.vocab.lid_id("one")};
    for (int i = 0; i < 16; ++i) target.push_back(b.vocab.vocab_id_at(i % b.vocab.vocab_size()));
    target.push_back(b.vocab.eot());
    for (auto _ : state) {
        b.model.zero_grad();
        benchmark::DoNotOptimize(b.model.sequence_loss(memory, target, view));
        benchmark::DoNotOptimize(b.model.backward());
    }
}
BENCHMARK(BM_sequence_loss_backward);

void BM_wer(benchmark::State& state) {
    const std::string ref = "ka zi mo ta lu pe ro ka zi mo ta lu";
    const std::string hyp = "ka zi mo ta pe ro ro ka zi mo lu";
    for (auto _ : state) {
        benchmark::DoNotOptimize(wer(ref, hyp));
    }
}
BENCHMARK(BM_wer);

}  // namespace

BENCHMARK_MAIN();
