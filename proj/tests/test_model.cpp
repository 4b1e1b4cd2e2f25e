#include <doctest.h>

#include <cmath>

#include "lingo/checkpoint.hpp"
#include "lingo/decode.hpp"
#include "lingo/evalrun.hpp"
#include "lingo/hash.hpp"
#include "lingo/model.hpp"
#include "lingo/training.hpp"
#include "testutil.hpp"

using namespace lingo;

namespace {

Vocabulary model_vocab() {
    return Vocabulary({"ba", "be", "bi", "bo", "bu", "ka", "ke", " "}, {"one", "two"});
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.feature_dim = 5;
    cfg.model_dim = 8;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.heads = 2;
    cfg.ffn_dim = 12;
    return cfg;
}

MatF random_features(std::size_t t, std::size_t f, std::uint64_t seed) {
    Rng rng(seed);
    MatF m(t, f);
    for (auto& v : m.data) v = static_cast<float>(rng.gaussian());
    return m;
}

}  // namespace

TEST_CASE("zero-layer encoder degenerates to the input projection") {
    const Vocabulary vocab = model_vocab();
    ModelConfig cfg = tiny_config();
    cfg.encoder_layers = 0;
    Model<float> model(cfg, vocab, 1);
    const MatF features = random_features(4, 5, 2);
    const MatF memory = model.encode(features);
    const MatF expected = model.encoder.in_proj.forward(features);
    CHECK(memory == expected);
}

TEST_CASE("encode is deterministic and checks the feature dimension") {
    const Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    const MatF features = random_features(6, 5, 3);
    CHECK(model.encode(features) == model.encode(features));
    // memory has one row per frame
    CHECK(model.encode(features).rows == features.rows);
    const MatF bad = random_features(6, 4, 3);
    CHECK_THROWS_AS(model.encode(bad), std::invalid_argument);
}

TEST_CASE("decode_step logits span the specials plus the view vocabulary") {
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    const MatF memory = model.encode(random_features(6, 5, 4));
    EmbeddingView<float> base = model.emb.base_view(vocab);
    const TokenSeq prefix{vocab.sot()};
    CHECK(model.decode_step(memory, prefix, base).size() ==
          static_cast<std::size_t>(vocab.num_specials() + vocab.vocab_size()));

    const int lid = vocab.add_language("three");
    model.emb.register_language("three", lid, 5);
    std::vector<Utterance> train{{"u", "three", "ka be", 0}};
    model.emb.spawn_language_table("three", train, vocab);
    EmbeddingView<float> view = model.emb.select_view("three", vocab);
    // specials grew by one; the language covers ka, be and the space
    CHECK(model.decode_step(memory, prefix, view).size() ==
          static_cast<std::size_t>(vocab.num_specials() + 3));
}

TEST_CASE("a full-table view on an untouched model matches the base decode") {
    // spawning a table that covers the whole vocabulary (copy-initialized)
    // must reproduce base-view logits exactly
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    const MatF memory = model.encode(random_features(6, 5, 4));
    const TokenSeq prefix{vocab.sot()};

    std::string all_text;
    for (int j = 0; j < vocab.vocab_size(); ++j) {
        const std::string tok = vocab.token(vocab.vocab_id_at(j));
        if (tok != " ") all_text += (all_text.empty() ? "" : " ") + tok;
    }
    const int lid = vocab.add_language("full");
    model.emb.register_language("full", lid, 5);
    std::vector<Utterance> train{{"u", "full", all_text, 0}};
    model.emb.spawn_language_table("full", train, vocab);

    EmbeddingView<float> base = model.emb.base_view(vocab);
    const std::vector<float> base_logits = model.decode_step(memory, prefix, base);
    EmbeddingView<float> view = model.emb.select_view("full", vocab);
    const std::vector<float> view_logits = model.decode_step(memory, prefix, view);

    // the global token set gained one language-id special; vocabulary logits
    // must agree entry for entry
    REQUIRE(view.vocab_rows() == vocab.vocab_size());
    for (int j = 0; j < vocab.vocab_size(); ++j) {
        const int gid = vocab.vocab_id_at(j);
        CHECK(view_logits[static_cast<std::size_t>(view.to_local(gid))] ==
              base_logits[static_cast<std::size_t>(base.to_local(gid))]);
    }
}

TEST_CASE("uniform logits give loss ln(n)") {
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    // zero every parameter: hidden states become zero, logits uniform
    for (ParamTensor<float>* p : model.parameters()) p->value.fill(0.0f);
    const MatF memory = model.encode(random_features(4, 5, 6));
    EmbeddingView<float> view = model.emb.base_view(vocab);
    const TokenSeq target{vocab.sot(), vocab.lid_id("one"), vocab.tokenize("ba")[0], vocab.eot()};
    const float loss = model.sequence_loss(memory, target, view);
    CHECK(loss == doctest::Approx(std::log(static_cast<double>(view.size()))).epsilon(1e-5));
}

TEST_CASE("sequence_loss validates its target") {
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    const MatF memory = model.encode(random_features(4, 5, 6));
    EmbeddingView<float> view = model.emb.base_view(vocab);
    CHECK_THROWS_AS(model.sequence_loss(memory, {vocab.sot()}, view), std::invalid_argument);
    CHECK_THROWS_AS(model.sequence_loss(memory, {vocab.sot(), vocab.pad(), vocab.pad()}, view),
                    std::invalid_argument);
    CHECK_THROWS_AS(model.sequence_loss(memory, {vocab.eot(), vocab.pad()}, view),
                    std::invalid_argument);
}

TEST_CASE("model backward before loss is a hard error") {
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    CHECK_THROWS_AS(model.backward(), std::logic_error);
}

TEST_CASE("decode_step is causal") {
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    const MatF memory = model.encode(random_features(6, 5, 7));
    EmbeddingView<float> view = model.emb.base_view(vocab);
    TokenSeq input{vocab.sot(), vocab.lid_id("one"), vocab.tokenize("ba")[0],
                   vocab.tokenize("be")[0]};
    const MatF logits_full =
        model.forward_logits(memory, std::span<const int>(input.data(), input.size()), view);
    // perturb a later position; logits at earlier positions must not move
    TokenSeq perturbed = input;
    perturbed[3] = vocab.tokenize("bo")[0];
    const MatF logits_pert =
        model.forward_logits(memory, std::span<const int>(perturbed.data(), perturbed.size()), view);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t l = 0; l < logits_full.cols; ++l)
            CHECK(logits_full(k, l) == logits_pert(k, l));
    }
    bool last_changed = false;
    for (std::size_t l = 0; l < logits_full.cols; ++l)
        last_changed |= logits_full(3, l) != logits_pert(3, l);
    CHECK(last_changed);
}

TEST_CASE("loss decreases while overfitting one utterance") {
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 1);
    const MatF features = random_features(8, 5, 8);
    const TokenSeq target{vocab.sot(), vocab.lid_id("one"), vocab.tokenize("ba")[0],
                          vocab.tokenize(" ")[0], vocab.tokenize("ke")[0], vocab.eot()};
    AdamW<float> opt(AdamWConfig{.lr = 3e-3});
    float prev = 1e30f;
    for (int step = 0; step < 10; ++step) {
        model.zero_grad();
        const MatF memory = model.encode(features);
        EmbeddingView<float> view = model.emb.base_view(vocab);
        const float loss = model.sequence_loss(memory, target, view);
        model.encoder.backward(model.backward());
        auto params = model.parameters();
        opt.step(params);
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("checkpoint save/load round trip is bit-exact") {
    testutil::TempDir dir("ckpt");
    Vocabulary vocab = model_vocab();
    Model<float> model(tiny_config(), vocab, 9);
    const int lid = vocab.add_language("three");
    model.emb.register_language("three", lid, 5);
    std::vector<Utterance> train{{"u", "three", "ka be", 0}};
    model.emb.spawn_language_table("three", train, vocab);

    const Checkpoint ckpt = checkpoint_from_model(model, vocab);
    const std::string p1 = dir.path() + "/a.bin";
    const std::string p2 = dir.path() + "/b.bin";
    save_checkpoint(ckpt, p1);
    const Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(testutil::read_file(p1) == testutil::read_file(p2));
    CHECK(!testutil::read_file(p1).empty());

    // a rebuilt model produces identical outputs
    Vocabulary vocab2(
        {"ba", "be", "bi", "bo", "bu", "ka", "ke", " "}, {"one", "two"});
    Model<float> restored = model_from_checkpoint(loaded, vocab2);
    const MatF features = random_features(6, 5, 10);
    const MatF m1 = model.encode(features);
    const MatF m2 = restored.encode(features);
    CHECK(m1 == m2);
    EmbeddingView<float> v1 = model.emb.select_view("three", vocab);
    EmbeddingView<float> v2 = restored.emb.select_view("three", vocab2);
    const TokenSeq prefix{vocab.sot(), lid};
    CHECK(model.decode_step(m1, prefix, v1) == restored.decode_step(m2, prefix, v2));
}

TEST_CASE("teacher-forced argmax on the trained model matches targets") {
    auto& f = testutil::pretrained_fixture();
    Vocabulary vocab;
    Model<float> model = testutil::fresh_pretrained(f, vocab);
    const Corpus& corpus = f.old_corpora[0];
    const int lid = vocab.lid_id(corpus.language);
    long correct = 0, total = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        const Utterance& u = corpus.test[i];
        const MatF memory = model.encode(utterance_features(f.specs, u, vocab));
        TokenSeq target{vocab.sot(), lid};
        for (int id : vocab.tokenize(u.text)) target.push_back(id);
        target.push_back(vocab.eot());
        EmbeddingView<float> view = model.emb.select_view(corpus.language, vocab);
        const MatF logits = model.forward_logits(
            memory, std::span<const int>(target.data(), target.size() - 1), view);
        for (std::size_t k = 0; k < logits.rows; ++k) {
            std::size_t best = 0;
            for (std::size_t l = 1; l < logits.cols; ++l) {
                if (logits(k, l) > logits(k, best)) best = l;
            }
            correct += view.to_global(static_cast<int>(best)) == target[k + 1];
            ++total;
        }
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("default geometry trains and decodes") {
    // the full-size configuration (64-dim, 2+2 layers) exercised end to end
    // for a couple of steps; the quick profile shrinks it elsewhere
    Vocabulary vocab = model_vocab();
    ModelConfig cfg;  // defaults
    cfg.feature_dim = 5;
    Model<float> model(cfg, vocab, 31);
    const MatF features = random_features(12, 5, 32);
    const TokenSeq target{vocab.sot(), vocab.lid_id("one"), vocab.tokenize("ka")[0],
                          vocab.tokenize(" ")[0], vocab.tokenize("be")[0], vocab.eot()};
    AdamW<float> opt;
    float first = 0, last = 0;
    for (int step = 0; step < 3; ++step) {
        model.zero_grad();
        const MatF memory = model.encode(features);
        EmbeddingView<float> view = model.emb.base_view(vocab);
        const float loss = model.sequence_loss(memory, target, view);
        if (step == 0) first = loss;
        last = loss;
        model.encoder.backward(model.backward());
        auto params = model.parameters();
        opt.step(params);
    }
    CHECK(last < first);
    const MatF memory = model.encode(features);
    DecodeConfig dcfg;
    const DecodingPath p = decode_language_aware(model, vocab, memory, "one", dcfg);
    CHECK(p.tokens.front() == vocab.sot());
    CHECK(p.tokens.back() == vocab.eot());
}

TEST_CASE("frozen encoder bytes are identical after adaptation") {
    auto& f = testutil::pretrained_fixture();
    Vocabulary vocab;
    Model<float> model = testutil::fresh_pretrained(f, vocab);
    const std::uint64_t before = encoder_hash(model);

    TrainHyper hyper = f.cfg.adapt;
    hyper.epochs = 1;
    adapt_phase(model, vocab, f.specs, f.new_corpora[0], nullptr, Strategy::FT, hyper, 99);
    CHECK(encoder_hash(model) == before);
}
