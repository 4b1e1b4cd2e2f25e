#include <doctest.h>

#include <cmath>

#include "lingo/gradcheck.hpp"
#include "lingo/model.hpp"
#include "lingo/ops.hpp"
#include "lingo/optim.hpp"

using namespace lingo;

TEST_CASE("softmax of a constant row is uniform") {
    MatD x(1, 3);
    const MatD p = row_softmax(x);
    for (int j = 0; j < 3; ++j) CHECK(p(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    double sum = 0;
    for (int j = 0; j < 3; ++j) sum += p(0, j);
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(7);
    MatD x(5, 9);
    for (auto& v : x.data) v = rng.gaussian() * 3.0;
    const MatD p = row_softmax(x);
    for (std::size_t i = 0; i < p.rows; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < p.cols; ++j) sum += p(i, j);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("layer norm maps a constant row to zero before affine") {
    MatD x(1, 8, 3.7);
    std::vector<double> gamma(8, 1.0), beta(8, 0.0);
    LayerNormCache<double> cache;
    const MatD y = layer_norm(x, gamma, beta, 1e-5, cache);
    for (double v : y.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross entropy closed form: logits [2,0,0] class 0") {
    MatD logits(1, 3);
    logits(0, 0) = 2.0;
    MatD dlogits;
    const std::vector<int> target{0};
    const double loss = softmax_cross_entropy(logits, std::span<const int>(target), dlogits);
    CHECK(loss == doctest::Approx(std::log(1.0 + 2.0 * std::exp(-2.0))).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.2395).epsilon(1e-3));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    MatD a(2, 3), b(4, 2);
    CHECK_THROWS_WITH_AS(matmul(a, b), "matmul: shape mismatch 2x3 vs 4x2", std::invalid_argument);
}

TEST_CASE("linear backward reproduces the outer-product structure") {
    // loss = sum(W x): dW = 1 * x^T replicated per output row
    Rng rng(3);
    Linear<double> lin;
    lin.init("w", 4, 3, rng, 0.1);
    MatD x(1, 4);
    for (auto& v : x.data) v = rng.gaussian();
    const MatD y = lin.forward(x);
    MatD dy(1, 3, 1.0);  // d sum / dy = 1
    lin.backward(dy);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(lin.w.grad(i, j) == doctest::Approx(x(0, i)).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(lin.b.grad(0, j) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward before forward is a hard error") {
    Rng rng(11);
    Linear<double> lin;
    lin.init("lin", 2, 2, rng, 0.1);
    MatD dy(1, 2, 1.0);
    CHECK_THROWS_AS(lin.backward(dy), std::logic_error);
}

TEST_CASE("adamw: zero grad and zero weight decay leave parameters unchanged") {
    ParamTensor<double> p("p", MatD(2, 2, 1.5));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg);
    std::vector<ParamTensor<double>*> params{&p};
    opt.step(params);
    for (double v : p.value.data) CHECK(v == 1.5);
}

TEST_CASE("adamw: zero grad with weight decay is a pure decay shrink") {
    ParamTensor<double> p("p", MatD(1, 2, 2.0));
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    AdamW<double> opt(cfg);
    std::vector<ParamTensor<double>*> params{&p};
    opt.step(params);
    // theta <- theta - lr * wd * theta (the moment term is exactly zero)
    for (double v : p.value.data) CHECK(v == doctest::Approx(2.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-15));
}

TEST_CASE("adamw: fully masked tensor is bit-identical after a step") {
    ParamTensor<float> p("p", MatF(3, 3));
    Rng rng(5);
    for (auto& v : p.value.data) v = static_cast<float>(rng.gaussian());
    for (auto& g : p.grad.data) g = static_cast<float>(rng.gaussian());
    p.freeze_mask = MatF(3, 3, 0.0f);
    const std::vector<float> before = p.value.data;
    AdamW<float> opt;
    std::vector<ParamTensor<float>*> params{&p};
    opt.step(params);
    CHECK(p.value.data == before);
}

TEST_CASE("adamw: non-finite gradient aborts naming the parameter") {
    ParamTensor<double> p("enc.l0.attn.q.w", MatD(1, 1));
    p.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    AdamW<double> opt;
    std::vector<ParamTensor<double>*> params{&p};
    CHECK_THROWS_WITH_AS(opt.step(params), "adamw_step: non-finite gradient in enc.l0.attn.q.w",
                         std::domain_error);
}

TEST_CASE("adamw is deterministic") {
    auto run = [] {
        ParamTensor<double> p("p", MatD(4, 4));
        Rng rng(17);
        for (auto& v : p.value.data) v = rng.gaussian();
        AdamW<double> opt;
        std::vector<ParamTensor<double>*> params{&p};
        for (int s = 0; s < 5; ++s) {
            for (auto& g : p.grad.data) g = rng.gaussian();
            opt.step(params);
        }
        return p.value.data;
    };
    CHECK(run() == run());
}

TEST_CASE("freeze mask: masked entries exactly keep pre-step values") {
    Rng rng(23);
    ParamTensor<float> p("p", MatF(6, 4));
    for (auto& v : p.value.data) v = static_cast<float>(rng.gaussian());
    MatF mask(6, 4);
    for (auto& m : mask.data) m = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    p.freeze_mask = mask;
    const std::vector<float> before = p.value.data;
    AdamW<float> opt;
    std::vector<ParamTensor<float>*> params{&p};
    for (int s = 0; s < 3; ++s) {
        for (auto& g : p.grad.data) g = static_cast<float>(rng.gaussian());
        opt.step(params);
    }
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
        if (mask.data[i] == 0.0f) {
            CHECK(p.value.data[i] == before[i]);
        } else {
            CHECK(p.value.data[i] != before[i]);
        }
    }
}

TEST_CASE("newbob: large improvement keeps the rate") {
    NewBobScheduler sched;
    sched.current_lr = 1e-4;
    sched.update(1.0);
    CHECK(sched.update(0.9) == doctest::Approx(1e-4));  // 10% >> 0.25%
}

TEST_CASE("newbob: no improvement halves the rate") {
    NewBobScheduler sched;
    sched.current_lr = 1e-4;
    sched.update(1.0);
    CHECK(sched.update(1.0) == doctest::Approx(5e-5));
}

TEST_CASE("newbob: three consecutive plateaus give lr/8") {
    NewBobScheduler sched;
    sched.current_lr = 1e-4;
    sched.update(1.0);
    sched.update(1.0);
    sched.update(1.0);
    CHECK(sched.update(1.0) == doctest::Approx(1.25e-5));
}

TEST_CASE("newbob: patience delays annealing until the streak exceeds it") {
    NewBobScheduler sched;
    sched.current_lr = 1e-4;
    sched.patience = 1;
    sched.update(1.0);
    CHECK(sched.update(1.0) == doctest::Approx(1e-4));   // first plateau: tolerated
    CHECK(sched.update(1.0) == doctest::Approx(5e-5));   // second in a row: anneal
    CHECK(sched.update(0.5) == doctest::Approx(5e-5));   // improvement resets the streak
    CHECK(sched.update(0.5) == doctest::Approx(5e-5));
    CHECK(sched.update(0.5) == doctest::Approx(2.5e-5));
}

TEST_CASE("newbob: rate sequence is non-increasing") {
    NewBobScheduler sched;
    sched.current_lr = 1e-3;
    Rng rng(29);
    double prev = sched.current_lr;
    for (int i = 0; i < 50; ++i) {
        const double lr = sched.update(1.0 + rng.gaussian() * 0.2);
        CHECK(lr <= prev);
        prev = lr;
    }
}

namespace {

// Small full model with one spawned language table; the loss drives every
// parameter group (encoder through cross-attention, decoder, both embedding
// tables and the special-token rows).
struct GradCheckSetup {
    Vocabulary vocab;
    Model<double> model;
    Matrix<double> features_a, features_b;
    TokenSeq target_a, target_b;

    GradCheckSetup(std::size_t dim, std::size_t layers, std::size_t heads, std::size_t ffn)
        : vocab({"ba", "be", "bi", "bo", "bu", "ka", "ke", " "}, {"one", "two"}) {
        ModelConfig cfg;
        cfg.feature_dim = 5;
        cfg.model_dim = dim;
        cfg.encoder_layers = layers;
        cfg.decoder_layers = layers;
        cfg.heads = heads;
        cfg.ffn_dim = ffn;
        model = Model<double>(cfg, vocab, /*init_seed=*/99);

        std::vector<Utterance> train{{"u0", "two", "ka be", 1}, {"u1", "two", "ke ka", 2}};
        model.emb.spawn_language_table("two", train, vocab);

        Rng rng(41);
        features_a = Matrix<double>(7, 5);
        for (auto& v : features_a.data) v = rng.gaussian();
        features_b = Matrix<double>(6, 5);
        for (auto& v : features_b.data) v = rng.gaussian();
        target_a = {vocab.sot(), vocab.lid_id("one"), vocab.tokenize("ba bu")[0],
                    vocab.tokenize(" ")[0], vocab.tokenize("bu")[0], vocab.eot()};
        target_b = {vocab.sot(), vocab.lid_id("two"), vocab.tokenize("ka")[0],
                    vocab.tokenize(" ")[0], vocab.tokenize("be")[0], vocab.eot()};
    }

    double loss(bool with_grad) {
        EmbeddingView<double> base = model.emb.select_view("one", vocab);
        EmbeddingView<double> lang = model.emb.select_view("two", vocab);
        double total = 0.0;
        {
            const Matrix<double> memory = model.encode(features_a);
            total += model.sequence_loss(memory, target_a, base);
            if (with_grad) model.encoder.backward(model.backward());
        }
        {
            const Matrix<double> memory = model.encode(features_b);
            total += model.sequence_loss(memory, target_b, lang);
            if (with_grad) model.encoder.backward(model.backward());
        }
        return total;
    }
};

}  // namespace

TEST_CASE("finite differences confirm every analytic gradient (small model)") {
    GradCheckSetup setup(8, 1, 2, 12);
    auto params = setup.model.parameters();
    const FiniteDiffReport report =
        finite_diff_check(params, [&](bool g) { return setup.loss(g); });
    CHECK(report.max_rel_error < 1e-3);
    CHECK(report.fraction_within_soft() >= 0.999);
}

TEST_CASE("frozen tensors receive zero gradient and the optimizer skips them") {
    GradCheckSetup setup(8, 1, 2, 12);
    setup.model.emb.base.trainable = false;
    setup.model.zero_grad();
    (void)setup.loss(true);
    for (double g : setup.model.emb.base.grad.data) CHECK(g == 0.0);
    const std::vector<double> before = setup.model.emb.base.value.data;
    AdamW<double> opt;
    auto params = setup.model.parameters();
    opt.step(params);
    CHECK(setup.model.emb.base.value.data == before);
}
