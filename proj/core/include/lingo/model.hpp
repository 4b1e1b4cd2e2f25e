#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lingo/layers.hpp"
#include "lingo/matrix.hpp"
#include "lingo/split_embedding.hpp"
#include "lingo/vocab.hpp"

namespace lingo {

struct ModelConfig {
    std::size_t feature_dim = 24;
    std::size_t model_dim = 64;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t heads = 4;
    std::size_t ffn_dim = 128;
    std::size_t max_decode_len = 48;

    void validate() const {
        if (model_dim == 0 || heads == 0 || model_dim % heads != 0)
            throw std::invalid_argument("ModelConfig: model_dim must be a positive multiple of heads");
        if (feature_dim == 0 || ffn_dim == 0 || max_decode_len < 4)
            throw std::invalid_argument("ModelConfig: bad dimensions");
    }
};

template <typename T>
struct Encoder {
    Linear<T> in_proj;
    std::vector<EncoderLayer<T>> layers;
    LayerNormModule<T> ln_out;
    std::size_t dim = 0;

    void init(const ModelConfig& cfg, Rng& rng, T std_dev) {
        dim = cfg.model_dim;
        // fan-in scale keeps the residual stream at unit variance; a tiny
        // init here leaves the first layer norm badly conditioned
        const T in_std = T(1) / std::sqrt(static_cast<T>(cfg.feature_dim));
        in_proj.init("enc.in", cfg.feature_dim, cfg.model_dim, rng, in_std);
        layers.resize(cfg.encoder_layers);
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].init("enc.l" + std::to_string(i), cfg.model_dim, cfg.heads, cfg.ffn_dim, rng,
                           std_dev);
        ln_out.init("enc.out", cfg.model_dim);
    }

    // A zero-layer encoder degenerates to the input projection (test mode).
    Matrix<T> forward(const Matrix<T>& features) {
        Matrix<T> x = in_proj.forward(features);
        if (layers.empty()) return x;
        add_inplace(x, positional_encoding<T>(x.rows, dim));
        for (auto& layer : layers) x = layer.forward(x);
        return ln_out.forward(x);
    }

    void backward(const Matrix<T>& dmemory) {
        if (layers.empty()) {
            in_proj.backward(dmemory);
            return;
        }
        Matrix<T> d = ln_out.backward(dmemory);
        for (std::size_t i = layers.size(); i-- > 0;) d = layers[i].backward(d);
        in_proj.backward(d);
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        in_proj.collect(out);
        for (auto& layer : layers) layer.collect(out);
        ln_out.collect(out);
    }
};

template <typename T>
struct Decoder {
    std::vector<DecoderLayer<T>> layers;
    LayerNormModule<T> ln_out;
    std::size_t dim = 0;

    void init(const ModelConfig& cfg, Rng& rng, T std_dev) {
        dim = cfg.model_dim;
        layers.resize(cfg.decoder_layers);
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].init("dec.l" + std::to_string(i), cfg.model_dim, cfg.heads, cfg.ffn_dim, rng,
                           std_dev);
        ln_out.init("dec.out", cfg.model_dim);
    }

    Matrix<T> forward(const Matrix<T>& embedded, const Matrix<T>& memory) {
        Matrix<T> x = embedded;
        add_inplace(x, positional_encoding<T>(x.rows, dim));
        for (auto& layer : layers) x = layer.forward(x, memory);
        return ln_out.forward(x);
    }

    // Returns the gradient w.r.t. the embedded inputs; accumulates dmemory.
    Matrix<T> backward(const Matrix<T>& dhidden, Matrix<T>& dmemory) {
        Matrix<T> d = ln_out.backward(dhidden);
        for (std::size_t i = layers.size(); i-- > 0;) d = layers[i].backward(d, dmemory);
        return d;
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        for (auto& layer : layers) layer.collect(out);
        ln_out.collect(out);
    }
};

// Miniature encoder-decoder transcription model. The decoder consumes token
// embeddings through an EmbeddingView and projects its hidden states back
// through the same view (tied input/output embeddings), so restricting the
// view restricts both lookup and the emittable token set.
//
// parameters() returns raw pointers; registering or spawning a language
// invalidates them, so callers re-fetch after any registry change.
template <typename T>
class Model {
public:
    Model() = default;

    Model(ModelConfig cfg, const Vocabulary& vocab, std::uint64_t init_seed)
        : cfg_(cfg), emb(vocab, cfg.model_dim, derive_seed(init_seed, "emb")) {
        cfg_.validate();
        Rng rng(derive_seed(init_seed, "net"));
        encoder.init(cfg_, rng, T(0.02));
        decoder.init(cfg_, rng, T(0.02));
    }

    const ModelConfig& config() const { return cfg_; }

    Matrix<T> encode(const Matrix<T>& features) {
        if (features.cols != cfg_.feature_dim)
            shape_error("encode", features.shape_str(),
                        "Tx" + std::to_string(cfg_.feature_dim));
        require_finite(features, "encode input");
        return encoder.forward(features);
    }

    // Teacher-forced logits for every prefix position: row k holds logits over
    // the view's token space for predicting position k+1.
    Matrix<T> forward_logits(const Matrix<T>& memory, std::span<const int> input_ids,
                             const EmbeddingView<T>& view) {
        if (input_ids.empty()) throw std::invalid_argument("forward_logits: empty input");
        if (input_ids.size() >= cfg_.max_decode_len + 2)
            throw std::invalid_argument("forward_logits: prefix exceeds max_decode_len");
        const std::size_t k = input_ids.size();
        const std::size_t dim = cfg_.model_dim;
        locals_.resize(k);
        Matrix<T> embedded(k, dim);
        for (std::size_t i = 0; i < k; ++i) {
            locals_[i] = view.to_local(input_ids[i]);
            const T* row = view.embedding_row(locals_[i]);
            std::copy(row, row + dim, embedded.row(i));
        }
        hidden_ = decoder.forward(embedded, memory);
        const std::size_t v = static_cast<std::size_t>(view.size());
        Matrix<T> logits(k, v);
        for (std::size_t i = 0; i < k; ++i) {
            const T* h = hidden_.row(i);
            T* li = logits.row(i);
            for (std::size_t l = 0; l < v; ++l) {
                const T* e = view.embedding_row(static_cast<int>(l));
                T acc = T(0);
                for (std::size_t j = 0; j < dim; ++j) acc += h[j] * e[j];
                li[l] = acc;
            }
        }
        memory_rows_ = memory.rows;
        fresh_ = false;  // no loss yet
        return logits;
    }

    // Mean token-level cross entropy with teacher forcing over positions
    // 1..end; the language-id token right after start-of-transcript is a
    // predicted target. Prepares the backward pass.
    T sequence_loss(const Matrix<T>& memory, const TokenSeq& target, const EmbeddingView<T>& view) {
        validate_target(target, view);
        const std::span<const int> input(target.data(), target.size() - 1);
        const Matrix<T> logits = forward_logits(memory, input, view);
        const std::span<const int> predict(target.data() + 1, target.size() - 1);
        targets_local_.resize(predict.size());
        for (std::size_t i = 0; i < predict.size(); ++i)
            targets_local_[i] = view.to_local(predict[i]);
        const T loss = softmax_cross_entropy(logits, std::span<const int>(targets_local_), dlogits_);
        view_ = view;
        fresh_ = true;
        return loss;
    }

    // Backpropagates the prepared loss, scaled by `scale` (batch averaging is
    // the caller's business). Accumulates gradients into every parameter it
    // touches and returns the gradient w.r.t. the encoder memory.
    Matrix<T> backward(T scale = T(1)) {
        if (!fresh_) throw std::logic_error("Model::backward before sequence_loss");
        fresh_ = false;
        const std::size_t k = dlogits_.rows;
        const std::size_t v = dlogits_.cols;
        const std::size_t dim = cfg_.model_dim;
        if (scale != T(1)) scale_inplace(dlogits_, scale);
        // tied projection: logits = H . E^T over the view rows
        Matrix<T> dhidden(k, dim);
        for (std::size_t i = 0; i < k; ++i) {
            const T* dl = dlogits_.row(i);
            const T* h = hidden_.row(i);
            T* dh = dhidden.row(i);
            for (std::size_t l = 0; l < v; ++l) {
                const T g = dl[l];
                if (g == T(0)) continue;
                const T* e = view_.embedding_row(static_cast<int>(l));
                for (std::size_t j = 0; j < dim; ++j) dh[j] += g * e[j];
                if (T* de = view_.grad_row_if_trainable(static_cast<int>(l))) {
                    for (std::size_t j = 0; j < dim; ++j) de[j] += g * h[j];
                }
            }
        }
        Matrix<T> dmemory(memory_rows_, dim);
        Matrix<T> dembedded = decoder.backward(dhidden, dmemory);
        for (std::size_t i = 0; i < k; ++i) {
            if (T* de = view_.grad_row_if_trainable(locals_[i])) {
                const T* dr = dembedded.row(i);
                for (std::size_t j = 0; j < dim; ++j) de[j] += dr[j];
            }
        }
        return dmemory;
    }

    // Logits over the view's token space for the next token after `prefix`.
    std::vector<T> decode_step(const Matrix<T>& memory, const TokenSeq& prefix,
                               const EmbeddingView<T>& view) {
        if (prefix.empty() || prefix.front() != view.vocab->sot())
            throw std::invalid_argument("decode_step: prefix must begin with start-of-transcript");
        if (prefix.size() >= cfg_.max_decode_len + 2)
            throw std::invalid_argument("decode_step: prefix exceeds max_decode_len");
        const Matrix<T> logits =
            forward_logits(memory, std::span<const int>(prefix.data(), prefix.size()), view);
        const T* last = logits.row(logits.rows - 1);
        return std::vector<T>(last, last + logits.cols);
    }

    std::vector<ParamTensor<T>*> parameters() {
        std::vector<ParamTensor<T>*> out;
        encoder.collect(out);
        decoder.collect(out);
        out.push_back(&emb.st);
        out.push_back(&emb.base);
        for (auto& lt : emb.lang_tables) out.push_back(&lt.table);
        return out;
    }

    std::vector<ParamTensor<T>*> encoder_parameters() {
        std::vector<ParamTensor<T>*> out;
        encoder.collect(out);
        return out;
    }

    void set_encoder_trainable(bool trainable) {
        for (ParamTensor<T>* p : encoder_parameters()) p->trainable = trainable;
    }

    void zero_grad() {
        for (ParamTensor<T>* p : parameters()) p->zero_grad();
    }

    Encoder<T> encoder;
    Decoder<T> decoder;
    SplitEmbedding<T> emb;

private:
    void validate_target(const TokenSeq& target, const EmbeddingView<T>& view) const {
        if (target.size() < 2)
            throw std::invalid_argument("sequence_loss: target needs at least [sot, token]");
        if (target.front() != view.vocab->sot())
            throw std::invalid_argument("sequence_loss: target must begin with start-of-transcript");
        bool all_pad = true;
        for (std::size_t i = 1; i < target.size(); ++i) {
            if (target[i] != view.vocab->pad()) all_pad = false;
        }
        if (all_pad) throw std::invalid_argument("sequence_loss: target contains only padding");
    }

    ModelConfig cfg_;
    // forward caches
    Matrix<T> hidden_;
    Matrix<T> dlogits_;
    std::vector<int> locals_;
    std::vector<int> targets_local_;
    EmbeddingView<T> view_;
    std::size_t memory_rows_ = 0;
    bool fresh_ = false;
};

using RealModel = Model<float>;

// Parameter value snapshot for in-run best-checkpoint tracking.
template <typename T>
std::vector<Matrix<T>> snapshot_values(Model<T>& model) {
    std::vector<Matrix<T>> out;
    for (ParamTensor<T>* p : model.parameters()) out.push_back(p->value);
    return out;
}

template <typename T>
void restore_values(Model<T>& model, const std::vector<Matrix<T>>& values) {
    auto params = model.parameters();
    if (params.size() != values.size())
        throw std::invalid_argument("restore_values: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace lingo
