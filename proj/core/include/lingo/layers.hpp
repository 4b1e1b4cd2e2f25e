#pragma once

#include <string>
#include <vector>

#include "lingo/matrix.hpp"
#include "lingo/ops.hpp"
#include "lingo/optim.hpp"
#include "lingo/rng.hpp"

// Transformer building blocks with explicit forward/backward passes. Each
// forward caches what its backward needs; backward must follow the matching
// forward (enforced with a freshness flag) and accumulates parameter
// gradients, returning the gradient w.r.t. its input.
namespace lingo {

template <typename T>
struct Linear {
    ParamTensor<T> w;  // in x out
    ParamTensor<T> b;  // 1 x out

    Matrix<T> x_;
    bool fresh_ = false;

    void init(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng, T std_dev) {
        Matrix<T> wm(in, out);
        for (T& v : wm.data) v = static_cast<T>(rng.gaussian()) * std_dev;
        w = ParamTensor<T>(prefix + ".w", std::move(wm));
        b = ParamTensor<T>(prefix + ".b", Matrix<T>(1, out));
    }

    Matrix<T> forward(const Matrix<T>& x) {
        x_ = x;
        fresh_ = true;
        Matrix<T> y = matmul(x, w.value);
        add_row_inplace(y, b.value.data);
        return y;
    }

    Matrix<T> backward(const Matrix<T>& dy) {
        if (!fresh_) throw std::logic_error(w.name + ": backward before forward");
        fresh_ = false;
        add_inplace(w.grad, matmul_tn(x_, dy));
        for (std::size_t i = 0; i < dy.rows; ++i) {
            const T* di = dy.row(i);
            for (std::size_t j = 0; j < dy.cols; ++j) b.grad.data[j] += di[j];
        }
        return matmul_nt(dy, w.value);
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct LayerNormModule {
    ParamTensor<T> gamma;  // 1 x dim
    ParamTensor<T> beta;   // 1 x dim
    T eps = T(1e-5);

    LayerNormCache<T> cache_;
    bool fresh_ = false;

    void init(const std::string& prefix, std::size_t dim) {
        gamma = ParamTensor<T>(prefix + ".g", Matrix<T>(1, dim, T(1)));
        beta = ParamTensor<T>(prefix + ".b", Matrix<T>(1, dim));
    }

    Matrix<T> forward(const Matrix<T>& x) {
        fresh_ = true;
        return layer_norm(x, gamma.value.data, beta.value.data, eps, cache_);
    }

    Matrix<T> backward(const Matrix<T>& dy) {
        if (!fresh_) throw std::logic_error(gamma.name + ": backward before forward");
        fresh_ = false;
        return layer_norm_backward(cache_, gamma.value.data, dy, gamma.grad.data, beta.grad.data);
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

// Multi-head attention over full-width projections; heads are contiguous
// column slices of the projected matrices.
template <typename T>
struct MultiHeadAttention {
    std::size_t heads = 1;
    std::size_t head_dim = 0;
    Linear<T> wq, wk, wv, wo;

    Matrix<T> q_, k_, v_, concat_;
    std::vector<AttentionCache<T>> head_caches_;
    bool causal_ = false;
    bool fresh_ = false;

    void init(const std::string& prefix, std::size_t dim, std::size_t n_heads, Rng& rng, T std_dev) {
        heads = n_heads;
        head_dim = dim / n_heads;
        wq.init(prefix + ".q", dim, dim, rng, std_dev);
        wk.init(prefix + ".k", dim, dim, rng, std_dev);
        wv.init(prefix + ".v", dim, dim, rng, std_dev);
        wo.init(prefix + ".o", dim, dim, rng, std_dev);
        head_caches_.resize(heads);
    }

    static Matrix<T> slice(const Matrix<T>& m, std::size_t col0, std::size_t ncols) {
        Matrix<T> s(m.rows, ncols);
        for (std::size_t i = 0; i < m.rows; ++i) {
            const T* src = m.row(i) + col0;
            std::copy(src, src + ncols, s.row(i));
        }
        return s;
    }

    static void unslice(Matrix<T>& dst, const Matrix<T>& s, std::size_t col0) {
        for (std::size_t i = 0; i < s.rows; ++i) {
            std::copy(s.row(i), s.row(i) + s.cols, dst.row(i) + col0);
        }
    }

    Matrix<T> forward(const Matrix<T>& xq, const Matrix<T>& xkv, bool causal) {
        causal_ = causal;
        fresh_ = true;
        q_ = wq.forward(xq);
        k_ = wk.forward(xkv);
        v_ = wv.forward(xkv);
        concat_ = Matrix<T>(q_.rows, q_.cols);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * head_dim;
            Matrix<T> oh = sdpa(slice(q_, c0, head_dim), slice(k_, c0, head_dim),
                                slice(v_, c0, head_dim), causal, head_caches_[h]);
            unslice(concat_, oh, c0);
        }
        return wo.forward(concat_);
    }

    // Returns the query-input gradient; accumulates the key/value-input
    // gradient into dxkv (so cross-attention layers can sum over layers).
    Matrix<T> backward(const Matrix<T>& dy, Matrix<T>& dxkv) {
        if (!fresh_) throw std::logic_error(wq.w.name + ": backward before forward");
        fresh_ = false;
        const Matrix<T> dconcat = wo.backward(dy);
        Matrix<T> dq(q_.rows, q_.cols), dk(k_.rows, k_.cols), dv(v_.rows, v_.cols);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * head_dim;
            Matrix<T> dkh, dvh;
            const Matrix<T> qh = slice(q_, c0, head_dim);
            const Matrix<T> kh = slice(k_, c0, head_dim);
            const Matrix<T> vh = slice(v_, c0, head_dim);
            const Matrix<T> dqh =
                sdpa_backward(qh, kh, vh, head_caches_[h], slice(dconcat, c0, head_dim), dkh, dvh);
            unslice(dq, dqh, c0);
            unslice(dk, dkh, c0);
            unslice(dv, dvh, c0);
        }
        Matrix<T> dxq = wq.backward(dq);
        add_inplace(dxkv, wk.backward(dk));
        add_inplace(dxkv, wv.backward(dv));
        return dxq;
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

template <typename T>
struct FeedForward {
    Linear<T> lin1, lin2;
    Matrix<T> pre_act_;
    bool fresh_ = false;

    void init(const std::string& prefix, std::size_t dim, std::size_t hidden, Rng& rng, T std_dev) {
        lin1.init(prefix + ".1", dim, hidden, rng, std_dev);
        lin2.init(prefix + ".2", hidden, dim, rng, std_dev);
    }

    Matrix<T> forward(const Matrix<T>& x) {
        fresh_ = true;
        pre_act_ = lin1.forward(x);
        return lin2.forward(gelu(pre_act_));
    }

    Matrix<T> backward(const Matrix<T>& dy) {
        if (!fresh_) throw std::logic_error(lin1.w.name + ": backward before forward");
        fresh_ = false;
        const Matrix<T> dh = lin2.backward(dy);
        return lin1.backward(gelu_backward(pre_act_, dh));
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        lin1.collect(out);
        lin2.collect(out);
    }
};

// Pre-norm residual encoder block: x + attn(ln1(x)), then x + ffn(ln2(x)).
template <typename T>
struct EncoderLayer {
    LayerNormModule<T> ln1, ln2;
    MultiHeadAttention<T> attn;
    FeedForward<T> ffn;

    void init(const std::string& prefix, std::size_t dim, std::size_t heads, std::size_t ffn_dim,
              Rng& rng, T std_dev) {
        ln1.init(prefix + ".ln1", dim);
        attn.init(prefix + ".attn", dim, heads, rng, std_dev);
        ln2.init(prefix + ".ln2", dim);
        ffn.init(prefix + ".ffn", dim, ffn_dim, rng, std_dev);
    }

    Matrix<T> forward(const Matrix<T>& x) {
        Matrix<T> a = ln1.forward(x);
        Matrix<T> x1 = x;
        add_inplace(x1, attn.forward(a, a, /*causal=*/false));
        Matrix<T> out = x1;
        add_inplace(out, ffn.forward(ln2.forward(x1)));
        return out;
    }

    Matrix<T> backward(const Matrix<T>& dout) {
        Matrix<T> dx1 = dout;
        add_inplace(dx1, ln2.backward(ffn.backward(dout)));
        Matrix<T> da_kv(dx1.rows, dx1.cols);
        const Matrix<T> da_q = attn.backward(dx1, da_kv);
        add_inplace(da_kv, da_q);  // self-attention: same input feeds q and kv
        Matrix<T> dx = dx1;
        add_inplace(dx, ln1.backward(da_kv));
        return dx;
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        ln1.collect(out);
        attn.collect(out);
        ln2.collect(out);
        ffn.collect(out);
    }
};

// Pre-norm decoder block: causal self-attention, cross-attention over the
// encoder memory, feed-forward.
template <typename T>
struct DecoderLayer {
    LayerNormModule<T> ln1, ln2, ln3;
    MultiHeadAttention<T> self_attn, cross_attn;
    FeedForward<T> ffn;

    void init(const std::string& prefix, std::size_t dim, std::size_t heads, std::size_t ffn_dim,
              Rng& rng, T std_dev) {
        ln1.init(prefix + ".ln1", dim);
        self_attn.init(prefix + ".self", dim, heads, rng, std_dev);
        ln2.init(prefix + ".ln2", dim);
        cross_attn.init(prefix + ".cross", dim, heads, rng, std_dev);
        ln3.init(prefix + ".ln3", dim);
        ffn.init(prefix + ".ffn", dim, ffn_dim, rng, std_dev);
    }

    Matrix<T> forward(const Matrix<T>& x, const Matrix<T>& memory) {
        Matrix<T> a = ln1.forward(x);
        Matrix<T> x1 = x;
        add_inplace(x1, self_attn.forward(a, a, /*causal=*/true));
        Matrix<T> x2 = x1;
        add_inplace(x2, cross_attn.forward(ln2.forward(x1), memory, /*causal=*/false));
        Matrix<T> out = x2;
        add_inplace(out, ffn.forward(ln3.forward(x2)));
        return out;
    }

    // dmemory accumulates the gradient w.r.t. the encoder memory.
    Matrix<T> backward(const Matrix<T>& dout, Matrix<T>& dmemory) {
        Matrix<T> dx2 = dout;
        add_inplace(dx2, ln3.backward(ffn.backward(dout)));
        const Matrix<T> dc_q = cross_attn.backward(dx2, dmemory);
        Matrix<T> dx1 = dx2;
        add_inplace(dx1, ln2.backward(dc_q));
        Matrix<T> da_kv(dx1.rows, dx1.cols);
        const Matrix<T> da_q = self_attn.backward(dx1, da_kv);
        add_inplace(da_kv, da_q);
        Matrix<T> dx = dx1;
        add_inplace(dx, ln1.backward(da_kv));
        return dx;
    }

    void collect(std::vector<ParamTensor<T>*>& out) {
        ln1.collect(out);
        self_attn.collect(out);
        ln2.collect(out);
        cross_attn.collect(out);
        ln3.collect(out);
        ffn.collect(out);
    }
};

// Fixed sinusoidal positional encoding rows.
template <typename T>
Matrix<T> positional_encoding(std::size_t length, std::size_t dim) {
    Matrix<T> pe(length, dim);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < dim; i += 2) {
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            pe(pos, i) = static_cast<T>(std::sin(angle));
            if (i + 1 < dim) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
        }
    }
    return pe;
}

}  // namespace lingo
