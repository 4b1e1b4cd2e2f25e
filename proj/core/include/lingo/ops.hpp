#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lingo/matrix.hpp"

// Dense forward primitives and their backward companions. Each backward takes
// whatever the forward produced (outputs or cached inputs) so a fixed
// architecture can run reverse-mode by calling them in reverse order.
namespace lingo {

// ---------------------------------------------------------------- matmul

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.rows) shape_error("matmul", a.shape_str(), b.shape_str());
    Matrix<T> c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const T av = arow[k];
            if (av == T(0)) continue;
            const T* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// a^T * b
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows != b.rows) shape_error("matmul_tn", a.shape_str(), b.shape_str());
    Matrix<T> c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// a * b^T
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.cols) shape_error("matmul_nt", a.shape_str(), b.shape_str());
    Matrix<T> c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const T* brow = b.row(j);
            T acc = T(0);
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
    return c;
}

// ---------------------------------------------------------------- add

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
    require_same_shape("add", a, b);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
void add_row_inplace(Matrix<T>& a, const std::vector<T>& bias) {
    if (a.cols != bias.size())
        shape_error("add_row", a.shape_str(), "1x" + std::to_string(bias.size()));
    for (std::size_t i = 0; i < a.rows; ++i) {
        T* rowp = a.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) rowp[j] += bias[j];
    }
}

template <typename T>
void scale_inplace(Matrix<T>& a, T s) {
    for (T& v : a.data) v *= s;
}

// ---------------------------------------------------------------- softmax

// Row-wise stable softmax.
template <typename T>
Matrix<T> row_softmax(const Matrix<T>& x) {
    Matrix<T> p(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const T* xi = x.row(i);
        T* pi = p.row(i);
        T m = xi[0];
        for (std::size_t j = 1; j < x.cols; ++j) m = std::max(m, xi[j]);
        T z = T(0);
        for (std::size_t j = 0; j < x.cols; ++j) {
            pi[j] = std::exp(xi[j] - m);
            z += pi[j];
        }
        const T inv = T(1) / z;
        for (std::size_t j = 0; j < x.cols; ++j) pi[j] *= inv;
    }
    return p;
}

// Given p = row_softmax(s) and dL/dp, returns dL/ds.
template <typename T>
Matrix<T> row_softmax_backward(const Matrix<T>& p, const Matrix<T>& dp) {
    require_same_shape("softmax_backward", p, dp);
    Matrix<T> ds(p.rows, p.cols);
    for (std::size_t i = 0; i < p.rows; ++i) {
        const T* pi = p.row(i);
        const T* di = dp.row(i);
        T dot = T(0);
        for (std::size_t j = 0; j < p.cols; ++j) dot += pi[j] * di[j];
        T* oi = ds.row(i);
        for (std::size_t j = 0; j < p.cols; ++j) oi[j] = pi[j] * (di[j] - dot);
    }
    return ds;
}

template <typename T>
std::vector<T> log_softmax_row(const T* x, std::size_t n) {
    T m = x[0];
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, x[j]);
    T z = T(0);
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - m);
    const T lz = std::log(z) + m;
    std::vector<T> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = x[j] - lz;
    return out;
}

// ---------------------------------------------------------------- layer norm

template <typename T>
struct LayerNormCache {
    Matrix<T> normalized;      // (x - mean) * inv_std
    std::vector<T> inv_std;    // per row
};

// Row-wise layer norm with affine output: y = normalized * gamma + beta.
// A constant row normalizes to zero (biased variance, epsilon in the root).
template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const std::vector<T>& gamma, const std::vector<T>& beta,
                     T eps, LayerNormCache<T>& cache) {
    if (x.cols != gamma.size() || x.cols != beta.size())
        shape_error("layer_norm", x.shape_str(), "1x" + std::to_string(gamma.size()));
    Matrix<T> y(x.rows, x.cols);
    cache.normalized = Matrix<T>(x.rows, x.cols);
    cache.inv_std.assign(x.rows, T(0));
    const T n = static_cast<T>(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const T* xi = x.row(i);
        T mean = T(0);
        for (std::size_t j = 0; j < x.cols; ++j) mean += xi[j];
        mean /= n;
        T var = T(0);
        for (std::size_t j = 0; j < x.cols; ++j) {
            const T d = xi[j] - mean;
            var += d * d;
        }
        var /= n;
        const T inv = T(1) / std::sqrt(var + eps);
        cache.inv_std[i] = inv;
        T* ni = cache.normalized.row(i);
        T* yi = y.row(i);
        for (std::size_t j = 0; j < x.cols; ++j) {
            ni[j] = (xi[j] - mean) * inv;
            yi[j] = ni[j] * gamma[j] + beta[j];
        }
    }
    return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const LayerNormCache<T>& cache, const std::vector<T>& gamma,
                              const Matrix<T>& dy, std::vector<T>& dgamma, std::vector<T>& dbeta) {
    const Matrix<T>& nm = cache.normalized;
    require_same_shape("layer_norm_backward", nm, dy);
    Matrix<T> dx(dy.rows, dy.cols);
    const T n = static_cast<T>(dy.cols);
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const T* di = dy.row(i);
        const T* ni = nm.row(i);
        T sum_dn = T(0), sum_dn_n = T(0);
        for (std::size_t j = 0; j < dy.cols; ++j) {
            const T dn = di[j] * gamma[j];
            sum_dn += dn;
            sum_dn_n += dn * ni[j];
            dgamma[j] += di[j] * ni[j];
            dbeta[j] += di[j];
        }
        const T inv = cache.inv_std[i];
        T* oi = dx.row(i);
        for (std::size_t j = 0; j < dy.cols; ++j) {
            const T dn = di[j] * gamma[j];
            oi[j] = inv * (dn - sum_dn / n - ni[j] * (sum_dn_n / n));
        }
    }
    return dx;
}

// ---------------------------------------------------------------- gelu

// Exact erf formulation: x * Phi(x).
template <typename T>
Matrix<T> gelu(const Matrix<T>& x) {
    Matrix<T> y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T v = x.data[i];
        y.data[i] = v * T(0.5) * (T(1) + std::erf(v * T(0.7071067811865476)));
    }
    return y;
}

template <typename T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
    require_same_shape("gelu_backward", x, dy);
    Matrix<T> dx(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T v = x.data[i];
        const T phi = T(0.5) * (T(1) + std::erf(v * T(0.7071067811865476)));
        const T pdf = std::exp(-T(0.5) * v * v) * T(0.3989422804014327);
        dx.data[i] = dy.data[i] * (phi + v * pdf);
    }
    return dx;
}

// ------------------------------------------------- scaled dot-product attention

template <typename T>
struct AttentionCache {
    Matrix<T> probs;  // softmax(q k^T / sqrt(d) + mask)
};

// q: (Tq x d), k,v: (Tk x d). causal masks out key positions > query position.
template <typename T>
Matrix<T> sdpa(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, bool causal,
               AttentionCache<T>& cache) {
    if (q.cols != k.cols) shape_error("sdpa q/k", q.shape_str(), k.shape_str());
    if (k.rows != v.rows) shape_error("sdpa k/v", k.shape_str(), v.shape_str());
    Matrix<T> scores = matmul_nt(q, k);
    const T scale = T(1) / std::sqrt(static_cast<T>(q.cols));
    scale_inplace(scores, scale);
    if (causal) {
        for (std::size_t i = 0; i < scores.rows; ++i) {
            T* srow = scores.row(i);
            for (std::size_t j = i + 1; j < scores.cols; ++j) srow[j] = T(-1e30);
        }
    }
    cache.probs = row_softmax(scores);
    return matmul(cache.probs, v);
}

// Returns dq; writes dk, dv.
template <typename T>
Matrix<T> sdpa_backward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                        const AttentionCache<T>& cache, const Matrix<T>& dout, Matrix<T>& dk,
                        Matrix<T>& dv) {
    const Matrix<T>& p = cache.probs;
    Matrix<T> dp = matmul_nt(dout, v);           // (Tq x Tk)
    dv = matmul_tn(p, dout);                     // (Tk x d)
    Matrix<T> ds = row_softmax_backward(p, dp);  // masked entries have p=0 -> ds=0
    const T scale = T(1) / std::sqrt(static_cast<T>(q.cols));
    scale_inplace(ds, scale);
    Matrix<T> dq = matmul(ds, k);
    dk = matmul_tn(ds, q);
    return dq;
}

// ---------------------------------------------------------------- cross entropy

// Mean token-level cross entropy over all rows of logits; writes dlogits
// (already scaled by 1/rows). Targets index columns.
template <typename T>
T softmax_cross_entropy(const Matrix<T>& logits, std::span<const int> targets, Matrix<T>& dlogits) {
    if (logits.rows != targets.size())
        shape_error("cross_entropy", logits.shape_str(),
                    std::to_string(targets.size()) + " targets");
    dlogits = Matrix<T>(logits.rows, logits.cols);
    T total = T(0);
    const T inv_n = T(1) / static_cast<T>(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols)
            throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                                    " outside logits " + logits.shape_str());
        const std::vector<T> lp = log_softmax_row(logits.row(i), logits.cols);
        total -= lp[static_cast<std::size_t>(t)];
        T* di = dlogits.row(i);
        for (std::size_t j = 0; j < logits.cols; ++j) di[j] = std::exp(lp[j]) * inv_n;
        di[static_cast<std::size_t>(t)] -= inv_n;
    }
    return total * inv_n;
}

}  // namespace lingo
