#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lingo/matrix.hpp"

namespace lingo {

// Named parameter with gradient buffer. Entries where freeze_mask is zero
// keep their exact pre-step values through any optimizer update.
template <typename T>
struct ParamTensor {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
    bool trainable = true;
    std::optional<Matrix<T>> freeze_mask;  // 1 = trainable entry, 0 = frozen entry

    ParamTensor() = default;
    ParamTensor(std::string n, Matrix<T> v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix<T>::zeros_like(value)) {}

    void zero_grad() { grad.fill(T(0)); }

    void ensure_grad_shape() {
        if (!grad.same_shape(value)) grad = Matrix<T>::zeros_like(value);
    }
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay and bias correction. Moments are keyed by
// parameter name; rows may grow between steps (embedding tables gain rows when
// a language is registered) in which case new rows start with zero moments.
template <typename T>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    AdamWConfig& config() { return cfg_; }
    const AdamWConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return step_; }

    void set_lr(double lr) { cfg_.lr = lr; }

    void step(const std::vector<ParamTensor<T>*>& params) {
        ++step_;
        const T b1 = static_cast<T>(cfg_.beta1);
        const T b2 = static_cast<T>(cfg_.beta2);
        const T bc1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(step_)));
        const T bc2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(step_)));
        const T lr = static_cast<T>(cfg_.lr);
        const T eps = static_cast<T>(cfg_.eps);
        const T wd = static_cast<T>(cfg_.weight_decay);
        for (ParamTensor<T>* p : params) {
            if (!p->trainable) continue;
            if (!p->grad.same_shape(p->value))
                shape_error("adamw grad " + p->name, p->grad.shape_str(), p->value.shape_str());
            for (T g : p->grad.data) {
                if (!std::isfinite(static_cast<double>(g)))
                    throw std::domain_error("adamw_step: non-finite gradient in " + p->name);
            }
            Moments& m = grow_moments(p->name, p->value);
            const Matrix<T>* mask = p->freeze_mask ? &*p->freeze_mask : nullptr;
            if (mask && !mask->same_shape(p->value))
                shape_error("freeze_mask " + p->name, mask->shape_str(), p->value.shape_str());
            for (std::size_t i = 0; i < p->value.data.size(); ++i) {
                if (mask && mask->data[i] == T(0)) continue;
                const T g = p->grad.data[i];
                T& m1 = m.first.data[i];
                T& m2 = m.second.data[i];
                m1 = b1 * m1 + (T(1) - b1) * g;
                m2 = b2 * m2 + (T(1) - b2) * g * g;
                const T mhat = m1 / bc1;
                const T vhat = m2 / bc2;
                T& w = p->value.data[i];
                w -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w);
            }
        }
    }

private:
    struct Moments {
        Matrix<T> first;
        Matrix<T> second;
    };

    Moments& grow_moments(const std::string& name, const Matrix<T>& value) {
        Moments& m = moments_[name];
        if (!m.first.same_shape(value)) {
            Matrix<T> f(value.rows, value.cols), s(value.rows, value.cols);
            if (m.first.cols == value.cols && m.first.rows < value.rows) {
                // grown table: carry moments for existing rows
                for (std::size_t i = 0; i < m.first.data.size(); ++i) {
                    f.data[i] = m.first.data[i];
                    s.data[i] = m.second.data[i];
                }
            }
            m.first = std::move(f);
            m.second = std::move(s);
        }
        return m;
    }

    AdamWConfig cfg_;
    std::int64_t step_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

// Reduce-on-plateau annealing: the rate halves whenever relative validation
// improvement falls below the threshold, and never increases.
struct NewBobScheduler {
    double current_lr = 1e-3;
    double improvement_threshold = 0.0025;  // 0.25 %
    double anneal_factor = 0.5;
    int patience = 0;

    double best_metric = std::numeric_limits<double>::infinity();
    bool has_best = false;
    int bad_streak = 0;

    // Feeds one validation metric (lower is better); returns the new lr.
    double update(double metric) {
        if (!std::isfinite(metric)) throw std::domain_error("newbob_update: non-finite metric");
        if (!has_best) {
            has_best = true;
            best_metric = metric;
            return current_lr;
        }
        const double denom = std::max(std::abs(best_metric), 1e-12);
        const double improvement = (best_metric - metric) / denom;
        if (improvement >= improvement_threshold) {
            bad_streak = 0;
        } else {
            ++bad_streak;
            if (bad_streak > patience) {
                current_lr *= anneal_factor;
                bad_streak = 0;
            }
        }
        best_metric = std::min(best_metric, metric);
        return current_lr;
    }
};

}  // namespace lingo
