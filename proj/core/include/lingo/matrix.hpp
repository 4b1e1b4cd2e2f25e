#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lingo {

// Dense row-major matrix. Element type is float in the training pipeline and
// double in the gradient-check oracles.
template <typename T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    T* row(std::size_t r) { return data.data() + r * cols; }
    const T* row(std::size_t r) const { return data.data() + r * cols; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    static Matrix zeros_like(const Matrix& m) { return Matrix(m.rows, m.cols); }

    bool operator==(const Matrix& other) const {
        return rows == other.rows && cols == other.cols && data == other.data;
    }
};

using MatF = Matrix<float>;
using MatD = Matrix<double>;

[[noreturn]] inline void shape_error(const std::string& op, const std::string& a, const std::string& b) {
    throw std::invalid_argument(op + ": shape mismatch " + a + " vs " + b);
}

template <typename T>
void require_same_shape(const char* op, const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) shape_error(op, a.shape_str(), b.shape_str());
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
    for (T v : m.data) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

template <typename T>
void require_finite(const Matrix<T>& m, const std::string& what) {
    if (!all_finite(m)) throw std::domain_error(what + ": non-finite entries");
}

template <typename T, typename U>
Matrix<T> cast_matrix(const Matrix<U>& m) {
    Matrix<T> out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<T>(m.data[i]);
    return out;
}

}  // namespace lingo
