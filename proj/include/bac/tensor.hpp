// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bac/error.hpp"

namespace bac {

// Multiply-accumulate tally. Only matrix products are charged; norms,
// activations, softmax and residual adds are bookkept elsewhere.
struct OpCounter {
    std::uint64_t macs = 0;
};

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    friend Matrix operator-(const Matrix& a, const Matrix& b) {
        a.require_same_shape(b, "-");
        Matrix out(a.rows_, a.cols_);
        for (std::size_t i = 0; i < a.data_.size(); ++i) out.data_[i] = a.data_[i] - b.data_[i];
        return out;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    void require_same_shape(const Matrix& o, const char* what) const {
        if (!same_shape(o)) {
            throw DimensionError(std::string("shape mismatch in ") + what + ": " +
                                 std::to_string(rows_) + "x" + std::to_string(cols_) + " vs " +
                                 std::to_string(o.rows_) + "x" + std::to_string(o.cols_));
        }
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// x (n×k) · w (k×m). Accumulation order is fixed: for each output row, the
// inner index runs ascending, so results are reproducible bit for bit.
inline Matrix matmul(const Matrix& x, const Matrix& w, OpCounter* counter = nullptr) {
    if (x.cols() != w.rows()) {
        throw DimensionError("matmul: inner dimensions " + std::to_string(x.cols()) + " and " +
                             std::to_string(w.rows()) + " differ");
    }
    Matrix out(x.rows(), w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double a = x(i, k);
            auto wr = w.row(k);
            for (std::size_t j = 0; j < w.cols(); ++j) o[j] += a * wr[j];
        }
    }
    if (counter) counter->macs += static_cast<std::uint64_t>(x.rows()) * x.cols() * w.cols();
    return out;
}

inline void add_row_bias(Matrix& x, std::span<const double> bias) {
    if (bias.size() != x.cols()) throw DimensionError("bias width mismatch");
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
}

// Row-wise LayerNorm with population variance, gain, zero bias.
inline Matrix layer_norm_rows(const Matrix& x, std::span<const double> gain, double eps) {
    if (gain.size() != x.cols()) throw DimensionError("layer norm gain width mismatch");
    Matrix out(x.rows(), x.cols());
    const double d = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= d;
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        auto o = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) o[j] = gain[j] * (r[j] - mean) * inv;
    }
    return out;
}

// GELU, tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3))), c = sqrt(2/pi).
inline constexpr double kGeluC = 0.7978845608028654;
inline constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

inline double gelu_derivative(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double th = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

inline double frobenius(const Matrix& m) {
    double s = 0.0;
    for (double v : m.flat()) s += v * v;
    return std::sqrt(s);
}

inline double l1_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.flat()) s += std::abs(v);
    return s;
}

inline double max_abs(const Matrix& m) {
    double s = 0.0;
    for (double v : m.flat()) s = std::max(s, std::abs(v));
    return s;
}

} // namespace bac
