// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prunelens/errors.hpp"

namespace prunelens {

inline constexpr float kRmsNormEps = 1e-5f;

/// Dense row-major float32 array. Operations return fresh tensors.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(element_count(shape_), 0.0f) {}

    Tensor(std::vector<std::size_t> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (element_count(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string());
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
        return t;
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const { return shape_.empty() ? 0 : shape_.front(); }
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
    }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

namespace kernels {

// out[n x o] = a[n x k] * w[k x o], dot products accumulated in double.
inline void gemm(const float* a, std::size_t n, std::size_t k, const float* w, std::size_t o,
                 float* out) {
    std::vector<double> acc(o);
    for (std::size_t r = 0; r < n; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a + r * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const float* wrow = w + p * o;
            for (std::size_t j = 0; j < o; ++j) acc[j] += av * static_cast<double>(wrow[j]);
        }
        float* orow = out + r * o;
        for (std::size_t j = 0; j < o; ++j) orow[j] = static_cast<float>(acc[j]);
    }
}

inline void softmax_inplace(std::span<float> x) {
    if (x.empty()) return;
    const float mx = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (float& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    const double inv = 1.0 / sum;
    for (float& v : x) v = static_cast<float>(v * inv);
}

inline void rmsnorm_row(std::span<const float> x, std::span<const float> gain, std::span<float> out) {
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * v;
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kRmsNormEps);
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = static_cast<float>(x[i] * scale * gain[i]);
}

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

// Rotates consecutive pairs (2p, 2p+1) by position * base^(-2p/dim).
inline void rope_row(std::span<float> v, std::size_t position, double base) {
    const std::size_t dim = v.size();
    for (std::size_t p = 0; p + 1 < dim; p += 2) {
        const double theta = static_cast<double>(position) *
                             std::pow(base, -static_cast<double>(p) / static_cast<double>(dim));
        const double c = std::cos(theta), s = std::sin(theta);
        const double x0 = v[p], x1 = v[p + 1];
        v[p] = static_cast<float>(x0 * c - x1 * s);
        v[p + 1] = static_cast<float>(x0 * s + x1 * c);
    }
}

} // namespace kernels

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
    }
    Tensor c({a.rows(), b.cols()});
    kernels::gemm(a.data().data(), a.rows(), a.cols(), b.data().data(), b.cols(), c.data().data());
    return c;
}

inline Tensor softmax_rows(const Tensor& x) {
    Tensor out = x;
    const std::size_t n = out.rows();
    for (std::size_t r = 0; r < n; ++r) kernels::softmax_inplace(out.row(r));
    return out;
}

/// Row-wise RMS normalisation over the last dimension.
inline Tensor rmsnorm(const Tensor& x, const Tensor& gain) {
    if (gain.size() != x.cols()) {
        throw ShapeError("rmsnorm: gain " + gain.shape_string() + " does not match " + x.shape_string());
    }
    Tensor out(x.shape());
    const std::size_t rows = x.size() / x.cols();
    for (std::size_t r = 0; r < rows; ++r)
        kernels::rmsnorm_row(x.row(r), gain.data(), out.row(r));
    return out;
}

inline Tensor silu(const Tensor& x) {
    Tensor out = x;
    for (float& v : out.data()) v = kernels::silu(v);
    return out;
}

/// Applies rotary embedding to each row of `x` (tokens x head_dim); row r sits at
/// absolute position `start_position + r`.
inline Tensor rope(const Tensor& x, std::size_t start_position, double base = 10000.0) {
    if (x.cols() % 2 != 0) throw ShapeError("rope: head dimension must be even, got " + x.shape_string());
    Tensor out = x;
    const std::size_t rows = x.size() / x.cols();
    for (std::size_t r = 0; r < rows; ++r) kernels::rope_row(out.row(r), start_position + r, base);
    return out;
}

} // namespace prunelens
