#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "ficabu/errors.hpp"

namespace ficabu {

/// Dense row-major f32 tensor. The universal currency of forward, backward
/// and dampening; values are expected to stay finite after every public op.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::vector<float> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::uint32_t> dims)
        : shape(std::move(dims)), data(numel_of(shape), 0.0f) {}

    Tensor(std::vector<std::uint32_t> dims, std::vector<float> values)
        : shape(std::move(dims)), data(std::move(values)) {
        if (data.size() != numel_of(shape)) {
            throw DimensionError("tensor data length does not match shape product");
        }
    }

    static std::size_t numel_of(const std::vector<std::uint32_t>& dims) {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::uint32_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::uint32_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    float& operator[](std::size_t i) { return data[i]; }
    float operator[](std::size_t i) const { return data[i]; }

    float& at2(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    float at2(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

inline Tensor identity(std::uint32_t n) {
    Tensor t({n, n});
    for (std::uint32_t i = 0; i < n; ++i) t.at2(i, i) = 1.0f;
    return t;
}

inline void check_finite(const Tensor& t, const char* where) {
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string("non-finite value produced in ") + where);
        }
    }
}

/// c[i][j] = sum_k a[i][k]*b[k][j], k strictly ascending. The fixed summation
/// order is the bit-reproducibility contract every downstream equivalence
/// check (partial inference, checkpoint consistency) relies on.
inline Tensor gemm(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2) {
        throw DimensionError("gemm expects rank-2 operands, got " + a.shape_str() + " and " +
                             b.shape_str());
    }
    if (a.shape[1] != b.shape[0]) {
        throw DimensionError("gemm inner dimensions differ: " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const std::size_t m = a.shape[0], k_dim = a.shape[1], n = b.shape[1];
    Tensor c({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(n)});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::size_t k = 0; k < k_dim; ++k) {
                acc += a.data[i * k_dim + k] * b.data[k * n + j];
            }
            c.data[i * n + j] = acc;
        }
    }
    check_finite(c, "gemm");
    return c;
}

/// Symmetric per-tensor INT8 value: real = int * scale, scale > 0.
struct QuantizedTensor {
    std::vector<std::uint32_t> shape;
    std::vector<std::int8_t> data;
    float scale = 1.0f;

    std::size_t numel() const { return data.size(); }
};

/// scale = max|x|/127 (1 for an all-zero tensor); round half to even,
/// clamp to [-127, 127].
inline QuantizedTensor quantize_symmetric(const Tensor& x) {
    if (x.numel() == 0) throw EmptyInputError("quantize_symmetric: empty tensor");
    float maxabs = 0.0f;
    for (float v : x.data) maxabs = std::max(maxabs, std::fabs(v));
    QuantizedTensor q;
    q.shape = x.shape;
    q.scale = maxabs > 0.0f ? maxabs / 127.0f : 1.0f;
    q.data.resize(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        // Ratio in f64 so half-integer ties resolve by the value, not by
        // division rounding noise.
        double scaled = static_cast<double>(x.data[i]) / static_cast<double>(q.scale);
        int r = static_cast<int>(std::nearbyint(scaled));
        if (r > 127) r = 127;
        if (r < -127) r = -127;
        q.data[i] = static_cast<std::int8_t>(r);
    }
    return q;
}

inline Tensor dequantize(const QuantizedTensor& q) {
    Tensor t(q.shape);
    for (std::size_t i = 0; i < q.numel(); ++i) {
        t.data[i] = static_cast<float>(q.data[i]) * q.scale;
    }
    check_finite(t, "dequantize");
    return t;
}

}  // namespace ficabu
