#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sima/cost.hpp"
#include "sima/errors.hpp"

namespace sima {

// Dense row-major tensor. Rank is the length of `shape`; most of the library
// works with rank-1 and rank-2 tensors.
template <class Real>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<Real> data;

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), Real(0));
    }

    TensorT(std::vector<std::size_t> s, std::vector<Real> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_string());
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    static TensorT zeros(std::vector<std::size_t> s) { return TensorT(std::move(s)); }

    static TensorT full(std::vector<std::size_t> s, Real v) {
        TensorT t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    // 2-D literal, handy in tests: TensorT<double>::from_rows({{1,2},{3,4}}).
    static TensorT from_rows(std::initializer_list<std::initializer_list<Real>> rows_) {
        std::size_t m = rows_.size();
        std::size_t n = m ? rows_.begin()->size() : 0;
        TensorT t({m, n});
        std::size_t i = 0;
        for (const auto& r : rows_) {
            if (r.size() != n) throw ShapeError("ragged row in tensor literal");
            for (Real v : r) t.data[i++] = v;
        }
        return t;
    }

    static TensorT vector_of(std::initializer_list<Real> vals) {
        return TensorT({vals.size()}, std::vector<Real>(vals));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        require_rank2("rows()");
        return shape[0];
    }
    std::size_t cols() const {
        require_rank2("cols()");
        return shape[1];
    }

    Real& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    Real operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    Real& operator[](std::size_t i) { return data[i]; }
    Real operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }

    void require_rank2(const char* who) const {
        if (shape.size() != 2)
            throw ShapeError(std::string(who) + ": expected rank-2 tensor, got " + shape_string());
    }

    template <class Other>
    TensorT<Other> cast() const {
        TensorT<Other> t;
        t.shape = shape;
        t.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<Other>(data[i]);
        return t;
    }
};

// Default precision; flip with the SIMA_REAL32 build option. Correctness
// tests always use TensorT<double> explicitly.
#ifdef SIMA_REAL32
using real = float;
#else
using real = double;
#endif

using Tensor = TensorT<double>;
using DefaultTensor = TensorT<real>;

// c[i][j] = sum_t a[i][t] * b[t][j]; charges m*n*k mul-adds to `cost`.
template <class Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b, CostReport* cost = nullptr) {
    a.require_rank2("matmul lhs");
    b.require_rank2("matmul rhs");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_string() + " x " +
                         b.shape_string());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    TensorT<Real> c({m, n});
    // i-k-j order keeps the inner loop over contiguous rows of b and c.
    for (std::size_t i = 0; i < m; ++i) {
        Real* crow = &c.data[i * n];
        for (std::size_t t = 0; t < k; ++t) {
            const Real aval = a.data[i * k + t];
            const Real* brow = &b.data[t * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
        }
    }
    if (cost) cost->mul_adds += static_cast<std::uint64_t>(m) * n * k;
    return c;
}

template <class Real>
TensorT<Real> transpose(const TensorT<Real>& a) {
    a.require_rank2("transpose");
    const std::size_t m = a.rows(), n = a.cols();
    TensorT<Real> t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t.data[j * m + i] = a.data[i * n + j];
    return t;
}

// Row-wise softmax with max subtraction; charges one exp per entry.
template <class Real>
TensorT<Real> softmax_rows(const TensorT<Real>& a, CostReport* cost = nullptr) {
    a.require_rank2("softmax_rows");
    const std::size_t m = a.rows(), n = a.cols();
    TensorT<Real> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const Real* row = &a.data[i * n];
        Real mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        Real sum = 0;
        Real* orow = &out.data[i * n];
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (std::size_t j = 0; j < n; ++j) orow[j] /= sum;
    }
    if (cost) cost->exp_ops += static_cast<std::uint64_t>(m) * n;
    return out;
}

inline double gelu_scalar(double x) {
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

// Tanh-approximation GELU; each tanh counts as one transcendental.
template <class Real>
TensorT<Real> gelu(const TensorT<Real>& a, CostReport* cost = nullptr) {
    TensorT<Real> out = a;
    for (Real& v : out.data) v = static_cast<Real>(gelu_scalar(static_cast<double>(v)));
    if (cost) cost->exp_ops += out.size();
    return out;
}

template <class Real>
TensorT<Real> relu(const TensorT<Real>& a) {
    TensorT<Real> out = a;
    for (Real& v : out.data) v = std::max(v, Real(0));
    return out;
}

// Per-row standardization followed by affine gain/bias. gain and bias are
// rank-1 of length D. The sqrt here is not an exp-class op and is not counted.
template <class Real>
TensorT<Real> layer_norm(const TensorT<Real>& x, const TensorT<Real>& gain,
                         const TensorT<Real>& bias, Real eps = Real(1e-6)) {
    x.require_rank2("layer_norm");
    const std::size_t n = x.rows(), d = x.cols();
    if (gain.size() != d || bias.size() != d)
        throw ShapeError("layer_norm: gain/bias length must equal column count");
    TensorT<Real> out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const Real* row = &x.data[i * d];
        Real mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= Real(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const Real c = row[j] - mean;
            var += c * c;
        }
        var /= Real(d);
        const Real inv = Real(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j)
            out.data[i * d + j] = (row[j] - mean) * inv * gain.data[j] + bias.data[j];
    }
    return out;
}

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    TensorT<Real> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

template <class Real>
TensorT<Real> scale(const TensorT<Real>& a, Real c) {
    TensorT<Real> out = a;
    for (Real& v : out.data) v *= c;
    return out;
}

// Adds a rank-1 bias (length = cols) to every row.
template <class Real>
TensorT<Real> add_row_bias(const TensorT<Real>& a, const TensorT<Real>& bias) {
    a.require_rank2("add_row_bias");
    if (bias.size() != a.cols())
        throw ShapeError("add_row_bias: bias length must equal column count");
    TensorT<Real> out = a;
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += bias.data[j];
    return out;
}

// Column slice [c0, c1) of a rank-2 tensor.
template <class Real>
TensorT<Real> slice_cols(const TensorT<Real>& a, std::size_t c0, std::size_t c1) {
    a.require_rank2("slice_cols");
    if (c1 > a.cols() || c0 > c1) throw ShapeError("slice_cols: bad column range");
    TensorT<Real> out({a.rows(), c1 - c0});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
    return out;
}

template <class Real>
TensorT<Real> concat_cols(const std::vector<TensorT<Real>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t m = parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        p.require_rank2("concat_cols");
        if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
        total += p.cols();
    }
    TensorT<Real> out({m, total});
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p(i, j);
        off += p.cols();
    }
    return out;
}

template <class Real>
Real max_abs(const TensorT<Real>& a) {
    Real m = 0;
    for (Real v : a.data) m = std::max(m, std::abs(v));
    return m;
}

template <class Real>
Real max_abs_diff(const TensorT<Real>& a, const TensorT<Real>& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff: shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    Real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

} // namespace sima
