#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sima/cost.hpp"
#include "sima/rng.hpp"
#include "sima/tensor.hpp"

namespace sima {

enum class AttentionVariant { SimA, MSA, XCA, EluLinear };

inline std::string to_string(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::SimA: return "sima";
        case AttentionVariant::MSA: return "msa";
        case AttentionVariant::XCA: return "xca";
        default: return "elu";
    }
}

// Which norm divides each Q/K channel. L1 is the standard mechanism; L2 and
// None exist for the ablation axis.
enum class Normalization { L1, L2, None };

struct AttentionConfig {
    int dim = 64;
    int heads = 8;
    AttentionVariant variant = AttentionVariant::SimA;
    OrderingPolicy ordering = OrderingPolicy::Auto;
    double norm_eps = 1e-6;
    bool qkv_bias = true;
    Normalization normalization = Normalization::L1;

    int head_dim() const { return dim / heads; }

    void validate() const {
        if (dim <= 0 || heads <= 0 || dim % heads != 0)
            throw ConfigError("attention config: dim must be positive and divisible by heads (dim=" +
                              std::to_string(dim) + ", heads=" + std::to_string(heads) + ")");
        if (norm_eps <= 0) throw ConfigError("attention config: norm_eps must be > 0");
    }
};

template <class Real>
struct AttentionWeightsT {
    TensorT<Real> w_qkv;  // D x 3D fused projection
    TensorT<Real> b_qkv;  // 3D (all zero when qkv_bias is false)
    TensorT<Real> w_proj; // D x D
    TensorT<Real> b_proj; // D

    static AttentionWeightsT random(const AttentionConfig& cfg, Rng& rng, double sigma = 0.02) {
        cfg.validate();
        const auto D = static_cast<std::size_t>(cfg.dim);
        AttentionWeightsT w;
        w.w_qkv = rng.trunc_normal_tensor<Real>({D, 3 * D}, sigma);
        w.b_qkv = cfg.qkv_bias ? rng.trunc_normal_tensor<Real>({3 * D}, sigma)
                               : TensorT<Real>::zeros({3 * D});
        w.w_proj = rng.trunc_normal_tensor<Real>({D, D}, sigma);
        w.b_proj = TensorT<Real>::zeros({D});
        return w;
    }
};

using AttentionWeights = AttentionWeightsT<double>;

// Divides each column by max(sum_n |m[n][c]|, eps). Zero columns stay zero.
template <class Real>
TensorT<Real> l1_normalize_columns(const TensorT<Real>& m, Real eps) {
    m.require_rank2("l1_normalize_columns");
    if (eps <= 0) throw ConfigError("l1_normalize_columns: eps must be > 0");
    const std::size_t n = m.rows(), c = m.cols();
    TensorT<Real> out = m;
    for (std::size_t j = 0; j < c; ++j) {
        Real s = 0;
        for (std::size_t i = 0; i < n; ++i) s += std::abs(m.data[i * c + j]);
        const Real denom = std::max(s, eps);
        for (std::size_t i = 0; i < n; ++i) out.data[i * c + j] /= denom;
    }
    return out;
}

template <class Real>
TensorT<Real> l2_normalize_columns(const TensorT<Real>& m, Real eps) {
    m.require_rank2("l2_normalize_columns");
    if (eps <= 0) throw ConfigError("l2_normalize_columns: eps must be > 0");
    const std::size_t n = m.rows(), c = m.cols();
    TensorT<Real> out = m;
    for (std::size_t j = 0; j < c; ++j) {
        Real s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const Real v = m.data[i * c + j];
            s += v * v;
        }
        const Real denom = std::max(std::sqrt(s), eps);
        for (std::size_t i = 0; i < n; ++i) out.data[i * c + j] /= denom;
    }
    return out;
}

template <class Real>
TensorT<Real> normalize_columns(const TensorT<Real>& m, Normalization norm, Real eps) {
    switch (norm) {
        case Normalization::L1: return l1_normalize_columns(m, eps);
        case Normalization::L2: return l2_normalize_columns(m, eps);
        default: return m;
    }
}

// TokensFirst iff N < per-head width; ties go to ChannelsFirst.
inline Ordering choose_ordering(std::size_t n_tokens, std::size_t d_head) {
    return n_tokens < d_head ? Ordering::TokensFirst : Ordering::ChannelsFirst;
}

inline Ordering resolve_ordering(OrderingPolicy policy, std::size_t n_tokens, std::size_t d_head) {
    switch (policy) {
        case OrderingPolicy::TokensFirst: return Ordering::TokensFirst;
        case OrderingPolicy::ChannelsFirst: return Ordering::ChannelsFirst;
        default: return choose_ordering(n_tokens, d_head);
    }
}

// O = Qhat Khat^T V with per-channel normalization of Q and K. No softmax,
// no exp. Both orderings are mathematically identical.
template <class Real>
TensorT<Real> sima_head_forward(const TensorT<Real>& q, const TensorT<Real>& k,
                                const TensorT<Real>& v, OrderingPolicy policy, Real eps,
                                CostReport* cost = nullptr,
                                Normalization norm = Normalization::L1) {
    const TensorT<Real> qh = normalize_columns(q, norm, eps);
    const TensorT<Real> kh = normalize_columns(k, norm, eps);
    const Ordering ord = resolve_ordering(policy, q.rows(), q.cols());
    if (cost) cost->ordering_used = ord;
    if (ord == Ordering::TokensFirst) return matmul(matmul(qh, transpose(kh), cost), v, cost);
    return matmul(qh, matmul(transpose(kh), v, cost), cost);
}

// Vanilla attention head: A = softmax_rows(Q K^T / sqrt(d)), O = A V.
template <class Real>
TensorT<Real> msa_head_forward(const TensorT<Real>& q, const TensorT<Real>& k,
                               const TensorT<Real>& v, CostReport* cost = nullptr) {
    const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(q.cols()));
    TensorT<Real> scores = matmul(q, transpose(k), cost);
    for (Real& s : scores.data) s *= inv_sqrt_d;
    const TensorT<Real> a = softmax_rows(scores, cost);
    if (cost) cost->ordering_used = Ordering::TokensFirst;
    return matmul(a, v, cost);
}

// Cross-covariance head: A = column-softmax(K^T Q) over channels, O = V A.
template <class Real>
TensorT<Real> xca_head_forward(const TensorT<Real>& q, const TensorT<Real>& k,
                               const TensorT<Real>& v, CostReport* cost = nullptr) {
    const TensorT<Real> scores = matmul(transpose(k), q, cost); // d x d
    // Column softmax == row softmax of the transpose.
    const TensorT<Real> a = transpose(softmax_rows(transpose(scores), cost));
    if (cost) cost->ordering_used = Ordering::ChannelsFirst;
    return matmul(v, a, cost);
}

// phi(x) = 1 + elu(x); strictly positive. One exp per negative element.
template <class Real>
TensorT<Real> elu_feature_map(const TensorT<Real>& a, CostReport* cost = nullptr) {
    TensorT<Real> out = a;
    std::uint64_t negatives = 0;
    for (Real& v : out.data) {
        if (v < Real(0)) {
            v = std::exp(v); // 1 + (exp(x) - 1)
            ++negatives;
        } else {
            v += Real(1);
        }
    }
    if (cost) cost->exp_ops += negatives;
    return out;
}

// Linear attention with kernel phi(x) = 1 + elu(x) and row-stochastic
// normalization: O[n] = phiQ[n] (phiK^T V) / (phiQ[n] . phiK^T 1).
// The denominator is computed with plain loops so the matmul counter reflects
// only the three-matrix product shared with the other variants.
template <class Real>
TensorT<Real> elu_linear_head_forward(const TensorT<Real>& q, const TensorT<Real>& k,
                                      const TensorT<Real>& v, OrderingPolicy policy,
                                      CostReport* cost = nullptr) {
    const std::size_t n = q.rows(), d = q.cols();
    const TensorT<Real> fq = elu_feature_map(q, cost);
    const TensorT<Real> fk = elu_feature_map(k, cost);
    const Ordering ord = resolve_ordering(policy, n, d);
    if (cost) cost->ordering_used = ord;

    TensorT<Real> numer;
    std::vector<Real> denom(n, Real(0));
    if (ord == Ordering::TokensFirst) {
        const TensorT<Real> s = matmul(fq, transpose(fk), cost); // N x N
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) denom[i] += s(i, j);
        numer = matmul(s, v, cost);
    } else {
        numer = matmul(fq, matmul(transpose(fk), v, cost), cost);
        std::vector<Real> ksum(d, Real(0)); // phiK^T 1
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) ksum[j] += fk(i, j);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) denom[i] += fq(i, j) * ksum[j];
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) numer(i, j) /= denom[i];
    return numer;
}

template <class Real>
TensorT<Real> head_forward(AttentionVariant variant, const TensorT<Real>& q,
                           const TensorT<Real>& k, const TensorT<Real>& v,
                           OrderingPolicy policy, Real eps, CostReport* cost = nullptr,
                           Normalization norm = Normalization::L1) {
    switch (variant) {
        case AttentionVariant::SimA: return sima_head_forward(q, k, v, policy, eps, cost, norm);
        case AttentionVariant::MSA: return msa_head_forward(q, k, v, cost);
        case AttentionVariant::XCA: return xca_head_forward(q, k, v, cost);
        default: return elu_linear_head_forward(q, k, v, policy, cost);
    }
}

// Full block: fused QKV projection, per-head attention, concat, output
// projection. Channel normalization happens inside each head, which equals
// whole-matrix normalization because it is columnwise.
template <class Real>
TensorT<Real> attention_forward(const TensorT<Real>& x, const AttentionConfig& cfg,
                                const AttentionWeightsT<Real>& w, CostReport* cost = nullptr) {
    cfg.validate();
    x.require_rank2("attention_forward");
    const auto D = static_cast<std::size_t>(cfg.dim);
    if (x.cols() != D)
        throw ShapeError("attention_forward: input has " + std::to_string(x.cols()) +
                         " columns, config expects " + std::to_string(D));
    const std::size_t H = static_cast<std::size_t>(cfg.heads), d = D / H;

    const TensorT<Real> qkv = add_row_bias(matmul(x, w.w_qkv, cost), w.b_qkv);
    const TensorT<Real> q = slice_cols(qkv, 0, D);
    const TensorT<Real> k = slice_cols(qkv, D, 2 * D);
    const TensorT<Real> v = slice_cols(qkv, 2 * D, 3 * D);

    std::vector<TensorT<Real>> outs;
    outs.reserve(H);
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t c0 = h * d, c1 = (h + 1) * d;
        outs.push_back(head_forward(cfg.variant, slice_cols(q, c0, c1), slice_cols(k, c0, c1),
                                    slice_cols(v, c0, c1), cfg.ordering,
                                    static_cast<Real>(cfg.norm_eps), cost, cfg.normalization));
    }
    return add_row_bias(matmul(concat_cols(outs), w.w_proj, cost), w.b_proj);
}

// Closed-form exp counts. `instrumented` is what the counter must show after
// one forward; `nominal` is the whole-matrix headline convention (differs
// from instrumented only for XCA, where the headline is H*D^2 while each head
// softmaxes a (D/H)x(D/H) matrix). For EluLinear the true count is
// data-dependent; both fields carry the upper bound 2*N*D.
struct ExpCount {
    std::uint64_t instrumented = 0;
    std::uint64_t nominal = 0;
};

inline ExpCount count_exp_ops(AttentionVariant variant, std::uint64_t n, std::uint64_t d_model,
                              std::uint64_t h) {
    if (n == 0 || d_model == 0 || h == 0 || d_model % h != 0)
        throw ConfigError("count_exp_ops: need positive N, D, H with H | D");
    const std::uint64_t d = d_model / h;
    switch (variant) {
        case AttentionVariant::MSA: return {h * n * n, h * n * n};
        case AttentionVariant::XCA: return {h * d * d, h * d_model * d_model};
        case AttentionVariant::SimA: return {0, 0};
        default: return {2 * n * d_model, 2 * n * d_model};
    }
}

// Predicted mul-adds of the three-matrix product only (projections excluded;
// they are identical across variants). MSA always has TokensFirst structure,
// XCA always ChannelsFirst; SimA and EluLinear follow `ordering`.
inline std::uint64_t flops_estimate(AttentionVariant variant, std::uint64_t n,
                                    std::uint64_t d_model, std::uint64_t h, Ordering ordering) {
    if (n == 0 || d_model == 0 || h == 0 || d_model % h != 0)
        throw ConfigError("flops_estimate: need positive N, D, H with H | D");
    const std::uint64_t d = d_model / h;
    if (variant == AttentionVariant::MSA) ordering = Ordering::TokensFirst;
    if (variant == AttentionVariant::XCA) ordering = Ordering::ChannelsFirst;
    const std::uint64_t per_head =
        ordering == Ordering::TokensFirst ? 2 * n * n * d : 2 * n * d * d;
    return h * per_head;
}

// CosFormer's 2-D cosine re-weighting expands one Q.K dot product into four
// regrouped products; SimA needs a single one.
inline int cosformer_flops_factor() { return 4; }

inline std::array<std::string_view, 4> cosformer_term_labels() {
    return {"cos(i)cos(m) . cos(j)cos(n)", "cos(i)sin(m) . cos(j)sin(n)",
            "sin(i)cos(m) . sin(j)cos(n)", "sin(i)sin(m) . sin(j)sin(n)"};
}

} // namespace sima
