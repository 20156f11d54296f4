#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sima/attention.hpp"
#include "sima/autodiff.hpp"
#include "sima/model.hpp"
#include "sima/rng.hpp"

namespace sima {

struct PropertyResult {
    std::string name;
    bool passed = true;
    double max_error = 0.0;
    std::string detail; // failing seed/shape when not passed
};

namespace checks {

struct Options {
    int trials = 5;
    std::uint64_t seed = 0;
    std::vector<int> sizes = {4, 8, 16, 32};
};

inline void note_failure(PropertyResult& r, std::uint64_t seed, std::size_t n, std::size_t d) {
    if (r.passed) return;
    if (!r.detail.empty()) return;
    r.detail = "seed=" + std::to_string(seed) + " N=" + std::to_string(n) +
               " d=" + std::to_string(d);
}

// (Qhat Khat^T) V == Qhat (Khat^T V)
inline PropertyResult ordering_equivalence(const Options& opt) {
    PropertyResult r{"ordering-equivalence"};
    for (int t = 0; t < opt.trials; ++t) {
        const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(t);
        Rng rng(seed);
        for (int n : opt.sizes)
            for (int d : opt.sizes) {
                const auto N = std::size_t(n), D = std::size_t(d);
                CostReport c;
                const Tensor q = rng.normal_tensor({N, D});
                const Tensor k = rng.normal_tensor({N, D});
                const Tensor v = rng.normal_tensor({N, D});
                const Tensor a =
                    sima_head_forward(q, k, v, OrderingPolicy::TokensFirst, 1e-6, &c);
                const Tensor b =
                    sima_head_forward(q, k, v, OrderingPolicy::ChannelsFirst, 1e-6, &c);
                r.max_error = std::max(r.max_error, max_abs_diff(a, b));
                if (r.max_error >= 1e-10) r.passed = false;
                note_failure(r, seed, N, D);
            }
    }
    return r;
}

// Entries of Qhat Khat^T lie in [-d, d]; the single-nonzero-row construction
// attains |entry| = d.
inline PropertyResult attention_bound(const Options& opt) {
    PropertyResult r{"attention-bound"};
    for (int t = 0; t < opt.trials; ++t) {
        const std::uint64_t seed = opt.seed + 1000 + static_cast<std::uint64_t>(t);
        Rng rng(seed);
        for (int n : opt.sizes)
            for (int d : opt.sizes) {
                const auto N = std::size_t(n), D = std::size_t(d);
                const Tensor qh = l1_normalize_columns(rng.normal_tensor({N, D}), 1e-6);
                const Tensor kh = l1_normalize_columns(rng.normal_tensor({N, D}), 1e-6);
                const Tensor att = matmul(qh, transpose(kh));
                const double overshoot = std::max(0.0, max_abs(att) - double(d));
                r.max_error = std::max(r.max_error, overshoot);
                if (overshoot > 0) r.passed = false;
                note_failure(r, seed, N, D);
            }
    }
    // Constructive extreme case.
    Rng rng(opt.seed + 42);
    for (int d : opt.sizes) {
        const auto D = std::size_t(d);
        Tensor q = Tensor::zeros({3, D});
        for (std::size_t j = 0; j < D; ++j)
            q(0, j) = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        Tensor k = q;
        const Tensor att = matmul(l1_normalize_columns(q, 1e-6),
                                  transpose(l1_normalize_columns(k, 1e-6)));
        const double err = std::abs(std::abs(att(0, 0)) - double(d));
        r.max_error = std::max(r.max_error, err);
        if (err > 1e-12) {
            r.passed = false;
            note_failure(r, opt.seed + 42, 3, D);
        }
    }
    return r;
}

// Instrumented exp counter equals the closed form (MSA, XCA, SimA) and stays
// within the bound for EluLinear. Accepts an injectable softmax so a faulty
// build can be demonstrated to fail.
inline PropertyResult exp_counter_exactness(const Options& opt) {
    PropertyResult r{"exp-counter-exactness"};
    Rng rng(opt.seed + 2000);
    const int hs = 2;
    for (int n : opt.sizes)
        for (int d : opt.sizes) {
            if (d % hs != 0) continue;
            AttentionConfig cfg;
            cfg.dim = d;
            cfg.heads = hs;
            const auto x = rng.normal_tensor({std::size_t(n), std::size_t(d)});
            for (AttentionVariant v :
                 {AttentionVariant::SimA, AttentionVariant::MSA, AttentionVariant::XCA,
                  AttentionVariant::EluLinear}) {
                cfg.variant = v;
                auto w = AttentionWeights::random(cfg, rng);
                CostReport cost;
                attention_forward(x, cfg, w, &cost);
                const ExpCount expect = count_exp_ops(v, std::uint64_t(n), std::uint64_t(d), hs);
                const bool ok = v == AttentionVariant::EluLinear
                                    ? cost.exp_ops <= expect.instrumented
                                    : cost.exp_ops == expect.instrumented;
                if (!ok) {
                    r.passed = false;
                    r.max_error = 1;
                    note_failure(r, opt.seed + 2000, std::size_t(n), std::size_t(d));
                }
            }
        }
    return r;
}

// Instrumented matmul counter of the head-level three-matrix product equals
// flops_estimate exactly.
inline PropertyResult muladd_exactness(const Options& opt) {
    PropertyResult r{"mul-add-exactness"};
    Rng rng(opt.seed + 3000);
    for (int n : opt.sizes)
        for (int d : opt.sizes)
            for (Ordering ord : {Ordering::TokensFirst, Ordering::ChannelsFirst}) {
                const auto N = std::size_t(n), D = std::size_t(d);
                const Tensor q = rng.normal_tensor({N, D});
                const Tensor k = rng.normal_tensor({N, D});
                const Tensor v = rng.normal_tensor({N, D});
                CostReport cost;
                const OrderingPolicy pol = ord == Ordering::TokensFirst
                                               ? OrderingPolicy::TokensFirst
                                               : OrderingPolicy::ChannelsFirst;
                sima_head_forward(q, k, v, pol, 1e-6, &cost);
                const std::uint64_t expect =
                    flops_estimate(AttentionVariant::SimA, std::uint64_t(n), std::uint64_t(d), 1, ord);
                if (cost.mul_adds != expect) {
                    r.passed = false;
                    r.max_error = 1;
                    note_failure(r, opt.seed + 3000, N, D);
                }
            }
    return r;
}

// attention_forward(P x) == P attention_forward(x) for all variants.
inline PropertyResult permutation_equivariance(const Options& opt) {
    PropertyResult r{"permutation-equivariance"};
    for (int t = 0; t < opt.trials; ++t) {
        const std::uint64_t seed = opt.seed + 4000 + static_cast<std::uint64_t>(t);
        Rng rng(seed);
        const std::size_t N = 7, D = 8;
        AttentionConfig cfg;
        cfg.dim = int(D);
        cfg.heads = 2;
        const Tensor x = rng.normal_tensor({N, D});
        std::vector<std::size_t> perm(N);
        for (std::size_t i = 0; i < N; ++i) perm[i] = i;
        for (std::size_t i = N - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
        Tensor px({N, D});
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < D; ++j) px(i, j) = x(perm[i], j);
        for (AttentionVariant v : {AttentionVariant::SimA, AttentionVariant::MSA,
                                   AttentionVariant::XCA, AttentionVariant::EluLinear}) {
            cfg.variant = v;
            auto w = AttentionWeights::random(cfg, rng);
            const Tensor y = attention_forward(x, cfg, w);
            const Tensor py = attention_forward(px, cfg, w);
            double err = 0;
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < D; ++j)
                    err = std::max(err, std::abs(py(i, j) - y(perm[i], j)));
            r.max_error = std::max(r.max_error, err);
            if (err >= 1e-12) r.passed = false;
            note_failure(r, seed, N, D);
        }
    }
    return r;
}

// l1_normalize_columns(c m) == l1_normalize_columns(m) for c > 0.
inline PropertyResult scale_invariance(const Options& opt) {
    PropertyResult r{"scale-invariance"};
    for (int t = 0; t < opt.trials; ++t) {
        const std::uint64_t seed = opt.seed + 5000 + static_cast<std::uint64_t>(t);
        Rng rng(seed);
        const Tensor m = rng.normal_tensor({6, 5});
        const Tensor base = l1_normalize_columns(m, 1e-6);
        for (double c : {1e-3, 1.0, 1e3}) {
            const Tensor scaled = l1_normalize_columns(scale(m, c), 1e-6);
            const double err = max_abs_diff(base, scaled);
            r.max_error = std::max(r.max_error, err);
            if (err >= 1e-12) r.passed = false;
            note_failure(r, seed, 6, 5);
        }
    }
    return r;
}

// Each MSA output entry lies within [min, max] of the corresponding V column.
inline PropertyResult msa_convexity(const Options& opt) {
    PropertyResult r{"msa-convexity"};
    for (int t = 0; t < opt.trials; ++t) {
        const std::uint64_t seed = opt.seed + 6000 + static_cast<std::uint64_t>(t);
        Rng rng(seed);
        const std::size_t N = 9, D = 4;
        const Tensor q = rng.normal_tensor({N, D});
        const Tensor k = rng.normal_tensor({N, D});
        const Tensor v = rng.normal_tensor({N, D});
        const Tensor o = msa_head_forward(q, k, v);
        for (std::size_t j = 0; j < D; ++j) {
            double lo = v(0, j), hi = v(0, j);
            for (std::size_t i = 1; i < N; ++i) {
                lo = std::min(lo, v(i, j));
                hi = std::max(hi, v(i, j));
            }
            for (std::size_t i = 0; i < N; ++i) {
                const double over = std::max({0.0, o(i, j) - hi, lo - o(i, j)});
                r.max_error = std::max(r.max_error, over);
                if (over > 1e-12) r.passed = false;
                note_failure(r, seed, N, D);
            }
        }
    }
    return r;
}

// Row sums of a row-softmax must be 1; parametrized on the softmax so a
// deliberately broken build is caught (used by the mutation test).
inline PropertyResult softmax_row_sums(
    const Options& opt,
    const std::function<Tensor(const Tensor&)>& softmax_fn = [](const Tensor& t) {
        return softmax_rows(t);
    }) {
    PropertyResult r{"softmax-row-sum"};
    for (int t = 0; t < opt.trials; ++t) {
        const std::uint64_t seed = opt.seed + 7000 + static_cast<std::uint64_t>(t);
        Rng rng(seed);
        const Tensor a = rng.normal_tensor({5, 7}, 3.0);
        const Tensor s = softmax_fn(a);
        for (std::size_t i = 0; i < s.rows(); ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < s.cols(); ++j) {
                sum += s(i, j);
                if (s(i, j) < 0 || s(i, j) > 1) r.passed = false;
            }
            r.max_error = std::max(r.max_error, std::abs(sum - 1.0));
            if (r.max_error >= 1e-12) r.passed = false;
            note_failure(r, seed, 5, 7);
        }
    }
    return r;
}

// grad_check across the differentiable op set at random points.
inline PropertyResult gradient_checks(const Options& opt) {
    PropertyResult r{"gradient-check"};
    for (int t = 0; t < opt.trials; ++t) {
        const std::uint64_t seed = opt.seed + 8000 + static_cast<std::uint64_t>(t);
        Rng rng(seed);
        const Tensor x = rng.normal_tensor({4, 6});
        struct Case {
            const char* name;
            std::function<ad::Node*(ad::Tape&, ad::Node*)> f;
            bool skip_kinks;
        };
        const Tensor gain = rng.normal_tensor({6}, 0.5);
        const Tensor bias = rng.normal_tensor({6}, 0.5);
        const Tensor other = rng.normal_tensor({6, 3});
        const std::vector<Case> cases = {
            {"matmul", [&](ad::Tape& tp, ad::Node* n) {
                 return tp.sum(tp.matmul(n, tp.leaf(other)));
             }, false},
            {"softmax", [](ad::Tape& tp, ad::Node* n) {
                 return tp.sum(tp.mul(tp.softmax_rows(n), n));
             }, false},
            {"l1norm", [](ad::Tape& tp, ad::Node* n) {
                 return tp.sum(tp.mul(tp.l1_normalize_columns(n, 1e-6), n));
             }, true},
            {"l2norm", [](ad::Tape& tp, ad::Node* n) {
                 return tp.sum(tp.mul(tp.l2_normalize_columns(n, 1e-6), n));
             }, false},
            {"layernorm", [&](ad::Tape& tp, ad::Node* n) {
                 return tp.sum(tp.mul(tp.layer_norm(n, tp.leaf(gain), tp.leaf(bias)), n));
             }, false},
            {"gelu", [](ad::Tape& tp, ad::Node* n) { return tp.sum(tp.gelu(n)); }, false},
            {"relu", [](ad::Tape& tp, ad::Node* n) {
                 return tp.sum(tp.mul(tp.relu(n), n));
             }, true},
        };
        for (const auto& c : cases) {
            const auto skip = c.skip_kinks
                                  ? std::function<bool(std::size_t)>(
                                        [&](std::size_t i) { return std::abs(x.data[i]) < 1e-6; })
                                  : std::function<bool(std::size_t)>();
            const double err = ad::grad_check(c.f, x, 1e-5, skip);
            r.max_error = std::max(r.max_error, err);
            if (err >= 1e-5) {
                r.passed = false;
                if (r.detail.empty()) r.detail = std::string("op=") + c.name + " seed=" + std::to_string(seed);
            }
        }
    }
    return r;
}

inline std::vector<PropertyResult> run_all(const Options& opt) {
    return {ordering_equivalence(opt), attention_bound(opt),   exp_counter_exactness(opt),
            muladd_exactness(opt),     permutation_equivariance(opt), scale_invariance(opt),
            msa_convexity(opt),        softmax_row_sums(opt),   gradient_checks(opt)};
}

} // namespace checks
} // namespace sima
