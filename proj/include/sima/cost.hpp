#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sima {

// Which way the three-matrix attention product is grouped.
//   TokensFirst:   (Q K^T) V   -- cost O(N^2 d) per head
//   ChannelsFirst: Q (K^T V)   -- cost O(N d^2) per head
enum class Ordering { TokensFirst, ChannelsFirst };

// Ordering selection policy for an attention block. Auto compares the token
// count against the per-head width at forward time.
enum class OrderingPolicy { Auto, TokensFirst, ChannelsFirst };

inline std::string to_string(Ordering o) {
    return o == Ordering::TokensFirst ? "TokensFirst" : "ChannelsFirst";
}

inline std::string to_string(OrderingPolicy p) {
    switch (p) {
        case OrderingPolicy::Auto: return "Auto";
        case OrderingPolicy::TokensFirst: return "TokensFirst";
        default: return "ChannelsFirst";
    }
}

// Tally of the cost-relevant scalar operations of one forward pass.
// exp_ops counts transcendental evaluations (exp, tanh, elu's negative
// branch); mul_adds counts fused multiply-adds performed by matmul.
// ordering_used is empty when no ordering decision applies (NotApplicable).
struct CostReport {
    std::uint64_t exp_ops = 0;
    std::uint64_t mul_adds = 0;
    std::optional<Ordering> ordering_used;

    void reset() { *this = CostReport{}; }
};

inline std::string ordering_used_string(const CostReport& r) {
    return r.ordering_used ? to_string(*r.ordering_used) : "NotApplicable";
}

} // namespace sima
