#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "sima/attention.hpp"
#include "sima/rng.hpp"

namespace sima {

struct BenchSpec {
    std::vector<AttentionVariant> variants;
    std::vector<int> n_values;
    std::vector<int> d_values;
    int heads = 8;
    int repeats = 1000;
    int warmup = 50;
    bool fix_ordering = true;
    int precision = 32; // 32 or 64
    std::uint64_t seed = 0;

    void validate() const {
        if (variants.empty() || n_values.empty() || d_values.empty())
            throw ConfigError("bench spec: variants, N and D lists must be nonempty");
        if (repeats < 1 || warmup < 0) throw ConfigError("bench spec: repeats >= 1, warmup >= 0");
        if (precision != 32 && precision != 64)
            throw ConfigError("bench spec: precision must be 32 or 64");
        for (int n : n_values)
            if (n < 1) throw ConfigError("bench spec: N values must be positive");
        for (int d : d_values) {
            if (d < 1) throw ConfigError("bench spec: D values must be positive");
            if (d % heads != 0) throw ConfigError("bench spec: every D must be divisible by heads");
        }
    }
};

struct BenchRecord {
    AttentionVariant variant;
    int n = 0, d = 0, h = 0;
    std::optional<Ordering> ordering_used;
    double mean_ms = 0, min_ms = 0, stddev_ms = 0;
    std::uint64_t exp_ops = 0;
    std::uint64_t mul_adds = 0;
};

struct BenchOutput {
    std::vector<BenchRecord> records;
    std::vector<std::string> warnings;
};

namespace detail {

template <class Real>
BenchRecord time_one(AttentionVariant variant, int n, int d_model, int heads,
                     OrderingPolicy policy, int repeats, int warmup, Rng& rng) {
    AttentionConfig cfg;
    cfg.dim = d_model;
    cfg.heads = heads;
    cfg.variant = variant;
    cfg.ordering = policy;
    auto weights = AttentionWeightsT<Real>::random(cfg, rng);
    const TensorT<Real> x =
        rng.normal_tensor<Real>({static_cast<std::size_t>(n), static_cast<std::size_t>(d_model)});

    // One instrumented pass outside the timed region supplies the counters.
    CostReport cost;
    volatile Real sink = 0;
    {
        auto out = attention_forward(x, cfg, weights, &cost);
        sink = sink + out.data[0];
    }
    for (int i = 0; i < warmup; ++i) {
        auto out = attention_forward<Real>(x, cfg, weights, nullptr);
        sink = sink + out.data[0];
    }

    using clock = std::chrono::steady_clock;
    std::vector<double> ms(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = clock::now();
        auto out = attention_forward<Real>(x, cfg, weights, nullptr);
        const auto t1 = clock::now();
        sink = sink + out.data[0];
        ms[static_cast<std::size_t>(i)] =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    (void)sink;

    BenchRecord rec;
    rec.variant = variant;
    rec.n = n;
    rec.d = d_model;
    rec.h = heads;
    rec.ordering_used = cost.ordering_used;
    rec.exp_ops = cost.exp_ops;
    rec.mul_adds = cost.mul_adds;
    double sum = 0, mn = ms[0];
    for (double v : ms) {
        sum += v;
        mn = std::min(mn, v);
    }
    rec.mean_ms = sum / repeats;
    rec.min_ms = mn;
    double var = 0;
    for (double v : ms) var += (v - rec.mean_ms) * (v - rec.mean_ms);
    rec.stddev_ms = repeats > 1 ? std::sqrt(var / repeats) : 0.0;
    return rec;
}

} // namespace detail

// Fixed-ordering sweep over (variant, N, D). Setup (weights, input) is never
// inside the timed region. With fix_ordering, every variant uses the product
// order of the softmax baseline for the regime (TokensFirst when N > D) so
// the measured delta isolates the exp cost.
inline BenchOutput run_bench(const BenchSpec& spec) {
    spec.validate();
    BenchOutput out;

    using clock = std::chrono::steady_clock;
    if (double(clock::period::num) / clock::period::den > 1e-6)
        out.warnings.push_back("timer resolution coarser than 1us; timings may be quantized");

    Rng rng(spec.seed);
    for (int n : spec.n_values)
        for (int d : spec.d_values)
            for (AttentionVariant v : spec.variants) {
                const OrderingPolicy policy =
                    spec.fix_ordering
                        ? (n > d ? OrderingPolicy::TokensFirst : OrderingPolicy::ChannelsFirst)
                        : OrderingPolicy::Auto;
                out.records.push_back(
                    spec.precision == 32
                        ? detail::time_one<float>(v, n, d, spec.heads, policy, spec.repeats,
                                                  spec.warmup, rng)
                        : detail::time_one<double>(v, n, d, spec.heads, policy, spec.repeats,
                                                   spec.warmup, rng));
            }
    return out;
}

inline std::string format_sig6(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

inline const char* csv_header() {
    return "variant,N,D,H,ordering,mean_ms,min_ms,stddev_ms,exp_ops,mul_adds";
}

inline void emit_csv(const std::vector<BenchRecord>& records, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << csv_header() << "\n";
    for (const auto& r : records) {
        f << to_string(r.variant) << "," << r.n << "," << r.d << "," << r.h << ","
          << (r.ordering_used ? to_string(*r.ordering_used) : "NotApplicable") << ","
          << format_sig6(r.mean_ms) << "," << format_sig6(r.min_ms) << ","
          << format_sig6(r.stddev_ms) << "," << r.exp_ops << "," << r.mul_adds << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

inline std::vector<BenchRecord> parse_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line != csv_header())
        throw IoError("unexpected CSV header in " + path);
    std::vector<BenchRecord> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        auto next = [&] {
            if (!std::getline(ss, field, ',')) throw IoError("short CSV row in " + path);
            return field;
        };
        BenchRecord r;
        const std::string v = next();
        if (v == "sima") r.variant = AttentionVariant::SimA;
        else if (v == "msa") r.variant = AttentionVariant::MSA;
        else if (v == "xca") r.variant = AttentionVariant::XCA;
        else if (v == "elu") r.variant = AttentionVariant::EluLinear;
        else throw IoError("unknown variant in CSV: " + v);
        r.n = std::stoi(next());
        r.d = std::stoi(next());
        r.h = std::stoi(next());
        const std::string ord = next();
        if (ord == "TokensFirst") r.ordering_used = Ordering::TokensFirst;
        else if (ord == "ChannelsFirst") r.ordering_used = Ordering::ChannelsFirst;
        r.mean_ms = std::stod(next());
        r.min_ms = std::stod(next());
        r.stddev_ms = std::stod(next());
        r.exp_ops = std::stoull(next());
        r.mul_adds = std::stoull(next());
        out.push_back(r);
    }
    return out;
}

// One whitespace-delimited series per variant (x = swept dimension,
// y = mean_ms), blank-line separated, with a comment header per series.
// All records must share H.
inline void emit_plotdata(const std::vector<BenchRecord>& records, const std::string& path) {
    if (records.empty()) {
        std::ofstream f(path);
        if (!f) throw IoError("cannot open for writing: " + path);
        return;
    }
    const int h = records[0].h;
    bool n_varies = false;
    for (const auto& r : records) {
        if (r.h != h) throw ConfigError("emit_plotdata: records mix head counts");
        if (r.n != records[0].n) n_varies = true;
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    // Preserve first-appearance variant order.
    std::vector<AttentionVariant> order;
    for (const auto& r : records) {
        bool seen = false;
        for (auto v : order) seen = seen || v == r.variant;
        if (!seen) order.push_back(r.variant);
    }
    bool first = true;
    for (AttentionVariant v : order) {
        if (!first) f << "\n";
        first = false;
        if (n_varies)
            f << "# variant=" << to_string(v) << " D=" << records[0].d << " H=" << h << "\n";
        else
            f << "# variant=" << to_string(v) << " N=" << records[0].n << " H=" << h << "\n";
        for (const auto& r : records)
            if (r.variant == v) f << (n_varies ? r.n : r.d) << " " << format_sig6(r.mean_ms) << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

} // namespace sima
