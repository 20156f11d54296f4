#pragma once

#include <cmath>
#include <cstdint>

#include "sima/tensor.hpp"

namespace sima {

// Counter-free splitmix64 generator. Uses only integer arithmetic plus
// sqrt/log, so equal seeds give equal streams on any conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    // Standard normal via Marsaglia's polar method.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // Normal truncated to two standard deviations, the usual transformer init.
    double trunc_normal(double sigma) {
        double z;
        do {
            z = normal();
        } while (std::abs(z) > 2.0);
        return z * sigma;
    }

    template <class Real = double>
    TensorT<Real> normal_tensor(std::vector<std::size_t> shape, double sigma = 1.0) {
        TensorT<Real> t(std::move(shape));
        for (Real& v : t.data) v = static_cast<Real>(normal() * sigma);
        return t;
    }

    template <class Real = double>
    TensorT<Real> trunc_normal_tensor(std::vector<std::size_t> shape, double sigma) {
        TensorT<Real> t(std::move(shape));
        for (Real& v : t.data) v = static_cast<Real>(trunc_normal(sigma));
        return t;
    }

    // Independent substream for (seed, index) pairs, e.g. per-sample streams.
    static Rng fork(std::uint64_t seed, std::uint64_t index) {
        Rng mix(seed ^ (0x632be59bd9b4e019ULL * (index + 1)));
        return Rng(mix.next_u64());
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sima
