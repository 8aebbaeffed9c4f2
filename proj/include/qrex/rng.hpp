#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace qrex {

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard and the variate transforms below are hand-rolled, so a given
// seed yields the same stream on every platform/compiler. Not thread-safe;
// each run owns its own instance.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n >= 1 (Lemire multiply-shift)
    int uniform_int(int n) {
        const auto bound = static_cast<std::uint64_t>(n);
        const std::uint64_t x = engine_();
        const auto m = static_cast<unsigned __int128>(x) * bound;
        return static_cast<int>(static_cast<std::uint64_t>(m >> 64));
    }

    // standard normal, Box-Muller with one cached variate
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // index sampled according to the given (normalized) weights
    int categorical(const std::vector<double>& probs) {
        const double x = uniform();
        double acc = 0.0;
        const int n = static_cast<int>(probs.size());
        for (int i = 0; i < n; ++i) {
            acc += probs[i];
            if (x < acc) return i;
        }
        return n - 1;
    }

    int categorical(const double* probs, int n) {
        const double x = uniform();
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += probs[i];
            if (x < acc) return i;
        }
        return n - 1;
    }

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            const int j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace qrex
