#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace w2w {

/// Deterministic random source. std::normal_distribution is implementation
/// defined, so Gaussians come from an explicit Box-Muller transform over
/// mt19937_64 and reproduce bit-for-bit everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        // 53-bit mantissa uniform in [0, 1)
        return double(gen_() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::vector<float> gaussian_vector(std::size_t n, double stddev = 1.0) {
        std::vector<float> v(n);
        for (auto& x : v) x = float(gaussian() * stddev);
        return v;
    }

    std::uint64_t next_u64() { return gen_(); }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace w2w
