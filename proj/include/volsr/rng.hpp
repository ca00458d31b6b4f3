#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace volsr {

// Deterministic pseudo-random generator used everywhere randomness is needed
// (initialization, phantoms, augmentation, splits). SplitMix64 core with
// hand-rolled uniform/normal transforms so sequences do not depend on any
// standard-library distribution implementation.
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

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool coin() { return (next_u64() >> 63) != 0; }

    // Standard normal via Box-Muller; one fresh pair per two draws.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Derives an independent stream seed from a master seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    Rng r(master ^ (0xd1342543de82ef95ULL * (stream + 1)));
    return r.next_u64();
}

}  // namespace volsr
