#include "cdra/rng.hpp"

#include <cmath>
#include <numbers>

namespace cdra {

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejects the low 2^64 mod n outputs so the remainder is unbiased.
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x = engine_();
    while (x < threshold) x = engine_();
    return x % n;
}

double Rng::normal(double mean, double stddev) {
    // Box-Muller, one variate per call; u1 is kept away from zero.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
}

double Rng::exponential() { return -std::log(1.0 - uniform()); }

double Rng::gamma(double shape) {
    if (shape == 1.0) return exponential();
    if (shape < 1.0) {
        // Gamma(a) = Gamma(a + 1) * U^(1/a) for a < 1.
        const double u = 1.0 - uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = 1.0 - uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

}  // namespace cdra
