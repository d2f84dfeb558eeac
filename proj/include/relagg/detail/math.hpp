#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace relagg {

inline constexpr double kProbabilityFloor = 1e-6;
inline constexpr double kLn2 = std::numbers::ln2;

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Clips a probability into [1e-6, 1 - 1e-6].
inline double clip_probability(double p) {
    return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

// Base-2 log loss of a logistic score; stable for large |z|.
inline double logistic_log2_loss(double z, double y) {
    // log(1 + e^z) - y z, computed without overflow
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return (softplus - y * z) / kLn2;
}

}  // namespace relagg
