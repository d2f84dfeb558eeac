#pragma once

// Mean squared error and base-2 log loss over binary outcomes.

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include "relagg/errors.hpp"

namespace relagg {

struct EvalPair {
    double prediction = 0.5;  // probability of the positive class (Female)
    int actual = 0;           // 1 = Female
};

inline void check_pairs(std::span<const EvalPair> pairs, const char* what) {
    if (pairs.empty()) throw Error(std::string(what) + ": no evaluation pairs");
    for (const auto& e : pairs) {
        if (e.actual != 0 && e.actual != 1) throw Error(std::string(what) + ": actual must be 0 or 1");
        if (!(e.prediction >= 0.0 && e.prediction <= 1.0)) {
            std::ostringstream msg;
            msg << what << ": prediction " << e.prediction << " outside [0,1]";
            throw Error(msg.str());
        }
    }
}

inline double mse(std::span<const EvalPair> pairs) {
    check_pairs(pairs, "mse");
    double sum = 0.0;
    for (const auto& e : pairs) {
        const double d = e.prediction - e.actual;
        sum += d * d;
    }
    return sum / static_cast<double>(pairs.size());
}

// Undefined (throws) when a prediction of exactly 0 or 1 contradicts the
// outcome; a matching extreme prediction contributes nothing.
inline double log_loss(std::span<const EvalPair> pairs) {
    check_pairs(pairs, "log_loss");
    double sum = 0.0;
    for (const auto& e : pairs) {
        const double p = e.actual == 1 ? e.prediction : 1.0 - e.prediction;
        if (p <= 0.0) {
            std::ostringstream msg;
            msg << "log_loss: prediction " << e.prediction << " gives zero probability to the outcome";
            throw Error(msg.str());
        }
        sum -= std::log2(p);
    }
    return sum / static_cast<double>(pairs.size());
}

}  // namespace relagg
