#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "relagg/metrics.hpp"

using namespace relagg;

TEST(Mse, ConstantHalfIsQuarter) {
    const std::vector<EvalPair> p{{0.5, 1}, {0.5, 0}, {0.5, 0}};
    EXPECT_DOUBLE_EQ(mse(p), 0.25);
}

TEST(Mse, PerfectPredictionsAreZero) {
    const std::vector<EvalPair> p{{1.0, 1}, {0.0, 0}};
    EXPECT_DOUBLE_EQ(mse(p), 0.0);
}

TEST(Mse, HandExample) {
    const std::vector<EvalPair> p{{0.8, 1}, {0.3, 0}};
    EXPECT_NEAR(mse(p), 0.065, 1e-12);
}

TEST(Mse, EmptyIsError) { EXPECT_THROW(mse(std::vector<EvalPair>{}), Error); }

TEST(LogLoss, ConstantHalfIsOneBit) {
    const std::vector<EvalPair> p{{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}};
    EXPECT_DOUBLE_EQ(log_loss(p), 1.0);
}

TEST(LogLoss, QuarterOnPositiveIsTwoBits) {
    const std::vector<EvalPair> p{{0.25, 1}};
    EXPECT_DOUBLE_EQ(log_loss(p), 2.0);
}

TEST(LogLoss, MixedHandExample) {
    const std::vector<EvalPair> p{{0.8, 1}, {0.3, 0}};
    EXPECT_NEAR(log_loss(p), -(std::log2(0.8) + std::log2(0.7)) / 2, 1e-12);
}

TEST(LogLoss, ContradictedCertaintyIsUndefined) {
    EXPECT_THROW(log_loss(std::vector<EvalPair>{{0.0, 1}}), Error);
    EXPECT_THROW(log_loss(std::vector<EvalPair>{{1.0, 0}}), Error);
    EXPECT_DOUBLE_EQ(log_loss(std::vector<EvalPair>{{1.0, 1}}), 0.0);
}

TEST(Metrics, RejectOutOfRangeInputs) {
    EXPECT_THROW(mse(std::vector<EvalPair>{{1.5, 1}}), Error);
    EXPECT_THROW(mse(std::vector<EvalPair>{{0.5, 2}}), Error);
    EXPECT_THROW(log_loss(std::vector<EvalPair>{{std::nan(""), 1}}), Error);
}
