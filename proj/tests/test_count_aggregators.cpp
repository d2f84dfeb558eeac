#include <gtest/gtest.h>

#include <cmath>

#include "relagg/count_aggregators.hpp"
#include "support.hpp"

using namespace relagg;
using relagg::fixtures::CountUser;

TEST(CountFeatures, CountsByPolarity) {
    const auto g = fixtures::graph_of({{"u", "a", true}, {"u", "b", true}, {"u", "c", false}}, {"empty"});
    EXPECT_EQ(count_features(g, "u"), (CountFeatures{2, 1}));
    EXPECT_EQ(count_features(g, "empty"), (CountFeatures{0, 0}));
    auto [g5, l5] = fixtures::count_fixture({{5, 0, true}});
    EXPECT_EQ(count_features(g5, "u0"), (CountFeatures{5, 0}));
}

TEST(Constant, PredictsItsValue) {
    EXPECT_EQ(predict_constant(0.5).predict(), 0.5);
    EXPECT_EQ(predict_constant(0.3).predict(), 0.3);
    EXPECT_THROW(predict_constant(1.5), ConfigError);
}

TEST(Constant, HalfScoresQuarterAndOneBit) {
    std::vector<EvalPair> pairs;
    for (int j = 0; j < 7; ++j) pairs.push_back({predict_constant(0.5).predict(), j % 3 == 0});
    EXPECT_DOUBLE_EQ(mse(pairs), 0.25);
    EXPECT_DOUBLE_EQ(log_loss(pairs), 1.0);
}

TEST(TrainingAverage, FemaleFraction) {
    EXPECT_DOUBLE_EQ(training_average({{"a", Gender::Female}, {"b", Gender::Female}, {"c", Gender::Male}, {"d", Gender::Male}}).p, 0.5);
    EXPECT_DOUBLE_EQ(training_average({{"a", Gender::Female}, {"b", Gender::Male}, {"c", Gender::Male}, {"d", Gender::Male}}).p, 0.25);
    EXPECT_THROW(training_average({}), TrainingError);
}

TEST(CountSigmoid, HandValues) {
    EXPECT_DOUBLE_EQ(predict_count_sigmoid({0, 0, 0}, {7, 3}), 0.5);
    EXPECT_NEAR(predict_count_sigmoid({0.999, 0.0023, -0.0043}, {0, 0}), 0.731, 5e-4);
    const CountSigmoidModel m{0.1, 0.2, -0.1};
    double prev = 0.0;
    for (std::size_t n = 0; n < 10; ++n) {
        const double p = predict_count_sigmoid(m, {n, 4});
        EXPECT_GT(p, prev);
        prev = p;
    }
}

TEST(NoisyOr, HandValues) {
    EXPECT_NEAR(predict_noisy_or({0.3, 0, 0}, {5, 9}), 0.3, 1e-12);
    EXPECT_NEAR(predict_noisy_or({0.2, 0.1, 0.1}, {1, 1}), 1 - 0.8 * 0.9 * 0.9, 1e-12);
    // A negative "probability" lowers the prediction.
    EXPECT_LT(predict_noisy_or({0.3, 0.0, -0.1}, {0, 2}), 0.3);
}

TEST(NoisyOr, NonpositiveBaseWithExponentIsError) {
    EXPECT_THROW(predict_noisy_or({0.2, 1.0, 0.0}, {1, 0}), Error);
    EXPECT_NO_THROW(predict_noisy_or({0.2, 1.5, 0.0}, {0, 3}));
}

TEST(CountObjectives, GradientsMatchCentralDifferences) {
    auto [g, labels] = fixtures::count_fixture({{3, 1, true}, {0, 4, false}, {6, 2, true}, {1, 1, false}, {0, 0, true}});
    CountSigmoidObjective sig(g, labels, 2.5, 0.03);
    NoisyOrObjective nor(g, labels, 2.5, 0.03);
    for (std::uint64_t s = 0; s < 10; ++s) {
        EXPECT_LT(grad_check(sig, fixtures::random_point(3, s, -2, 2)), 1e-4);
        EXPECT_LT(grad_check(nor, fixtures::random_point(3, s, -1.5, -0.05)), 1e-4);
    }
}

TEST(CountSigmoid, MatchesGridOptimumOnFourUsers) {
    const auto users = fixtures::four_user_fixture();
    auto [g, labels] = fixtures::count_fixture(users);
    const auto m = train_count_sigmoid(g, labels, fixtures::fixed_sgd(0.05, 20000, 4));
    const double trained = fixtures::count_model_loss(
        users, [&](double np, double nn) { return fixtures::sigmoid_count_prob(m.w0, m.w1, m.w2, np, nn); });
    const double oracle = fixtures::grid_minimum(users, -2, 2, 0.01, fixtures::sigmoid_count_prob);
    EXPECT_LE(trained, oracle + 1e-2) << "w=(" << m.w0 << ", " << m.w1 << ", " << m.w2 << ")";
}

TEST(NoisyOr, MatchesGridOptimumOnFourUsers) {
    const auto users = fixtures::four_user_fixture();
    auto [g, labels] = fixtures::count_fixture(users);
    const auto m = train_noisy_or(g, labels, fixtures::fixed_sgd(0.05, 20000, 4));
    const double trained = fixtures::count_model_loss(
        users, [&](double np, double nn) { return fixtures::noisy_or_prob(m.w0, m.w1, m.w2, np, nn); });
    const double oracle = fixtures::grid_minimum(users, -2, 2, 0.01, fixtures::noisy_or_prob);
    EXPECT_LE(trained, oracle + 1e-2) << "w=(" << m.w0 << ", " << m.w1 << ", " << m.w2 << ")";
}

TEST(CountSigmoid, AllFemaleDrivesPredictionUp) {
    auto [g, labels] = fixtures::count_fixture({{1, 0, true}, {0, 2, true}, {3, 1, true}});
    const auto m = train_count_sigmoid(g, labels, fixtures::fixed_sgd(0.5, 3000, 3));
    EXPECT_GT(m.w0, 3.0);
    EXPECT_GT(predict_count_sigmoid(m, {0, 0}), 0.95);
}

TEST(NoisyOr, AllFemaleZeroDegreeDrivesW0ToOne) {
    auto [g, labels] = fixtures::count_fixture({{0, 0, true}, {0, 0, true}, {0, 0, true}});
    const auto m = train_noisy_or(g, labels, fixtures::fixed_sgd(0.5, 3000, 3));
    EXPECT_GT(m.w0, 0.95);
    EXPECT_LT(m.w0, 1.0);
}

TEST(CountSigmoid, StrongerPenaltyShrinksCountWeights) {
    auto [g, labels] = fixtures::count_fixture({{5, 0, true}, {4, 1, true}, {0, 5, false}, {1, 4, false}, {3, 3, true}, {2, 2, false}});
    double prev = std::numeric_limits<double>::infinity();
    for (const double l2 : {0.0, 0.1, 1.0}) {
        const auto m = train_count_sigmoid(g, labels, fixtures::fixed_sgd(0.1, 3000, 6, l2));
        const double size = std::abs(m.w1) + std::abs(m.w2);
        EXPECT_LT(size, prev);
        prev = size;
    }
}

TEST(CountModels, EarlyStoppingRecordsEpochs) {
    auto [g, labels] = fixtures::count_fixture({{5, 0, true}, {4, 1, true}, {0, 5, false}, {1, 4, false}, {3, 3, true}, {2, 2, false}});
    SgdConfig c = fixtures::fixed_sgd(0.05, 200, 2);
    c.stopping = ValidationEarlyStop{5};
    CountTrainingInfo info;
    train_noisy_or(g, labels, c, nullptr, &info);
    EXPECT_LE(info.best_epoch, info.epochs_run);
    EXPECT_GT(info.epochs_run, 0u);
}
