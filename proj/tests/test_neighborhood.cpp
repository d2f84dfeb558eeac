#include <gtest/gtest.h>

#include "relagg/neighborhood.hpp"
#include "support.hpp"

using namespace relagg;

namespace {

// Item "x": three women and one man rated it; item "y": nobody labeled.
// "t" is an unlabeled user who rated both.
struct Fixture {
    RatingGraph graph = fixtures::graph_of({{"f1", "x", true},
                                           {"f2", "x", true},
                                           {"f3", "x", false},
                                           {"m1", "x", true},
                                           {"t", "x", true},
                                           {"t", "y", false},
                                           {"s", "x", false}},
                                          {"nobody"});
    LabelMap labels{{"f1", Gender::Female}, {"f2", Gender::Female}, {"f3", Gender::Female}, {"m1", Gender::Male}};
    ItemGenderStats stats{graph, labels};
};

}  // namespace

TEST(ItemStats, CountsLabeledRaters) {
    Fixture f;
    const auto x = *f.graph.item_index("x");
    const auto y = *f.graph.item_index("y");
    EXPECT_EQ(f.stats.n_female(x), 3u);
    EXPECT_EQ(f.stats.n_total(x), 4u);
    EXPECT_EQ(f.stats.n_total(y), 0u);
    EXPECT_EQ(f.stats.counts(x, Polarity::Positive).total, 3u);
    EXPECT_EQ(f.stats.counts(x, Polarity::Negative).female, 1u);
}

TEST(P1, HandExample) {
    Fixture f;
    const auto s = fixtures::graph_of({{"f1", "x", true}, {"f2", "x", true}, {"f3", "x", true}, {"m1", "x", true}, {"t", "x", true}});
    const ItemGenderStats stats(s, f.labels);
    EXPECT_NEAR(predict_p1(stats, s, "t", 1.0), 4.0 / 6.0, 1e-12);
}

TEST(P1, PoolsCountsAcrossItems) {
    Fixture f;
    EXPECT_NEAR(predict_p1(f.stats, f.graph, "t", 1.0), (1.0 + 3.0) / (2.0 + 4.0), 1e-12);
    EXPECT_NEAR(predict_p1(f.stats, f.graph, "t", 2.0), (2.0 + 3.0) / (4.0 + 4.0), 1e-12);
}

TEST(P1, EmptyUserIsHalf) {
    Fixture f;
    EXPECT_DOUBLE_EQ(predict_p1(f.stats, f.graph, "nobody", 3.0), 0.5);
    EXPECT_DOUBLE_EQ(predict_p1(f.stats, f.graph, "never-seen", 3.0), 0.5);
}

TEST(P1, HugePseudoCountTendsToHalf) {
    Fixture f;
    EXPECT_NEAR(predict_p1(f.stats, f.graph, "t", 1e9), 0.5, 1e-8);
}

TEST(P1, RejectsNonpositivePseudoCount) {
    Fixture f;
    EXPECT_THROW(predict_p1(f.stats, f.graph, "t", 0.0), ConfigError);
    EXPECT_THROW(predict_p2(f.stats, f.graph, "t", -1.0), ConfigError);
}

TEST(P1, LeaveOneOutRemovesOwnLabel) {
    Fixture f;
    // f1 sees x as (2 female of 3) once its own rating is removed.
    EXPECT_NEAR(predict_p1(f.stats, f.graph, "f1", 1.0), 3.0 / 5.0, 1e-12);
    NeighborhoodOptions keep{false, false};
    EXPECT_NEAR(predict_p1(f.stats, f.graph, "f1", 1.0, keep), 4.0 / 6.0, 1e-12);
}

TEST(P1, PolarityAwareCountsMatchingRatersOnly) {
    Fixture f;
    NeighborhoodOptions opt{true, true};
    // "s" rated x negatively: the only negative labeled rater is f3.
    EXPECT_NEAR(predict_p1(f.stats, f.graph, "s", 1.0, opt), 2.0 / 3.0, 1e-12);
}

TEST(P2, HandExample) {
    Fixture f;
    EXPECT_NEAR(predict_p2(f.stats, f.graph, "t", 1.0), (4.0 / 6.0 + 0.5) / 2.0, 1e-12);
    EXPECT_NEAR(predict_p2(f.stats, f.graph, "t", 1.0), 7.0 / 12.0, 1e-12);
}

TEST(P2, EmptyUserIsHalf) {
    Fixture f;
    EXPECT_DOUBLE_EQ(predict_p2(f.stats, f.graph, "nobody", 0.5), 0.5);
}

TEST(P2, SingleItemUserEqualsP1) {
    Fixture f;
    for (const double c : {0.5, 1.0, 20.0}) {
        EXPECT_DOUBLE_EQ(predict_p2(f.stats, f.graph, "s", c), predict_p1(f.stats, f.graph, "s", c));
    }
}

TEST(NaiveBayes, SymmetricClassesGiveEvenPrior) {
    Fixture f;
    const LabelMap even{{"f1", Gender::Female}, {"m1", Gender::Male}};
    EXPECT_DOUBLE_EQ(train_naive_bayes(f.graph, even, 1.0).prior_female, 0.5);
}

TEST(NaiveBayes, SingleEdgeSmoothedFrequencies) {
    const auto g = fixtures::graph_of({{"a", "x", true}, {"b", "x", false}});
    const auto m = train_naive_bayes(g, {{"a", Gender::Female}, {"b", Gender::Male}}, 1.0);
    const auto x = *g.item_index("x");
    EXPECT_NEAR(m.likelihood(Gender::Female, x, Polarity::Positive), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.likelihood(Gender::Female, x, Polarity::Negative), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.likelihood(Gender::Male, x, Polarity::Positive), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.prior_female, 0.5, 1e-12);
    EXPECT_NEAR(nb_posterior(m, g.user_edges("a")), 2.0 / 3.0, 1e-12);
}

TEST(NbLimited, FullKEqualsFullPosterior) {
    Fixture f;
    const auto m = train_naive_bayes(f.graph, f.labels, 1.0);
    const double full = nb_posterior(m, f.graph.user_edges("t"));
    EXPECT_EQ(predict_nb_limited(m, f.graph, "t", 2, 30, 1), full);
    EXPECT_EQ(predict_nb_limited(m, f.graph, "t", 100, 1, 9), full);
}

TEST(NbLimited, ZeroDegreeIsPrior) {
    Fixture f;
    const auto m = train_naive_bayes(f.graph, f.labels, 1.0);
    EXPECT_NEAR(predict_nb_limited(m, f.graph, "nobody", 3, 30, 1), m.prior_female, 1e-12);
}

TEST(NbLimited, TwoEdgesOneAtATimeAveragesPosteriors) {
    Fixture f;
    const auto m = train_naive_bayes(f.graph, f.labels, 1.0);
    const auto edges = f.graph.user_edges("t");
    const double a = nb_posterior(m, edges.subspan(0, 1));
    const double b = nb_posterior(m, edges.subspan(1, 1));
    EXPECT_NEAR(predict_nb_limited(m, f.graph, "t", 1, 20000, 4), (a + b) / 2.0, 0.01);
}

TEST(NbLimited, SeededAndDeterministic) {
    Fixture f;
    const auto m = train_naive_bayes(f.graph, f.labels, 1.0);
    EXPECT_EQ(predict_nb_limited(m, f.graph, "t", 1, 7, 3), predict_nb_limited(m, f.graph, "t", 1, 7, 3));
    EXPECT_THROW(predict_nb_limited(m, f.graph, "t", 0, 7, 3), ConfigError);
}
