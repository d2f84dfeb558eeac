#include <unistd.h>

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "relagg/dataset.hpp"
#include "support.hpp"

using namespace relagg;

namespace {

std::vector<RatingRecord> parse(const std::string& text, RatingFormat f = RatingFormat::Tab) {
    std::istringstream in(text);
    return parse_ratings(in, f);
}

LabelMap labels(const std::string& text, LabelFormat f = LabelFormat::Ml100k) {
    std::istringstream in(text);
    return parse_user_labels(in, f);
}

std::string error_of(auto&& fn) {
    try {
        fn();
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(LoadRatings, ParsesMl100kLine) {
    const auto r = parse("196\t242\t3\t881250949\n");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].user_id, "196");
    EXPECT_EQ(r[0].item_id, "242");
    EXPECT_EQ(r[0].rating, 3);
    EXPECT_EQ(r[0].timestamp, 881250949);
}

TEST(LoadRatings, ParsesMl1mLine) {
    const auto r = parse("1::1193::5::978300760\r\n", RatingFormat::DoubleColon);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].item_id, "1193");
    EXPECT_EQ(r[0].timestamp, 978300760);
}

TEST(LoadRatings, EmptyInputGivesNoRecords) { EXPECT_TRUE(parse("").empty()); }

TEST(LoadRatings, KeepsFileOrder) {
    const auto r = parse("2\t1\t5\t20\n1\t1\t4\t10\n");
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].user_id, "2");
    EXPECT_EQ(r[1].user_id, "1");
}

TEST(LoadRatings, BadIntegerReportsLineAndContent) {
    const auto msg = error_of([] { parse("196\t242\tthree\t881250949\n"); });
    EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("three"), std::string::npos) << msg;
}

TEST(LoadRatings, WrongFieldCountReportsLine) {
    const auto msg = error_of([] { parse("1\t2\t3\t4\n1\t2\t3\n"); });
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(LoadRatings, MissingFileIsDataError) {
    EXPECT_THROW(load_ratings("/nonexistent/u.data", RatingFormat::Tab), DataError);
}

TEST(LoadUserLabels, ParsesMl100kLine) {
    const auto m = labels("1|24|M|technician|85711\n2|53|F|other|94043\n");
    EXPECT_EQ(m.at("1"), Gender::Male);
    EXPECT_EQ(m.at("2"), Gender::Female);
}

TEST(LoadUserLabels, ParsesMl1mLine) {
    const auto m = labels("1::F::1::10::48067\n", LabelFormat::Ml1m);
    EXPECT_EQ(m.at("1"), Gender::Female);
}

TEST(LoadUserLabels, EmptyInputGivesEmptyMap) { EXPECT_TRUE(labels("").empty()); }

TEST(LoadUserLabels, RejectsUnknownGender) {
    EXPECT_THROW(labels("1|24|X|technician|85711\n"), DataError);
}

TEST(LoadUserLabels, RejectsDuplicateUser) {
    EXPECT_THROW(labels("1|24|M|a|1\n1|25|F|b|2\n"), DataError);
}

TEST(Binarize, FourAndAboveArePositive) {
    EXPECT_EQ(binarize(1), Polarity::Negative);
    EXPECT_EQ(binarize(3), Polarity::Negative);
    EXPECT_EQ(binarize(4), Polarity::Positive);
    EXPECT_EQ(binarize(5), Polarity::Positive);
}

TEST(RatingGraph, AdjacencyBothWays) {
    const auto g = fixtures::graph_of({{"a", "x", true}, {"a", "y", false}, {"b", "x", false}});
    EXPECT_EQ(g.num_users(), 2u);
    EXPECT_EQ(g.num_items(), 2u);
    EXPECT_EQ(g.num_edges(), 3u);
    EXPECT_EQ(g.user_edges("a").size(), 2u);
    EXPECT_EQ(g.item_edges(*g.item_index("x")).size(), 2u);
    EXPECT_EQ(g.edge(*g.user_index("b"), *g.item_index("x")), Polarity::Negative);
    EXPECT_FALSE(g.edge(*g.user_index("b"), *g.item_index("y")).has_value());
    EXPECT_TRUE(g.user_edges("nobody").empty());
    EXPECT_EQ(g.max_user_degree(), 2u);
}

TEST(RatingGraph, DuplicatePairIsDataError) {
    RatingGraph g;
    g.add_edge("a", "x", Polarity::Positive);
    EXPECT_THROW(g.add_edge("a", "x", Polarity::Negative), DataError);
}

TEST(TemporalSplit, ThreeRecordFixture) {
    const std::vector<RatingRecord> records{{"A", "m1", 5, 10}, {"B", "m1", 2, 30}, {"A", "m2", 4, 40}};
    const LabelMap lab{{"A", Gender::Female}, {"B", Gender::Male}};
    const auto s = temporal_split(records, lab, 35, 20);
    EXPECT_EQ(s.train_labels, (LabelMap{{"A", Gender::Female}}));
    EXPECT_EQ(s.test_users, std::vector<std::string>{"B"});
    EXPECT_EQ(s.test_labels.at("B"), Gender::Male);
    // The rating at t=40 is past the rating cutoff.
    EXPECT_EQ(s.train_graph.num_edges(), 2u);
    EXPECT_EQ(s.train_graph.user_edges("A").size(), 1u);
}

TEST(TemporalSplit, AllRecordsAfterCutoff) {
    const std::vector<RatingRecord> records{{"A", "m1", 5, 100}, {"B", "m1", 2, 200}};
    const LabelMap lab{{"A", Gender::Female}, {"B", Gender::Male}};
    const auto s = temporal_split(records, lab, 50, 40);
    EXPECT_EQ(s.train_graph.num_edges(), 0u);
    EXPECT_TRUE(s.train_labels.empty());
    EXPECT_TRUE(s.test_users.empty());
}

TEST(TemporalSplit, TestUsersKeepRatingsAsEvidence) {
    const std::vector<RatingRecord> records{{"A", "m1", 5, 10}, {"B", "m1", 1, 30}, {"B", "m2", 4, 31}};
    const LabelMap lab{{"A", Gender::Female}, {"B", Gender::Male}};
    const auto s = temporal_split(records, lab, 100, 20);
    EXPECT_EQ(s.train_graph.user_edges("B").size(), 2u);
    EXPECT_EQ(s.train_labels.count("B"), 0u);
}

TEST(TemporalSplit, UnlabeledRatedUserIsListed) {
    const std::vector<RatingRecord> records{{"A", "m1", 5, 10}, {"ghost", "m1", 2, 11}};
    const LabelMap lab{{"A", Gender::Female}};
    const auto msg = error_of([&] { temporal_split(records, lab, 100, 50); });
    EXPECT_NE(msg.find("ghost"), std::string::npos) << msg;
}

TEST(TemporalSplit, CutoffsMustBeOrdered) {
    const std::vector<RatingRecord> records{{"A", "m1", 5, 10}};
    EXPECT_THROW(temporal_split(records, {{"A", Gender::Female}}, 10, 20), ConfigError);
}

TEST(TemporalSplit, PartitionInvariant) {
    Rng rng = make_rng(3);
    std::vector<RatingRecord> records;
    LabelMap lab;
    for (int u = 0; u < 50; ++u) {
        lab.emplace(std::to_string(u), u % 3 ? Gender::Male : Gender::Female);
        for (int j = 0; j < 5; ++j) {
            records.push_back({std::to_string(u), std::to_string(j + 5 * (u % 4)), 1 + static_cast<int>(uniform_index(rng, 5)),
                               static_cast<std::int64_t>(uniform_index(rng, 1000))});
        }
    }
    const auto s = temporal_split(records, lab, 700, 300);
    EXPECT_EQ(s.train_labels.size() + s.test_users.size(), s.train_graph.num_users());
    for (const auto& u : s.test_users) EXPECT_EQ(s.train_labels.count(u), 0u);
    const auto kept = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.timestamp <= 700; });
    EXPECT_EQ(s.train_graph.num_edges(), static_cast<std::size_t>(kept));
    const auto again = temporal_split(records, lab, 700, 300);
    EXPECT_EQ(again.test_users, s.test_users);
    EXPECT_EQ(again.train_labels, s.train_labels);
}

TEST(FractionCutoffs, PicksOrderStatistics) {
    std::vector<RatingRecord> records;
    for (int t = 10; t >= 1; --t) records.push_back({"u", std::to_string(t), 3, t * 100});
    const auto [rating, label] = fraction_cutoffs(records, 0.6, 0.4);
    EXPECT_EQ(rating, 600);
    EXPECT_EQ(label, 400);
    EXPECT_THROW(fraction_cutoffs(records, 0.3, 0.4), ConfigError);
}

TEST(LoadFiles, RoundTripThroughDisk) {
    const auto dir = std::filesystem::temp_directory_path() / ("relagg_dataset_test_" + std::to_string(::getpid()));
    const auto corpus = fixtures::write_synthetic_corpus(dir, 20, 10);
    const auto records = load_ratings(corpus.ratings.string(), RatingFormat::Tab);
    const auto lab = load_user_labels(corpus.users.string(), LabelFormat::Ml100k);
    EXPECT_EQ(lab.size(), 20u);
    EXPECT_FALSE(records.empty());
    const auto s = temporal_split(records, lab, corpus.rating_cutoff, corpus.label_cutoff);
    EXPECT_GT(s.train_labels.size(), 0u);
    EXPECT_GT(s.test_users.size(), 0u);
}
