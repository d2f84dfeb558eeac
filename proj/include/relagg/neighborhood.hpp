#pragma once

// Estimators that treat each rated item as a small data set about the
// gender of its raters (pooled: P1, averaged: P2), and naive Bayes over a
// bounded random subset of a user's ratings.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relagg/dataset.hpp"
#include "relagg/detail/math.hpp"
#include "relagg/detail/random.hpp"
#include "relagg/errors.hpp"

namespace relagg {

// Per-item counts of labeled raters, split by the polarity of their rating.
// Only users with a known label are counted.
class ItemGenderStats {
public:
    struct Counts {
        std::uint32_t female = 0;
        std::uint32_t total = 0;
    };

    ItemGenderStats() = default;

    ItemGenderStats(const RatingGraph& graph, const LabelMap& labels)
        : counts_(graph.num_items()) {
        for (const auto& [user, g] : labels) {
            const auto u = graph.user_index(user);
            if (!u) continue;
            counted_.emplace(user, g);
            for (const auto& e : graph.user_edges(*u)) {
                auto& c = counts_[e.node][static_cast<std::size_t>(e.polarity)];
                c.total += 1;
                c.female += g == Gender::Female ? 1 : 0;
            }
        }
    }

    std::size_t num_items() const { return counts_.size(); }

    // Polarity-blind counts.
    Counts counts(std::size_t item) const {
        const auto& c = counts_.at(item);
        return {c[0].female + c[1].female, c[0].total + c[1].total};
    }

    Counts counts(std::size_t item, Polarity polarity) const {
        return counts_.at(item)[static_cast<std::size_t>(polarity)];
    }

    std::uint32_t n_female(std::size_t item) const { return counts(item).female; }
    std::uint32_t n_total(std::size_t item) const { return counts(item).total; }

    // Label of `user` if it contributed to the counts.
    std::optional<Gender> counted_label(std::string_view user) const {
        const auto it = counted_.find(std::string(user));
        if (it == counted_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::vector<std::array<Counts, 2>> counts_;
    LabelMap counted_;
};

inline ItemGenderStats build_item_stats(const RatingGraph& graph, const LabelMap& labels) {
    return ItemGenderStats(graph, labels);
}

struct NeighborhoodOptions {
    // Remove the predicted user's own label from the counts it touches.
    bool leave_one_out = true;
    // Count only raters who gave the item the same polarity as the user.
    bool polarity_aware = false;
};

namespace detail {

inline void check_pseudo_count(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("pseudo-count must be positive");
}

// Counts of item `e.node` as seen by `user`, after leave-one-out removal.
inline std::pair<double, double> visible_counts(const ItemGenderStats& stats, const Edge& e,
                                                std::optional<Gender> own, const NeighborhoodOptions& opt) {
    const auto c = opt.polarity_aware ? stats.counts(e.node, e.polarity) : stats.counts(e.node);
    double female = c.female;
    double total = c.total;
    if (own) {
        total -= 1.0;
        female -= *own == Gender::Female ? 1.0 : 0.0;
    }
    return {female, total};
}

inline std::optional<Gender> own_label(const ItemGenderStats& stats, std::string_view user,
                                       const NeighborhoodOptions& opt) {
    return opt.leave_one_out ? stats.counted_label(user) : std::nullopt;
}

}  // namespace detail

// (c + sum_i n_female(i)) / (2c + sum_i n_total(i)) over the items the user rated.
inline double predict_p1(const ItemGenderStats& stats, const RatingGraph& graph, std::string_view user,
                         double c, const NeighborhoodOptions& opt = {}) {
    detail::check_pseudo_count(c);
    const auto own = detail::own_label(stats, user, opt);
    double female = 0.0;
    double total = 0.0;
    for (const auto& e : graph.user_edges(user)) {
        const auto [f, t] = detail::visible_counts(stats, e, own, opt);
        female += f;
        total += t;
    }
    return (c + female) / (2.0 * c + total);
}

// Mean over rated items of (c + n_female(i)) / (2c + n_total(i)); 0.5 for
// users with no ratings.
inline double predict_p2(const ItemGenderStats& stats, const RatingGraph& graph, std::string_view user,
                         double c, const NeighborhoodOptions& opt = {}) {
    detail::check_pseudo_count(c);
    const auto edges = graph.user_edges(user);
    if (edges.empty()) return 0.5;
    const auto own = detail::own_label(stats, user, opt);
    double sum = 0.0;
    for (const auto& e : edges) {
        const auto [f, t] = detail::visible_counts(stats, e, own, opt);
        sum += (c + f) / (2.0 * c + t);
    }
    return sum / static_cast<double>(edges.size());
}

// Multinomial naive Bayes over observed (item, polarity) events; unobserved
// pairs contribute no factor.
struct NaiveBayesModel {
    double prior_female = 0.5;
    double smoothing = 1.0;
    // log P(event | gender), indexed [gender][2 * item + polarity]
    std::array<std::vector<double>, 2> log_likelihood;

    std::size_t num_items() const { return log_likelihood[0].size() / 2; }

    double likelihood(Gender g, std::size_t item, Polarity pol) const {
        return std::exp(log_likelihood[static_cast<std::size_t>(g)][2 * item + static_cast<std::size_t>(pol)]);
    }

    double log_odds(const Edge& e) const {
        const auto k = 2 * e.node + static_cast<std::size_t>(e.polarity);
        return log_likelihood[0][k] - log_likelihood[1][k];
    }
};

inline NaiveBayesModel train_naive_bayes(const RatingGraph& graph, const LabelMap& labels, double smoothing) {
    if (labels.empty()) throw TrainingError("train_naive_bayes: no labels");
    detail::check_pseudo_count(smoothing);
    const std::size_t events = 2 * graph.num_items();
    std::array<std::vector<double>, 2> counts{std::vector<double>(events, 0.0), std::vector<double>(events, 0.0)};
    std::array<double, 2> totals{0.0, 0.0};
    double n_female = 0;
    for (const auto& [user, g] : labels) {
        const auto gi = static_cast<std::size_t>(g);
        n_female += as_target(g);
        for (const auto& e : graph.user_edges(user)) {
            counts[gi][2 * e.node + static_cast<std::size_t>(e.polarity)] += 1.0;
            totals[gi] += 1.0;
        }
    }
    NaiveBayesModel m;
    m.smoothing = smoothing;
    m.prior_female = (n_female + smoothing) / (static_cast<double>(labels.size()) + 2.0 * smoothing);
    for (std::size_t g = 0; g < 2; ++g) {
        const double denom = totals[g] + smoothing * static_cast<double>(events);
        m.log_likelihood[g].resize(events);
        for (std::size_t k = 0; k < events; ++k) {
            m.log_likelihood[g][k] = std::log((counts[g][k] + smoothing) / denom);
        }
    }
    return m;
}

inline double nb_posterior(const NaiveBayesModel& m, std::span<const Edge> edges) {
    double logit = std::log(m.prior_female) - std::log1p(-m.prior_female);
    for (const auto& e : edges) logit += m.log_odds(e);
    return sigmoid(logit);
}

// Average posterior over n_samples random subsets of min(k, degree) edges.
// When k covers every edge the full posterior is returned directly.
inline double predict_nb_limited(const NaiveBayesModel& m, const RatingGraph& graph, std::string_view user,
                                 std::size_t k, std::size_t n_samples, std::uint64_t seed) {
    if (k == 0 || n_samples == 0) throw ConfigError("predict_nb_limited: k and n_samples must be positive");
    if (m.num_items() != graph.num_items()) throw Error("predict_nb_limited: model was trained on another graph");
    const auto edges = graph.user_edges(user);
    if (k >= edges.size()) return nb_posterior(m, edges);
    Rng rng = make_rng(seed, stable_hash(user));
    std::vector<std::size_t> pick;
    std::vector<Edge> subset;
    double sum = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        sample_subset(edges.size(), k, rng, pick);
        subset.clear();
        for (const auto j : pick) subset.push_back(edges[j]);
        sum += nb_posterior(m, subset);
    }
    return sum / static_cast<double>(n_samples);
}

}  // namespace relagg
