#pragma once

// Relational logistic regression with one weight per (item, polarity),
// trained either on all of a user's ratings or with relational dropout:
// every epoch each user keeps a fixed-size random subset of its ratings,
// and predictions average the sigmoid over many random subsets.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relagg/count_aggregators.hpp"
#include "relagg/dataset.hpp"
#include "relagg/detail/math.hpp"
#include "relagg/detail/random.hpp"
#include "relagg/errors.hpp"
#include "relagg/optim.hpp"

namespace relagg {

struct PerItemRlrModel {
    double w0 = 0.0;
    std::unordered_map<std::string, double> h_pos;  // weight of a positive rating of the item
    std::unordered_map<std::string, double> h_neg;  // weight of a negative rating of the item

    double weight(const std::string& item, Polarity p) const {
        const auto& m = p == Polarity::Positive ? h_pos : h_neg;
        const auto it = m.find(item);
        return it == m.end() ? 0.0 : it->second;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& [i, v] : h_pos) s += v * v;
        for (const auto& [i, v] : h_neg) s += v * v;
        return s;
    }
};

struct RatedItem {
    std::string item;
    Polarity polarity;
};

// w0 plus the weight of every rating; unseen items contribute nothing.
inline double rlr_score(const PerItemRlrModel& m, std::span<const RatedItem> edges) {
    double z = m.w0;
    for (const auto& e : edges) z += m.weight(e.item, e.polarity);
    return z;
}

inline double rlr_score(const PerItemRlrModel& m, const RatingGraph& graph, std::span<const Edge> edges) {
    double z = m.w0;
    for (const auto& e : edges) z += m.weight(graph.item_id(e.node), e.polarity);
    return z;
}

inline constexpr std::size_t kAllEdges = std::numeric_limits<std::size_t>::max();

struct DropoutConfig {
    std::size_t k_train = 10;
    std::size_t k_test = 10;
    std::size_t n_test_samples = 30;
    std::uint64_t seed = 0;

    void validate() const {
        if (k_train == 0 || k_test == 0 || n_test_samples == 0) {
            throw ConfigError("dropout: k_train, k_test and n_test_samples must be positive");
        }
    }
};

namespace detail {

inline std::size_t rlr_param_index(const Edge& e) {
    return 1 + 2 * e.node + (e.polarity == Polarity::Positive ? 0 : 1);
}

// Mean over n_samples of sigmoid(score of a random min(k, degree) subset).
// `indices` are parameter indices of the user's ratings.
inline double averaged_subset_prediction(std::span<const double> params, std::span<const std::size_t> indices,
                                         std::size_t k, std::size_t n_samples, Rng& rng) {
    if (k >= indices.size()) {
        double z = params[0];
        for (const auto j : indices) z += params[j];
        return sigmoid(z);
    }
    std::vector<std::size_t> pick;
    double sum = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        sample_subset(indices.size(), k, rng, pick);
        double z = params[0];
        for (const auto j : pick) z += params[indices[j]];
        sum += sigmoid(z);
    }
    return sum / static_cast<double>(n_samples);
}

}  // namespace detail

// Mean over labeled users of the base-2 log loss of
// sigmoid(w0 + sum of active rating weights) plus (l2/2) times the squared
// active weights. With k_train < degree the active set is a fresh random
// k_train-subset each epoch. Params: [w0, (h_pos(i), h_neg(i)) per item].
class RlrObjective final : public Objective {
public:
    RlrObjective(const RatingGraph& graph, const LabelMap& labels, double l2, std::size_t k_train,
                 std::uint64_t seed)
        : dimension_(1 + 2 * graph.num_items()), l2_(l2), k_train_(k_train), rng_(make_rng(seed, 0xd20b)) {
        for (const auto& [user, g] : labels) {
            std::vector<std::size_t> idx;
            for (const auto& e : graph.user_edges(user)) idx.push_back(detail::rlr_param_index(e));
            edges_.push_back(std::move(idx));
            y_.push_back(as_target(g));
        }
        active_ = edges_;
    }

    std::size_t dimension() const override { return dimension_; }
    std::size_t num_examples() const override { return y_.size(); }
    std::string description() const override {
        return k_train_ == kAllEdges ? "rlr log loss" : "rlr dropout log loss (k=" + std::to_string(k_train_) + ")";
    }

    void begin_epoch(std::size_t) override {
        if (k_train_ == kAllEdges) return;
        std::vector<std::size_t> pick;
        for (std::size_t u = 0; u < edges_.size(); ++u) {
            if (k_train_ >= edges_[u].size()) continue;
            sample_subset(edges_[u].size(), k_train_, rng_, pick);
            active_[u].clear();
            for (const auto j : pick) active_[u].push_back(edges_[u][j]);
        }
    }

    double evaluate(std::span<const double> params, std::span<double> grad) const override {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv = 1.0 / static_cast<double>(y_.size());
        double total = 0.0;
        for (std::size_t u = 0; u < y_.size(); ++u) {
            total += example(params, u, [&](std::size_t j, double v) { grad[j] += v * inv; });
        }
        return total * inv;
    }

    void accumulate_gradient(std::span<const double> params, std::span<const std::size_t> batch,
                             SparseGradient& grad) const override {
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (const auto u : batch) {
            example(params, u, [&](std::size_t j, double v) { grad.add(j, v * inv); });
        }
    }

private:
    template <class Sink>
    double example(std::span<const double> p, std::size_t u, Sink&& sink) const {
        const auto& act = active_[u];
        double z = p[0];
        double penalty = 0.0;
        for (const auto j : act) {
            z += p[j];
            penalty += p[j] * p[j];
        }
        const double d = (sigmoid(z) - y_[u]) / kLn2;
        sink(0, d);
        for (const auto j : act) sink(j, d + l2_ * p[j]);
        return logistic_log2_loss(z, y_[u]) + 0.5 * l2_ * penalty;
    }

    std::size_t dimension_;
    double l2_;
    std::size_t k_train_;
    Rng rng_;
    std::vector<std::vector<std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> active_;
    std::vector<double> y_;
};

struct RlrTrainingInfo {
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
};

namespace detail {

inline PerItemRlrModel rlr_model_from_params(const RatingGraph& graph, std::span<const double> p) {
    PerItemRlrModel m;
    m.w0 = p[0];
    for (std::size_t i = 0; i < graph.num_items(); ++i) {
        const auto& id = graph.item_id(i);
        m.h_pos.emplace(id, p[1 + 2 * i]);
        m.h_neg.emplace(id, p[2 + 2 * i]);
    }
    return m;
}

inline PerItemRlrModel train_rlr_impl(const RatingGraph& graph, const LabelMap& labels, const SgdConfig& sgd,
                                      std::size_t k_train, std::size_t k_test, std::size_t n_test_samples,
                                      std::uint64_t dropout_seed, const ValidationTarget* override_target,
                                      RlrTrainingInfo* info) {
    if (labels.empty()) throw TrainingError("rlr: no labels");
    auto plan = plan_stopping(labels, sgd, override_target);
    RlrObjective objective(graph, plan.fit, sgd.l2_penalty, k_train, mix_seed(sgd.seed, dropout_seed));

    ValidationFn validate;
    if (plan.validation) {
        std::vector<std::vector<std::size_t>> idx;
        std::vector<std::uint64_t> streams;
        for (const auto& u : plan.validation->users) {
            std::vector<std::size_t> v;
            for (const auto& e : graph.user_edges(u)) v.push_back(rlr_param_index(e));
            idx.push_back(std::move(v));
            streams.push_back(stable_hash(u));
        }
        validate = [&, idx = std::move(idx), streams = std::move(streams)](std::span<const double> params) {
            std::vector<double> preds;
            preds.reserve(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) {
                Rng rng = make_rng(dropout_seed, streams[j]);
                preds.push_back(averaged_subset_prediction(params, idx[j], k_test, n_test_samples, rng));
            }
            return plan.validation->score(preds);
        };
    }
    const double base = clip_probability(training_average(plan.fit).p);
    std::vector<double> init(objective.dimension(), 0.0);
    init[0] = std::log(base / (1.0 - base));
    auto result = sgd_minimize(objective, std::move(init), sgd, validate);
    if (info) *info = {result.best_epoch, result.epochs_run};
    return rlr_model_from_params(graph, result.params);
}

}  // namespace detail

// Plain per-item RLR on every rating of each labeled user.
inline PerItemRlrModel train_rlr(const RatingGraph& graph, const LabelMap& labels, const SgdConfig& sgd,
                                 const ValidationTarget* override_target = nullptr,
                                 RlrTrainingInfo* info = nullptr) {
    return detail::train_rlr_impl(graph, labels, sgd, kAllEdges, kAllEdges, 1, 0, override_target, info);
}

// Training subsets are redrawn once per epoch.
inline PerItemRlrModel train_rlr_dropout(const RatingGraph& graph, const LabelMap& labels, const SgdConfig& sgd,
                                         const DropoutConfig& dropout,
                                         const ValidationTarget* override_target = nullptr,
                                         RlrTrainingInfo* info = nullptr) {
    dropout.validate();
    return detail::train_rlr_impl(graph, labels, sgd, dropout.k_train, dropout.k_test, dropout.n_test_samples,
                                  dropout.seed, override_target, info);
}

// Mean of sigmoids over n_test_samples random k_test-subsets of the user's
// ratings, drawn from a generator seeded by (seed, user).
inline double predict_rlr_dropout(const PerItemRlrModel& m, const RatingGraph& graph, std::string_view user,
                                  const DropoutConfig& dropout) {
    dropout.validate();
    const auto edges = graph.user_edges(user);
    std::vector<double> params{m.w0};
    std::vector<std::size_t> idx;
    for (const auto& e : edges) {
        idx.push_back(params.size());
        params.push_back(m.weight(graph.item_id(e.node), e.polarity));
    }
    Rng rng = make_rng(dropout.seed, stable_hash(user));
    return detail::averaged_subset_prediction(params, idx, dropout.k_test, dropout.n_test_samples, rng);
}

inline double predict_rlr(const PerItemRlrModel& m, const RatingGraph& graph, std::string_view user) {
    return sigmoid(rlr_score(m, graph, graph.user_edges(user)));
}

}  // namespace relagg
