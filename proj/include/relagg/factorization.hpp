#pragma once

// Logistic matrix factorization of the binarized rating matrix and a
// logistic regression of gender on each user's bias and latent factors.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relagg/count_aggregators.hpp"
#include "relagg/dataset.hpp"
#include "relagg/detail/math.hpp"
#include "relagg/detail/random.hpp"
#include "relagg/errors.hpp"
#include "relagg/metrics.hpp"
#include "relagg/optim.hpp"

namespace relagg {

struct MfModel {
    std::size_t factors = 0;
    double mu = 0.0;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    std::vector<double> b_user;
    std::vector<double> b_item;
    std::vector<double> p;  // user-major, factors per user
    std::vector<double> q;  // item-major, factors per item

    // Rebuilds the id -> index maps; call after filling user_ids / item_ids.
    void reindex() {
        user_lookup_.clear();
        item_lookup_.clear();
        for (std::size_t k = 0; k < user_ids.size(); ++k) user_lookup_.emplace(user_ids[k], k);
        for (std::size_t k = 0; k < item_ids.size(); ++k) item_lookup_.emplace(item_ids[k], k);
    }

    std::optional<std::size_t> user_index(std::string_view id) const { return find(user_lookup_, id); }
    std::optional<std::size_t> item_index(std::string_view id) const { return find(item_lookup_, id); }

    std::span<const double> user_factors(std::size_t u) const {
        return std::span<const double>(p).subspan(u * factors, factors);
    }
    std::span<const double> item_factors(std::size_t i) const {
        return std::span<const double>(q).subspan(i * factors, factors);
    }

    double score(std::size_t u, std::size_t i) const {
        double z = mu + b_user[u] + b_item[i];
        for (std::size_t f = 0; f < factors; ++f) z += p[u * factors + f] * q[i * factors + f];
        return z;
    }

private:
    static std::optional<std::size_t> find(const std::unordered_map<std::string, std::size_t>& lookup,
                                           std::string_view id) {
        const auto it = lookup.find(std::string(id));
        if (it == lookup.end()) return std::nullopt;
        return it->second;
    }

    std::unordered_map<std::string, std::size_t> user_lookup_;
    std::unordered_map<std::string, std::size_t> item_lookup_;
};

// sigmoid(mu + b_u + b_i + P_u . Q_i); unknown users or items drop the
// terms they would contribute.
inline double predict_edge(const MfModel& m, std::string_view user, std::string_view item) {
    const auto u = m.user_index(user);
    const auto i = m.item_index(item);
    double z = m.mu;
    if (u) z += m.b_user[*u];
    if (i) z += m.b_item[*i];
    if (u && i) {
        for (std::size_t f = 0; f < m.factors; ++f) z += m.p[*u * m.factors + f] * m.q[*i * m.factors + f];
    }
    return sigmoid(z);
}

enum class MfInitKind { Random, GenderSeeded };

struct MfInit {
    MfInitKind kind = MfInitKind::Random;
    // Training labels used by GenderSeeded; never the test labels.
    const LabelMap* seed_labels = nullptr;
};

struct MfEdge {
    std::size_t user;
    std::size_t item;
    double y;  // 1 for a positive rating
};

inline std::vector<MfEdge> mf_edges(const RatingGraph& graph) {
    std::vector<MfEdge> out;
    out.reserve(graph.num_edges());
    for (std::size_t u = 0; u < graph.num_users(); ++u) {
        for (const auto& e : graph.user_edges(u)) {
            out.push_back({u, e.node, e.polarity == Polarity::Positive ? 1.0 : 0.0});
        }
    }
    return out;
}

// Starting point: biases 0, mu at the logit of the positive-rating rate,
// latent entries uniform in (-0.1, 0.1). GenderSeeded then sets feature 0
// of each seed-labeled user to +2 (Female) or -2 (Male).
inline MfModel initial_mf_model(const RatingGraph& graph, std::size_t factors, const MfInit& init,
                                std::uint64_t seed) {
    if (init.kind == MfInitKind::GenderSeeded) {
        if (!init.seed_labels) throw ConfigError("gender-seeded init needs training labels");
        if (factors == 0) throw ConfigError("gender-seeded init needs at least one latent factor");
    }
    MfModel m;
    m.factors = factors;
    m.user_ids = graph.user_ids();
    m.item_ids = graph.item_ids();
    m.reindex();
    m.b_user.assign(graph.num_users(), 0.0);
    m.b_item.assign(graph.num_items(), 0.0);
    double pos = 0;
    for (std::size_t u = 0; u < graph.num_users(); ++u) {
        for (const auto& e : graph.user_edges(u)) pos += e.polarity == Polarity::Positive ? 1.0 : 0.0;
    }
    const double rate = clip_probability(graph.num_edges() ? pos / static_cast<double>(graph.num_edges()) : 0.5);
    m.mu = std::log(rate / (1.0 - rate));
    Rng rng = make_rng(seed, 0x3f);
    m.p.resize(graph.num_users() * factors);
    m.q.resize(graph.num_items() * factors);
    for (auto& v : m.p) v = uniform_real(rng, -0.1, 0.1);
    for (auto& v : m.q) v = uniform_real(rng, -0.1, 0.1);
    if (init.kind == MfInitKind::GenderSeeded) {
        for (const auto& [user, g] : *init.seed_labels) {
            if (const auto u = graph.user_index(user)) m.p[*u * factors] = g == Gender::Female ? 2.0 : -2.0;
        }
    }
    return m;
}

// Mean over observed ratings of the base-2 log loss of the edge
// probability plus (l2/2)(b_u^2 + b_i^2 + |P_u|^2 + |Q_i|^2) for the
// rating's user and item. Params: [mu, b_user, b_item, P, Q].
class MfObjective final : public Objective {
public:
    MfObjective(std::size_t num_users, std::size_t num_items, std::size_t factors, std::vector<MfEdge> edges,
                double l2)
        : users_(num_users), items_(num_items), factors_(factors), edges_(std::move(edges)), l2_(l2) {}

    std::size_t dimension() const override { return 1 + (users_ + items_) * (1 + factors_); }
    std::size_t num_examples() const override { return edges_.size(); }
    std::string description() const override { return "logistic mf log loss"; }

    std::size_t bu(std::size_t u) const { return 1 + u; }
    std::size_t bi(std::size_t i) const { return 1 + users_ + i; }
    std::size_t pu(std::size_t u) const { return 1 + users_ + items_ + u * factors_; }
    std::size_t qi(std::size_t i) const { return 1 + users_ + items_ + users_ * factors_ + i * factors_; }

    std::vector<double> pack(const MfModel& m) const {
        std::vector<double> x(dimension());
        x[0] = m.mu;
        std::copy(m.b_user.begin(), m.b_user.end(), x.begin() + static_cast<std::ptrdiff_t>(bu(0)));
        std::copy(m.b_item.begin(), m.b_item.end(), x.begin() + static_cast<std::ptrdiff_t>(bi(0)));
        std::copy(m.p.begin(), m.p.end(), x.begin() + static_cast<std::ptrdiff_t>(pu(0)));
        std::copy(m.q.begin(), m.q.end(), x.begin() + static_cast<std::ptrdiff_t>(qi(0)));
        return x;
    }

    void unpack(std::span<const double> x, MfModel& m) const {
        m.mu = x[0];
        auto copy = [&](std::size_t from, std::vector<double>& to) {
            std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(from), to.size(), to.begin());
        };
        copy(bu(0), m.b_user);
        copy(bi(0), m.b_item);
        copy(pu(0), m.p);
        copy(qi(0), m.q);
    }

    double evaluate(std::span<const double> x, std::span<double> grad) const override {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv = 1.0 / static_cast<double>(edges_.size());
        double total = 0.0;
        for (const auto& e : edges_) {
            total += example(x, e, [&](std::size_t j, double v) { grad[j] += v * inv; });
        }
        return total * inv;
    }

    double value(std::span<const double> x) const override {
        double total = 0.0;
        for (const auto& e : edges_) total += example(x, e, [](std::size_t, double) {});
        return total / static_cast<double>(edges_.size());
    }

    void accumulate_gradient(std::span<const double> x, std::span<const std::size_t> batch,
                             SparseGradient& grad) const override {
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (const auto k : batch) {
            example(x, edges_[k], [&](std::size_t j, double v) { grad.add(j, v * inv); });
        }
    }

private:
    template <class Sink>
    double example(std::span<const double> x, const MfEdge& e, Sink&& sink) const {
        const auto pu0 = pu(e.user);
        const auto qi0 = qi(e.item);
        double z = x[0] + x[bu(e.user)] + x[bi(e.item)];
        double penalty = x[bu(e.user)] * x[bu(e.user)] + x[bi(e.item)] * x[bi(e.item)];
        for (std::size_t f = 0; f < factors_; ++f) {
            z += x[pu0 + f] * x[qi0 + f];
            penalty += x[pu0 + f] * x[pu0 + f] + x[qi0 + f] * x[qi0 + f];
        }
        const double d = (sigmoid(z) - e.y) / kLn2;
        sink(0, d);
        sink(bu(e.user), d + l2_ * x[bu(e.user)]);
        sink(bi(e.item), d + l2_ * x[bi(e.item)]);
        for (std::size_t f = 0; f < factors_; ++f) {
            sink(pu0 + f, d * x[qi0 + f] + l2_ * x[pu0 + f]);
            sink(qi0 + f, d * x[pu0 + f] + l2_ * x[qi0 + f]);
        }
        return logistic_log2_loss(z, e.y) + 0.5 * l2_ * penalty;
    }

    std::size_t users_;
    std::size_t items_;
    std::size_t factors_;
    std::vector<MfEdge> edges_;
    double l2_;
};

namespace detail {

inline MfModel fit_mf(const RatingGraph& graph, std::vector<MfEdge> edges, std::size_t factors,
                      const SgdConfig& config, const MfInit& init) {
    if (config.early_stopping()) {
        throw ConfigError("logistic mf trains for a fixed number of epochs; use fixed stopping");
    }
    if (edges.empty()) throw TrainingError("logistic mf: no ratings");
    MfModel model = initial_mf_model(graph, factors, init, config.seed);
    MfObjective objective(graph.num_users(), graph.num_items(), factors, std::move(edges), config.l2_penalty);
    auto result = sgd_minimize(objective, objective.pack(model), config);
    objective.unpack(result.params, model);
    return model;
}

}  // namespace detail

// Fits every observed rating of the graph, test users' ratings included;
// only gender labels are held out.
inline MfModel train_logistic_mf(const RatingGraph& graph, std::size_t factors, const SgdConfig& config,
                                 const MfInit& init = {}) {
    return detail::fit_mf(graph, mf_edges(graph), factors, config, init);
}

// Mean held-out edge log loss of k-fold cross-validation over ratings.
inline double mf_edge_cv_loss(const RatingGraph& graph, std::size_t factors, const SgdConfig& config,
                              const MfInit& init, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("mf_edge_cv_loss: k must be at least 2");
    auto edges = mf_edges(graph);
    if (edges.size() < k) throw ConfigError("mf_edge_cv_loss: fewer ratings than folds");
    Rng rng = make_rng(seed, 0xed9e);
    shuffle(std::span<MfEdge>(edges), rng);
    double total = 0.0;
    for (std::size_t fold = 0; fold < k; ++fold) {
        std::vector<MfEdge> fit;
        std::vector<MfEdge> held;
        for (std::size_t j = 0; j < edges.size(); ++j) (j % k == fold ? held : fit).push_back(edges[j]);
        const MfModel m = detail::fit_mf(graph, std::move(fit), factors, config, init);
        std::vector<EvalPair> pairs;
        for (const auto& e : held) {
            pairs.push_back({clip_probability(sigmoid(m.score(e.user, e.item))), e.y > 0.5 ? 1 : 0});
        }
        total += log_loss(pairs);
    }
    return total / static_cast<double>(k);
}

struct StackedGenderModel {
    double w = 0.0;       // bias
    double w_bias = 0.0;  // weight on the user's rating bias b_u
    std::vector<double> w_f;
};

// Mean base-2 log loss of sigmoid(w + w' b_u + sum_f w_f P_uf) over labeled
// users plus (l2/2)(w'^2 + |w_f|^2). Params: [w, w', w_f...].
class StackedGenderObjective final : public Objective {
public:
    StackedGenderObjective(const MfModel& mf, const LabelMap& labels, double l2) : dim_(2 + mf.factors), l2_(l2) {
        for (const auto& [user, g] : labels) {
            features_.push_back(stacked_features(mf, user));
            y_.push_back(as_target(g));
        }
    }

    static std::vector<double> stacked_features(const MfModel& mf, std::string_view user) {
        const auto u = mf.user_index(user);
        if (!u) throw Error("stacked gender model: user " + std::string(user) + " is not in the factorization");
        std::vector<double> x{mf.b_user[*u]};
        const auto pf = mf.user_factors(*u);
        x.insert(x.end(), pf.begin(), pf.end());
        return x;
    }

    std::size_t dimension() const override { return dim_; }
    std::size_t num_examples() const override { return y_.size(); }
    std::string description() const override { return "stacked gender log loss"; }

    double evaluate(std::span<const double> w, std::span<double> grad) const override {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv = 1.0 / static_cast<double>(y_.size());
        double total = 0.0;
        for (std::size_t n = 0; n < y_.size(); ++n) {
            total += example(w, n, [&](std::size_t j, double v) { grad[j] += v * inv; });
        }
        return total * inv;
    }

    void accumulate_gradient(std::span<const double> w, std::span<const std::size_t> batch,
                             SparseGradient& grad) const override {
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (const auto n : batch) example(w, n, [&](std::size_t j, double v) { grad.add(j, v * inv); });
    }

    static StackedGenderModel to_model(std::span<const double> w) {
        return {w[0], w[1], std::vector<double>(w.begin() + 2, w.end())};
    }

private:
    template <class Sink>
    double example(std::span<const double> w, std::size_t n, Sink&& sink) const {
        const auto& x = features_[n];
        double z = w[0];
        double penalty = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            z += w[j + 1] * x[j];
            penalty += w[j + 1] * w[j + 1];
        }
        const double d = (sigmoid(z) - y_[n]) / kLn2;
        sink(0, d);
        for (std::size_t j = 0; j < x.size(); ++j) sink(j + 1, d * x[j] + l2_ * w[j + 1]);
        return logistic_log2_loss(z, y_[n]) + 0.5 * l2_ * penalty;
    }

    std::size_t dim_;
    double l2_;
    std::vector<std::vector<double>> features_;
    std::vector<double> y_;
};

inline double predict_gender_mf(const StackedGenderModel& s, const MfModel& mf, std::string_view user) {
    const auto x = StackedGenderObjective::stacked_features(mf, user);
    double z = s.w + s.w_bias * x[0];
    for (std::size_t f = 0; f < s.w_f.size() && f + 1 < x.size(); ++f) z += s.w_f[f] * x[f + 1];
    return clip_probability(sigmoid(z));
}

inline StackedGenderModel train_stacked_gender(const MfModel& mf, const LabelMap& labels, const SgdConfig& config,
                                               const ValidationTarget* override_target = nullptr) {
    if (labels.empty()) throw TrainingError("stacked gender model: no labels");
    for (const auto& [user, g] : labels) {
        if (!mf.user_index(user)) throw Error("stacked gender model: labeled user " + user + " is not in the factorization");
    }
    auto plan = plan_stopping(labels, config, override_target);
    StackedGenderObjective objective(mf, plan.fit, config.l2_penalty);
    ValidationFn validate;
    if (plan.validation) {
        validate = [&](std::span<const double> w) {
            const auto model = StackedGenderObjective::to_model(w);
            std::vector<double> preds;
            for (const auto& u : plan.validation->users) preds.push_back(predict_gender_mf(model, mf, u));
            return plan.validation->score(preds);
        };
    }
    const double base = clip_probability(training_average(plan.fit).p);
    std::vector<double> init(objective.dimension(), 0.0);
    init[0] = std::log(base / (1.0 - base));
    return StackedGenderObjective::to_model(sgd_minimize(objective, std::move(init), config, validate).params);
}

}  // namespace relagg
