#pragma once

// Constant baselines and the two models that see a user only through the
// number of positive and negative ratings: the logistic count model and
// noisy-OR.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "relagg/dataset.hpp"
#include "relagg/detail/math.hpp"
#include "relagg/errors.hpp"
#include "relagg/optim.hpp"

namespace relagg {

struct CountFeatures {
    std::size_t npr = 0;  // positive (>= 4) ratings
    std::size_t nnr = 0;  // negative (< 4) ratings

    bool operator==(const CountFeatures&) const = default;
};

inline CountFeatures count_features(std::span<const Edge> edges) {
    CountFeatures f;
    for (const auto& e : edges) (e.polarity == Polarity::Positive ? f.npr : f.nnr) += 1;
    return f;
}

inline CountFeatures count_features(const RatingGraph& graph, std::string_view user) {
    return count_features(graph.user_edges(user));
}

struct ConstantPredictor {
    double p = 0.5;
    double predict() const { return p; }
};

inline ConstantPredictor predict_constant(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("predict_constant: p must lie in [0,1]");
    return {p};
}

// Fraction of Female users among the training labels.
inline ConstantPredictor training_average(const LabelMap& labels) {
    if (labels.empty()) throw TrainingError("training_average: no labels");
    double female = 0;
    for (const auto& [u, g] : labels) female += as_target(g);
    return {female / static_cast<double>(labels.size())};
}

struct CountSigmoidModel {
    double w0 = 0.0;
    double w1 = 0.0;  // per positive rating
    double w2 = 0.0;  // per negative rating
};

inline double predict_count_sigmoid(const CountSigmoidModel& m, CountFeatures f) {
    return clip_probability(sigmoid(m.w0 + m.w1 * static_cast<double>(f.npr) +
                                    m.w2 * static_cast<double>(f.nnr)));
}

// Parameters are unconstrained reals: a "probability" may be negative.
struct NoisyOrModel {
    double w0 = 0.0;
    double w1 = 0.0;
    double w2 = 0.0;
};

// 1 - (1-w0)(1-w1)^npr (1-w2)^nnr, evaluated as a sum of logs and clipped.
inline double predict_noisy_or(const NoisyOrModel& m, CountFeatures f) {
    double log_q = 0.0;
    auto factor = [&](double w, std::size_t exponent) {
        if (exponent == 0) return;
        const double base = 1.0 - w;
        if (!(base > 0.0)) {
            throw Error("predict_noisy_or: nonpositive base 1 - w = " + std::to_string(base) +
                        " with exponent " + std::to_string(exponent));
        }
        log_q += static_cast<double>(exponent) * std::log(base);
    };
    factor(m.w0, 1);
    factor(m.w1, f.npr);
    factor(m.w2, f.nnr);
    return clip_probability(1.0 - std::exp(log_q));
}

namespace detail {

struct CountExample {
    double x_pos = 0;  // scaled counts
    double x_neg = 0;
    double y = 0;
};

inline double mean_degree(const RatingGraph& graph, const LabelMap& labels) {
    double total = 0;
    for (const auto& [u, g] : labels) total += static_cast<double>(graph.user_edges(u).size());
    return labels.empty() ? 1.0 : std::max(1.0, total / static_cast<double>(labels.size()));
}

// Shared plumbing for the three-parameter count models. Counts are divided
// by `scale` (the mean training degree) so one learning rate suits both the
// bias and the per-rating weights; models convert back to raw-count units.
class CountObjectiveBase : public Objective {
public:
    CountObjectiveBase(const RatingGraph& graph, const LabelMap& labels, double scale, double l2)
        : scale_(scale), l2_(l2) {
        for (const auto& [u, g] : labels) {
            const auto f = count_features(graph, u);
            examples_.push_back({static_cast<double>(f.npr) / scale, static_cast<double>(f.nnr) / scale,
                                 as_target(g)});
        }
    }

    std::size_t dimension() const override { return 3; }
    std::size_t num_examples() const override { return examples_.size(); }
    double scale() const { return scale_; }

    double evaluate(std::span<const double> params, std::span<double> grad) const override {
        std::fill(grad.begin(), grad.end(), 0.0);
        double total = 0.0;
        double g[3];
        for (const auto& ex : examples_) {
            total += example(params, ex, g);
            for (int j = 0; j < 3; ++j) grad[j] += g[j];
        }
        const double n = static_cast<double>(examples_.size());
        for (auto& v : grad) v /= n;
        return total / n;
    }

    void accumulate_gradient(std::span<const double> params, std::span<const std::size_t> batch,
                             SparseGradient& grad) const override {
        double g[3];
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (const auto idx : batch) {
            example(params, examples_[idx], g);
            for (std::size_t j = 0; j < 3; ++j) grad.add(j, g[j] * inv);
        }
    }

protected:
    // Loss of one example including its L2 share; writes the gradient to g.
    virtual double example(std::span<const double> params, const CountExample& ex, double* g) const = 0;

    double l2() const { return l2_; }

private:
    std::vector<CountExample> examples_;
    double scale_;
    double l2_;
};

}  // namespace detail

// Mean base-2 log loss of sigmoid(b + v1 x_pos + v2 x_neg), plus
// (l2/2)(v1^2 + v2^2), over labeled users. Params: [b, v1, v2].
class CountSigmoidObjective final : public detail::CountObjectiveBase {
public:
    using CountObjectiveBase::CountObjectiveBase;

    std::string description() const override { return "count-sigmoid log loss"; }

    CountSigmoidModel to_model(std::span<const double> p) const {
        return {p[0], p[1] / scale(), p[2] / scale()};
    }

protected:
    double example(std::span<const double> p, const detail::CountExample& ex, double* g) const override {
        const double z = p[0] + p[1] * ex.x_pos + p[2] * ex.x_neg;
        const double d = (sigmoid(z) - ex.y) / kLn2;
        g[0] = d;
        g[1] = d * ex.x_pos + l2() * p[1];
        g[2] = d * ex.x_neg + l2() * p[2];
        return logistic_log2_loss(z, ex.y) + 0.5 * l2() * (p[1] * p[1] + p[2] * p[2]);
    }
};

// Noisy-OR in log-survival form: log q = t0 + t1 x_pos + t2 x_neg with
// q = (1-w0)(1-w1)^npr(1-w2)^nnr, so every real parameter vector is a valid
// model. The probability 1 - q is clipped into [eps, 1 - eps] inside the
// loss, matching prediction. Params: [t0, t1, t2].
class NoisyOrObjective final : public detail::CountObjectiveBase {
public:
    using CountObjectiveBase::CountObjectiveBase;

    std::string description() const override { return "noisy-or log loss"; }

    NoisyOrModel to_model(std::span<const double> t) const {
        return {-std::expm1(t[0]), -std::expm1(t[1] / scale()), -std::expm1(t[2] / scale())};
    }

protected:
    double example(std::span<const double> t, const detail::CountExample& ex, double* g) const override {
        const double s = t[0] + t[1] * ex.x_pos + t[2] * ex.x_neg;
        const double q = std::exp(s);
        const double raw = 1.0 - q;
        const double p = clip_probability(raw);
        const double loss = -(ex.y * std::log2(p) + (1.0 - ex.y) * std::log2(1.0 - p));
        // dp/ds = -q inside the clip range, 0 outside
        const double dp_ds = (raw == p) ? -q : 0.0;
        const double dl_dp = (-ex.y / p + (1.0 - ex.y) / (1.0 - p)) / kLn2;
        const double d = dl_dp * dp_ds;
        g[0] = d;
        g[1] = d * ex.x_pos + l2() * t[1];
        g[2] = d * ex.x_neg + l2() * t[2];
        return loss + 0.5 * l2() * (t[1] * t[1] + t[2] * t[2]);
    }
};

struct CountTrainingInfo {
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
};

namespace detail {

template <class Obj, class Model, class Predict>
Model train_count_model(const RatingGraph& graph, const LabelMap& labels, const SgdConfig& config,
                        const ValidationTarget* override_target, std::vector<double> init_fn(double),
                        Predict predict, CountTrainingInfo* info) {
    if (labels.empty()) throw TrainingError("count model: no labels");
    auto plan = plan_stopping(labels, config, override_target);
    Obj objective(graph, plan.fit, mean_degree(graph, plan.fit), config.l2_penalty);
    const double base = clip_probability(training_average(plan.fit).p);

    ValidationFn validate;
    if (plan.validation) {
        std::vector<CountFeatures> feats;
        for (const auto& u : plan.validation->users) feats.push_back(count_features(graph, u));
        validate = [&, feats](std::span<const double> params) {
            const Model m = objective.to_model(params);
            std::vector<double> preds;
            preds.reserve(feats.size());
            for (const auto& f : feats) preds.push_back(predict(m, f));
            return plan.validation->score(preds);
        };
    }
    auto result = sgd_minimize(objective, init_fn(base), config, validate);
    if (info) *info = {result.best_epoch, result.epochs_run};
    return objective.to_model(result.params);
}

inline std::vector<double> sigmoid_init(double base) { return {std::log(base / (1.0 - base)), 0.0, 0.0}; }
inline std::vector<double> noisy_or_init(double base) { return {std::log1p(-base), 0.0, 0.0}; }

}  // namespace detail

inline CountSigmoidModel train_count_sigmoid(const RatingGraph& graph, const LabelMap& labels,
                                             const SgdConfig& config,
                                             const ValidationTarget* override_target = nullptr,
                                             CountTrainingInfo* info = nullptr) {
    return detail::train_count_model<CountSigmoidObjective, CountSigmoidModel>(
        graph, labels, config, override_target, detail::sigmoid_init,
        [](const CountSigmoidModel& m, CountFeatures f) { return predict_count_sigmoid(m, f); }, info);
}

inline NoisyOrModel train_noisy_or(const RatingGraph& graph, const LabelMap& labels, const SgdConfig& config,
                                   const ValidationTarget* override_target = nullptr,
                                   CountTrainingInfo* info = nullptr) {
    return detail::train_count_model<NoisyOrObjective, NoisyOrModel>(
        graph, labels, config, override_target, detail::noisy_or_init,
        [](const NoisyOrModel& m, CountFeatures f) { return predict_noisy_or(m, f); }, info);
}

}  // namespace relagg
