#pragma once

// Minibatch SGD over differentiable objectives, central-difference gradient
// checking, and k-fold cross-validation for hyperparameter selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "relagg/dataset.hpp"
#include "relagg/detail/math.hpp"
#include "relagg/detail/random.hpp"
#include "relagg/errors.hpp"
#include "relagg/metrics.hpp"

namespace relagg {

// Dense accumulator that remembers which coordinates were written, so a
// minibatch update costs O(touched) rather than O(dimension).
class SparseGradient {
public:
    explicit SparseGradient(std::size_t dimension) : values_(dimension, 0.0), mark_(dimension, 0) {}

    void add(std::size_t i, double v) {
        if (!mark_[i]) {
            mark_[i] = 1;
            touched_.push_back(i);
        }
        values_[i] += v;
    }

    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const std::size_t> touched() const { return touched_; }
    std::size_t dimension() const { return values_.size(); }

    void clear() {
        for (const auto i : touched_) {
            values_[i] = 0.0;
            mark_[i] = 0;
        }
        touched_.clear();
    }

private:
    std::vector<double> values_;
    std::vector<char> mark_;
    std::vector<std::size_t> touched_;
};

// An objective is the mean of per-example losses (each example may carry
// its own regularization term). evaluate() returns the full mean and its
// dense gradient; accumulate_gradient() adds the gradient of the mean over
// a minibatch, which is an unbiased estimate of the full gradient.
class Objective {
public:
    virtual ~Objective() = default;

    virtual std::size_t dimension() const = 0;
    virtual std::size_t num_examples() const = 0;
    virtual std::string description() const = 0;

    virtual double evaluate(std::span<const double> params, std::span<double> grad) const = 0;

    virtual double value(std::span<const double> params) const {
        std::vector<double> grad(dimension(), 0.0);
        return evaluate(params, grad);
    }

    virtual void accumulate_gradient(std::span<const double> params,
                                     std::span<const std::size_t> batch,
                                     SparseGradient& grad) const = 0;

    // Called once before scoring the initial point (epoch 0) and before each
    // training epoch. Stochastic objectives resample their state here.
    virtual void begin_epoch(std::size_t /*epoch*/) {}
};

// Single-example objective around a callable returning (loss, gradient).
class FunctionObjective final : public Objective {
public:
    using Fn = std::function<std::pair<double, std::vector<double>>(std::span<const double>)>;

    FunctionObjective(std::size_t dimension, Fn fn, std::string description = "function")
        : dimension_(dimension), fn_(std::move(fn)), description_(std::move(description)) {}

    std::size_t dimension() const override { return dimension_; }
    std::size_t num_examples() const override { return 1; }
    std::string description() const override { return description_; }

    double evaluate(std::span<const double> params, std::span<double> grad) const override {
        auto [loss, g] = fn_(params);
        if (g.size() != dimension_) throw TrainingError("objective returned wrong gradient length");
        std::copy(g.begin(), g.end(), grad.begin());
        return loss;
    }

    void accumulate_gradient(std::span<const double> params, std::span<const std::size_t>,
                             SparseGradient& grad) const override {
        auto [loss, g] = fn_(params);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g[i] != 0.0) grad.add(i, g[i]);
        }
    }

private:
    std::size_t dimension_;
    Fn fn_;
    std::string description_;
};

struct FixedEpochs {};

struct ValidationEarlyStop {
    std::size_t patience = 10;
};

using StoppingRule = std::variant<FixedEpochs, ValidationEarlyStop>;

struct SgdConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 500;
    std::size_t batch_size = 32;
    double l2_penalty = 0.0;
    std::uint64_t seed = 0;
    StoppingRule stopping = ValidationEarlyStop{};

    bool early_stopping() const { return std::holds_alternative<ValidationEarlyStop>(stopping); }

    void validate() const {
        if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
            throw ConfigError("sgd: learning_rate must be positive");
        }
        if (epochs == 0) throw ConfigError("sgd: epochs must be positive");
        if (batch_size == 0) throw ConfigError("sgd: batch_size must be positive");
        if (!(l2_penalty >= 0) || !std::isfinite(l2_penalty)) {
            throw ConfigError("sgd: l2_penalty must be nonnegative");
        }
        if (const auto* es = std::get_if<ValidationEarlyStop>(&stopping); es && es->patience == 0) {
            throw ConfigError("sgd: patience must be positive");
        }
    }
};

// Lower is better.
using ValidationFn = std::function<double(std::span<const double>)>;

struct SgdResult {
    std::vector<double> params;  // best-scoring iterate (initial point included)
    double best_score = 0.0;     // training loss or validation score of `params`
    std::size_t best_epoch = 0;  // 0 means the initial point
    std::size_t epochs_run = 0;
};

// Minibatch SGD. Under FixedEpochs the iterate with the lowest full training
// loss is returned; under ValidationEarlyStop the one with the lowest
// validation score, stopping after `patience` epochs without improvement.
inline SgdResult sgd_minimize(Objective& objective, std::vector<double> init, const SgdConfig& config,
                              const ValidationFn& validation = {}) {
    config.validate();
    if (init.size() != objective.dimension()) {
        throw TrainingError("sgd: init has length " + std::to_string(init.size()) +
                            ", objective dimension is " + std::to_string(objective.dimension()));
    }
    const bool early = config.early_stopping();
    if (early && !validation) throw ConfigError("sgd: early stopping needs a validation function");

    auto score = [&](std::span<const double> p, std::size_t epoch) {
        const double s = early ? validation(p) : objective.value(p);
        if (!std::isfinite(s)) {
            std::ostringstream msg;
            msg << "sgd on " << objective.description() << ": non-finite "
                << (early ? "validation score" : "loss") << " at epoch " << epoch;
            throw TrainingError(msg.str());
        }
        return s;
    };

    Rng rng = make_rng(config.seed, 0x5d);
    std::vector<std::size_t> order(objective.num_examples());
    std::iota(order.begin(), order.end(), std::size_t{0});

    SgdResult result;
    std::vector<double> params = std::move(init);
    objective.begin_epoch(0);
    result.params = params;
    result.best_score = score(params, 0);

    SparseGradient grad(objective.dimension());
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        objective.begin_epoch(epoch);
        shuffle(std::span<std::size_t>(order), rng);
        for (std::size_t start = 0, batch_no = 0; start < order.size();
             start += config.batch_size, ++batch_no) {
            const auto len = std::min(config.batch_size, order.size() - start);
            grad.clear();
            objective.accumulate_gradient(params, std::span<const std::size_t>(order).subspan(start, len),
                                          grad);
            for (const auto i : grad.touched()) {
                const double g = grad[i];
                if (!std::isfinite(g)) {
                    std::ostringstream msg;
                    msg << "sgd on " << objective.description() << ": non-finite gradient at epoch "
                        << epoch << ", batch " << batch_no << ", coordinate " << i;
                    throw TrainingError(msg.str());
                }
                params[i] -= config.learning_rate * g;
            }
        }
        result.epochs_run = epoch;
        const double s = score(params, epoch);
        if (s < result.best_score) {
            result.best_score = s;
            result.best_epoch = epoch;
            result.params = params;
            since_best = 0;
        } else if (early && ++since_best >= std::get<ValidationEarlyStop>(config.stopping).patience) {
            break;
        }
    }
    return result;
}

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const Objective& objective, std::span<const double> point, double h = 1e-5) {
    if (!(h > 0)) throw ConfigError("grad_check: step must be positive");
    std::vector<double> analytic(objective.dimension(), 0.0);
    std::vector<double> x(point.begin(), point.end());
    const double f0 = objective.evaluate(x, analytic);
    if (!std::isfinite(f0)) throw TrainingError("grad_check: non-finite objective at the point");
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = objective.value(x);
        x[i] = saved - h;
        const double fm = objective.value(x);
        x[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw TrainingError("grad_check: non-finite objective near coordinate " + std::to_string(i));
        }
        const double numeric = (fp - fm) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
    }
    return worst;
}

struct FoldPlan {
    std::size_t k = 0;
    std::map<std::string, std::size_t> assignments;

    std::vector<std::string> members(std::size_t fold) const {
        std::vector<std::string> out;
        for (const auto& [user, f] : assignments) {
            if (f == fold) out.push_back(user);
        }
        return out;
    }

    std::vector<std::size_t> fold_sizes() const {
        std::vector<std::size_t> sizes(k, 0);
        for (const auto& [user, f] : assignments) ++sizes[f];
        return sizes;
    }
};

// Shuffles the (sorted) users with a seeded generator and deals them round
// robin, so fold sizes differ by at most one.
inline FoldPlan kfold_plan(std::span<const std::string> users, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold_plan: k must be at least 2");
    std::vector<std::string> order(users.begin(), users.end());
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    if (order.size() < k) {
        throw ConfigError("kfold_plan: " + std::to_string(order.size()) + " users for " +
                          std::to_string(k) + " folds");
    }
    Rng rng = make_rng(seed, 0xf01d);
    shuffle(std::span<std::string>(order), rng);
    FoldPlan plan{k, {}};
    for (std::size_t j = 0; j < order.size(); ++j) plan.assignments.emplace(order[j], j % k);
    return plan;
}

inline FoldPlan kfold_plan(const LabelMap& labels, std::size_t k, std::uint64_t seed) {
    std::vector<std::string> users;
    for (const auto& [u, g] : labels) users.push_back(u);
    return kfold_plan(users, k, seed);
}

enum class TuneMetric { LogLoss, Mse };

inline double score_predictions(std::span<const double> predictions, std::span<const std::string> users,
                                const LabelMap& labels, TuneMetric metric) {
    std::vector<EvalPair> pairs;
    pairs.reserve(users.size());
    for (std::size_t j = 0; j < users.size(); ++j) {
        pairs.push_back({clip_probability(predictions[j]), labels.at(users[j]) == Gender::Female ? 1 : 0});
    }
    return metric == TuneMetric::LogLoss ? log_loss(pairs) : mse(pairs);
}

template <class Hyper>
struct TuneResult {
    Hyper best{};
    std::size_t best_index = 0;
    std::vector<double> scores;  // mean held-out metric per grid point
};

// Picks the grid point with the lowest mean held-out metric; ties go to the
// earliest grid entry. fit_predict(hyper, fold, fold_train_labels,
// heldout_users) trains on the fold's training labels and returns one
// probability per held-out user. Folds run concurrently; each fold visits
// the grid in order on its own thread.
template <class Hyper, class FitPredict>
TuneResult<Hyper> tune(std::span<const Hyper> grid, const LabelMap& labels, const FoldPlan& plan,
                       TuneMetric metric, FitPredict&& fit_predict, bool parallel = true) {
    if (grid.empty()) throw ConfigError("tune: empty grid");
    std::vector<std::vector<double>> fold_scores(plan.k, std::vector<double>(grid.size(), 0.0));

    auto run_fold = [&](std::size_t fold) {
        LabelMap fold_train;
        std::vector<std::string> heldout;
        for (const auto& [user, f] : plan.assignments) {
            const auto it = labels.find(user);
            if (it == labels.end()) throw ConfigError("tune: fold plan user without label: " + user);
            if (f == fold) {
                heldout.push_back(user);
            } else {
                fold_train.emplace(user, it->second);
            }
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
            try {
                const std::vector<double> preds = fit_predict(grid[g], fold, fold_train, heldout);
                if (preds.size() != heldout.size()) throw TrainingError("wrong number of predictions");
                fold_scores[fold][g] = score_predictions(preds, heldout, labels, metric);
            } catch (const std::exception& e) {
                throw TrainingError("tune: grid point " + std::to_string(g) + ", fold " +
                                    std::to_string(fold) + ": " + e.what());
            }
        }
    };

    if (parallel) {
        std::vector<std::future<void>> jobs;
        for (std::size_t f = 0; f < plan.k; ++f) jobs.push_back(std::async(std::launch::async, run_fold, f));
        std::exception_ptr first_error;
        for (auto& job : jobs) {
            try {
                job.get();
            } catch (...) {
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) std::rethrow_exception(first_error);
    } else {
        for (std::size_t f = 0; f < plan.k; ++f) run_fold(f);
    }

    TuneResult<Hyper> result;
    result.scores.assign(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t f = 0; f < plan.k; ++f) result.scores[g] += fold_scores[f][g];
        result.scores[g] /= static_cast<double>(plan.k);
    }
    result.best_index = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (result.scores[g] < result.scores[result.best_index]) result.best_index = g;
    }
    result.best = grid[result.best_index];
    return result;
}

// Deterministic 80/20 split of labeled users for early stopping.
struct HoldoutSplit {
    LabelMap fit;
    LabelMap validation;
};

inline HoldoutSplit holdout_split(const LabelMap& labels, double validation_fraction, std::uint64_t seed) {
    std::vector<std::string> users;
    for (const auto& [u, g] : labels) users.push_back(u);
    Rng rng = make_rng(seed, 0x4a11);
    shuffle(std::span<std::string>(users), rng);
    auto n_val = static_cast<std::size_t>(std::round(validation_fraction * static_cast<double>(users.size())));
    if (users.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, users.size() - 1);
    else n_val = 0;
    HoldoutSplit out;
    for (std::size_t j = 0; j < users.size(); ++j) {
        (j < n_val ? out.validation : out.fit).emplace(users[j], labels.at(users[j]));
    }
    return out;
}

// Users whose predictions drive early stopping, and the score (lower is
// better) of a prediction vector aligned with `users`.
struct ValidationTarget {
    std::vector<std::string> users;
    std::function<double(std::span<const double>)> score;
};

inline ValidationTarget labeled_validation(const LabelMap& labels) {
    ValidationTarget target;
    for (const auto& [u, g] : labels) target.users.push_back(u);
    target.score = [labels, users = target.users](std::span<const double> preds) {
        return score_predictions(preds, users, labels, TuneMetric::LogLoss);
    };
    return target;
}

// Resolves which labels a gradient-trained model fits and what it stops on.
// An override (test-set stopping for replication runs) takes precedence and
// leaves every label for fitting; otherwise early stopping holds out 20% of
// the labeled users.
struct StoppingPlan {
    LabelMap fit;
    std::optional<ValidationTarget> validation;
};

inline StoppingPlan plan_stopping(const LabelMap& labels, const SgdConfig& config,
                                  const ValidationTarget* override_target) {
    if (override_target) return {labels, *override_target};
    if (!config.early_stopping()) return {labels, std::nullopt};
    if (labels.size() < 2) throw ConfigError("early stopping needs at least two labeled users");
    auto split = holdout_split(labels, 0.2, config.seed);
    auto target = labeled_validation(split.validation);
    return {std::move(split.fit), std::move(target)};
}

}  // namespace relagg
