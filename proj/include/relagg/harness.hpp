#pragma once

// Experiment orchestration: data preparation, method dispatch with
// cross-validated hyperparameters, evaluation against held-out labels,
// and report rendering.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "relagg/count_aggregators.hpp"
#include "relagg/dataset.hpp"
#include "relagg/errors.hpp"
#include "relagg/factorization.hpp"
#include "relagg/metrics.hpp"
#include "relagg/neighborhood.hpp"
#include "relagg/optim.hpp"
#include "relagg/rlr_dropout.hpp"

namespace relagg {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportFormatVersion = "relagg-report/1";

struct DatasetSpec {
    std::string ratings;
    std::string users;
    std::string format = "ml-100k";  // "ml-100k" (tab + pipe) or "ml-1m" ("::")
    std::optional<std::int64_t> rating_cutoff;
    std::optional<std::int64_t> label_cutoff;
    std::optional<double> rating_fraction;
    std::optional<double> label_fraction;

    bool operator==(const DatasetSpec&) const = default;
};

struct ExperimentConfig {
    DatasetSpec data;
    std::string method;
    Json params = Json::object();  // hyperparameters; arrays are CV grids
    std::uint64_t seed = 1;
    std::size_t folds = 5;
    bool paper_stopping = false;  // stop gradient training on test loss (replication only)
};

struct EvalReport {
    std::string method;
    double mse = 0.0;
    double log_loss = 0.0;
    Json hyperparameters = Json::object();
    std::size_t n_test = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
    std::string format_version = kReportFormatVersion;
    Json details = Json::object();  // cv scores, fitted parameters, label audit, data summary
};

// Test-set labels. Every read is counted by purpose so a run can prove
// that only evaluation (and, when explicitly requested, test-loss
// stopping) looked at them.
class HeldOutLabels {
public:
    enum class Purpose { Evaluation, PaperStopping };

    explicit HeldOutLabels(LabelMap labels) : labels_(std::move(labels)) {}

    Gender reveal(const std::string& user, Purpose purpose) const {
        (purpose == Purpose::Evaluation ? evaluation_reads_ : stopping_reads_).fetch_add(1);
        const auto it = labels_.find(user);
        if (it == labels_.end()) throw DataError("no held-out label for user " + user);
        return it->second;
    }

    std::size_t size() const { return labels_.size(); }
    std::size_t evaluation_reads() const { return evaluation_reads_.load(); }
    std::size_t stopping_reads() const { return stopping_reads_.load(); }

private:
    LabelMap labels_;
    mutable std::atomic<std::size_t> evaluation_reads_{0};
    mutable std::atomic<std::size_t> stopping_reads_{0};
};

// What a method may see: the evidence graph and training labels only.
struct TrainingView {
    const RatingGraph& graph;
    const LabelMap& train_labels;
    std::span<const std::string> test_users;
    std::uint64_t seed;
    std::size_t folds;
};

struct PreparedData {
    RatingGraph graph;
    LabelMap train_labels;
    std::vector<std::string> test_users;
    std::shared_ptr<const HeldOutLabels> held_out;
    Json summary = Json::object();
};

namespace detail {

// Runs fn, prefixing any relagg error with the stage name and keeping its type.
template <class Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    const std::string prefix = stage + ": ";
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const TrainingError& e) {
        throw TrainingError(prefix + e.what());
    } catch (const Error& e) {
        throw TrainingError(prefix + e.what());
    }
}

}  // namespace detail

inline PreparedData prepare_data(const DatasetSpec& spec) {
    RatingFormat rf{};
    LabelFormat lf{};
    if (spec.format == "ml-100k") {
        rf = RatingFormat::Tab;
        lf = LabelFormat::Ml100k;
    } else if (spec.format == "ml-1m") {
        rf = RatingFormat::DoubleColon;
        lf = LabelFormat::Ml1m;
    } else {
        throw ConfigError("unknown data format '" + spec.format + "' (expected ml-100k or ml-1m)");
    }
    auto [records, labels] = detail::in_stage("ingest", [&] {
        return std::make_pair(load_ratings(spec.ratings, rf), load_user_labels(spec.users, lf));
    });

    std::int64_t rating_cutoff = 0;
    std::int64_t label_cutoff = 0;
    if (spec.rating_cutoff && spec.label_cutoff) {
        rating_cutoff = *spec.rating_cutoff;
        label_cutoff = *spec.label_cutoff;
    } else if (spec.rating_fraction && spec.label_fraction) {
        std::tie(rating_cutoff, label_cutoff) = detail::in_stage(
            "split", [&] { return fraction_cutoffs(records, *spec.rating_fraction, *spec.label_fraction); });
    } else {
        throw ConfigError("data: give rating_cutoff and label_cutoff, or rating_fraction and label_fraction");
    }

    auto split = detail::in_stage("split", [&] { return temporal_split(records, labels, rating_cutoff, label_cutoff); });

    PreparedData out;
    std::size_t female = 0;
    for (const auto& [u, g] : split.train_labels) female += g == Gender::Female;
    out.summary = Json{{"ratings", spec.ratings},
                       {"rating_cutoff", rating_cutoff},
                       {"label_cutoff", label_cutoff},
                       {"n_ratings", split.train_graph.num_edges()},
                       {"n_users", split.train_graph.num_users()},
                       {"n_items", split.train_graph.num_items()},
                       {"n_train", split.train_labels.size()},
                       {"n_test", split.test_users.size()},
                       {"train_female_fraction",
                        split.train_labels.empty() ? 0.0
                                                   : static_cast<double>(female) / split.train_labels.size()}};
    out.graph = std::move(split.train_graph);
    out.train_labels = std::move(split.train_labels);
    out.test_users = std::move(split.test_users);
    out.held_out = std::make_shared<const HeldOutLabels>(std::move(split.test_labels));
    return out;
}

// ---------------------------------------------------------------------------
// Hyperparameters

namespace detail {

inline Json sgd_defaults() {
    return Json{{"learning_rate", 0.05}, {"epochs", 500}, {"batch_size", 32}, {"stopping", "early"}, {"patience", 10}};
}

inline Json merged(Json base, const Json& extra) {
    for (const auto& [k, v] : extra.items()) base[k] = v;
    return base;
}

inline const std::vector<double>& pseudo_count_grid() {
    static const std::vector<double> grid{0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
    return grid;
}

inline Json method_defaults(const std::string& method) {
    if (method == "predict-half") return Json{{"p", 0.5}};
    if (method == "train-average") return Json::object();
    if (method == "count-sigmoid" || method == "noisy-or") {
        // Three convex parameters: train to convergence rather than stop early.
        return merged(sgd_defaults(), Json{{"l2", 0.0}, {"stopping", "fixed"}});
    }
    if (method == "p1" || method == "p2") {
        return Json{{"pseudo_count", pseudo_count_grid()}, {"leave_one_out", true}, {"polarity_aware", false}};
    }
    if (method == "nb-limited") {
        return Json{{"k", {1, 2, 5, 10, 20, 50}}, {"smoothing", 1.0}, {"n_samples", 30}};
    }
    if (method == "rlr") return merged(sgd_defaults(), Json{{"l2", {1e-4, 1e-3, 1e-2}}});
    if (method == "rlr-dropout") {
        return merged(sgd_defaults(), Json{{"l2", {1e-4, 1e-3, 1e-2}},
                                           {"k_train", 10},
                                           {"k_test", "same"},
                                           {"n_samples", 30}});
    }
    if (method == "mf-stacked") {
        return merged(sgd_defaults(), Json{{"latent_dim", 8},
                                           {"init", "gender-seeded"},
                                           {"mf_l2", {0.01, 0.03}},
                                           {"mf_learning_rate", 0.05},
                                           {"mf_epochs", 20},
                                           {"mf_batch_size", 1},
                                           {"lr_l2", {0.0, 0.001, 0.01, 0.1, 1.0}}});
    }
    throw ConfigError("unknown method '" + method + "'");
}

inline Json resolve_params(const std::string& method, const Json& params) {
    Json out = method_defaults(method);
    if (!params.is_object()) throw ConfigError(method + ": parameters must be an object");
    for (const auto& [k, v] : params.items()) {
        if (!out.contains(k)) throw ConfigError(method + ": unknown parameter '" + k + "'");
        out[k] = v;
    }
    return out;
}

// Cartesian product over array-valued entries, first key varying slowest.
inline std::vector<Json> expand_grid(const Json& params, const std::vector<std::string>& axes) {
    std::vector<Json> points{params};
    for (const auto& key : axes) {
        const auto& value = params.at(key);
        if (!value.is_array()) continue;
        if (value.empty()) throw ConfigError("empty grid for '" + key + "'");
        std::vector<Json> next;
        for (const auto& p : points) {
            for (const auto& v : value) {
                Json q = p;
                q[key] = v;
                next.push_back(std::move(q));
            }
        }
        points = std::move(next);
    }
    return points;
}

template <class T>
T param(const Json& hp, const char* key) {
    try {
        return hp.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("parameter '") + key + "': " + e.what());
    }
}

inline SgdConfig sgd_from(const Json& hp, std::uint64_t seed, const char* l2_key = "l2") {
    SgdConfig c;
    c.learning_rate = param<double>(hp, "learning_rate");
    c.epochs = param<std::size_t>(hp, "epochs");
    c.batch_size = param<std::size_t>(hp, "batch_size");
    c.l2_penalty = hp.contains(l2_key) ? param<double>(hp, l2_key) : 0.0;
    c.seed = seed;
    const auto stopping = param<std::string>(hp, "stopping");
    if (stopping == "early") {
        c.stopping = ValidationEarlyStop{param<std::size_t>(hp, "patience")};
    } else if (stopping == "fixed") {
        c.stopping = FixedEpochs{};
    } else {
        throw ConfigError("stopping must be 'early' or 'fixed'");
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Methods

struct Fitted {
    std::function<double(const std::string&)> predict;
    Json model = Json::object();
};

using FitFn = std::function<Fitted(const Json& hp, const LabelMap& labels, const ValidationTarget* stop_override)>;

struct MethodPlan {
    std::vector<std::string> grid_axes;  // keys that may carry CV grids
    FitFn fit;
};

inline MethodPlan simple_method(const std::string& method, const TrainingView& view) {
    const RatingGraph& graph = view.graph;
    const std::uint64_t seed = view.seed;

    if (method == "predict-half") {
        return {{}, [](const Json& hp, const LabelMap&, const ValidationTarget*) {
                    const auto c = predict_constant(param<double>(hp, "p"));
                    return Fitted{[c](const std::string&) { return c.predict(); }, Json{{"p", c.p}}};
                }};
    }
    if (method == "train-average") {
        return {{}, [](const Json&, const LabelMap& labels, const ValidationTarget*) {
                    const auto c = training_average(labels);
                    return Fitted{[c](const std::string&) { return c.predict(); }, Json{{"p", c.p}}};
                }};
    }
    if (method == "count-sigmoid") {
        return {{"l2"}, [&graph, seed](const Json& hp, const LabelMap& labels, const ValidationTarget* stop) {
                    CountTrainingInfo info;
                    const auto m = train_count_sigmoid(graph, labels, sgd_from(hp, mix_seed(seed, 11)), stop, &info);
                    return Fitted{[m, &graph](const std::string& u) {
                                      return predict_count_sigmoid(m, count_features(graph, u));
                                  },
                                  Json{{"w0", m.w0}, {"w1", m.w1}, {"w2", m.w2}, {"best_epoch", info.best_epoch},
                                       {"epochs_run", info.epochs_run}}};
                }};
    }
    if (method == "noisy-or") {
        return {{"l2"}, [&graph, seed](const Json& hp, const LabelMap& labels, const ValidationTarget* stop) {
                    CountTrainingInfo info;
                    const auto m = train_noisy_or(graph, labels, sgd_from(hp, mix_seed(seed, 12)), stop, &info);
                    return Fitted{[m, &graph](const std::string& u) {
                                      return predict_noisy_or(m, count_features(graph, u));
                                  },
                                  Json{{"w0", m.w0}, {"w1", m.w1}, {"w2", m.w2}, {"best_epoch", info.best_epoch},
                                       {"epochs_run", info.epochs_run}}};
                }};
    }
    if (method == "p1" || method == "p2") {
        const bool pooled = method == "p1";
        const LabelMap* all_labels = &view.train_labels;
        return {{"pseudo_count", "leave_one_out", "polarity_aware"},
                [&graph, pooled, all_labels](const Json& hp, const LabelMap& labels, const ValidationTarget*) {
                    const double c = param<double>(hp, "pseudo_count");
                    NeighborhoodOptions opt{param<bool>(hp, "leave_one_out"), param<bool>(hp, "polarity_aware")};
                    // Leave-one-out mode counts every training label and removes
                    // the predicted user's own; otherwise only `labels` count.
                    auto stats = std::make_shared<ItemGenderStats>(graph, opt.leave_one_out ? *all_labels : labels);
                    std::function<double(const std::string&)> f;
                    if (pooled) {
                        f = [stats, &graph, c, opt](const std::string& u) { return predict_p1(*stats, graph, u, c, opt); };
                    } else {
                        f = [stats, &graph, c, opt](const std::string& u) { return predict_p2(*stats, graph, u, c, opt); };
                    }
                    return Fitted{f, Json{{"pseudo_count", c}}};
                }};
    }
    if (method == "nb-limited") {
        return {{"k", "smoothing", "n_samples"},
                [&graph, seed](const Json& hp, const LabelMap& labels, const ValidationTarget*) {
                    auto m = std::make_shared<NaiveBayesModel>(train_naive_bayes(graph, labels, param<double>(hp, "smoothing")));
                    const auto k = param<std::size_t>(hp, "k");
                    const auto n = param<std::size_t>(hp, "n_samples");
                    const auto s = mix_seed(seed, 13);
                    return Fitted{[m, &graph, k, n, s](const std::string& u) {
                                      return predict_nb_limited(*m, graph, u, k, n, s);
                                  },
                                  Json{{"prior_female", m->prior_female}}};
                }};
    }
    if (method == "rlr" || method == "rlr-dropout") {
        const bool dropout = method == "rlr-dropout";
        std::vector<std::string> axes{"l2", "learning_rate", "epochs"};
        if (dropout) axes.insert(axes.end(), {"k_train", "k_test", "n_samples"});
        return {axes, [&graph, seed, dropout](const Json& hp, const LabelMap& labels, const ValidationTarget* stop) {
                    const auto sgd = sgd_from(hp, mix_seed(seed, 14));
                    RlrTrainingInfo info;
                    auto out = std::make_shared<PerItemRlrModel>();
                    Json model;
                    if (!dropout) {
                        *out = train_rlr(graph, labels, sgd, stop, &info);
                        model = Json{{"w0", out->w0}, {"weight_norm2", out->squared_norm()},
                                     {"best_epoch", info.best_epoch}, {"epochs_run", info.epochs_run}};
                        return Fitted{[out, &graph](const std::string& u) { return predict_rlr(*out, graph, u); }, model};
                    }
                    DropoutConfig dc;
                    dc.k_train = param<std::size_t>(hp, "k_train");
                    dc.k_test = hp.at("k_test").is_string() ? dc.k_train : param<std::size_t>(hp, "k_test");
                    if (hp.at("k_test").is_string() && hp.at("k_test") != "same") {
                        throw ConfigError("k_test must be an integer or \"same\"");
                    }
                    dc.n_test_samples = param<std::size_t>(hp, "n_samples");
                    dc.seed = mix_seed(seed, 15);
                    *out = train_rlr_dropout(graph, labels, sgd, dc, stop, &info);
                    model = Json{{"w0", out->w0}, {"weight_norm2", out->squared_norm()}, {"k_test", dc.k_test},
                                 {"best_epoch", info.best_epoch}, {"epochs_run", info.epochs_run}};
                    return Fitted{[out, &graph, dc](const std::string& u) {
                                      return predict_rlr_dropout(*out, graph, u, dc);
                                  },
                                  model};
                }};
    }
    throw ConfigError("unknown method '" + method + "'");
}

inline std::vector<double> predict_all(const Fitted& f, std::span<const std::string> users) {
    std::vector<double> out;
    out.reserve(users.size());
    for (const auto& u : users) out.push_back(f.predict(u));
    return out;
}

struct MethodResult {
    std::vector<double> predictions;  // aligned with test users
    Json chosen = Json::object();
    Json details = Json::object();
};

inline Json cv_summary(const std::vector<Json>& grid, const std::vector<double>& scores, const std::vector<std::string>& axes) {
    Json rows = Json::array();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        Json point = Json::object();
        for (const auto& a : axes) {
            if (grid[g].contains(a)) point[a] = grid[g][a];
        }
        rows.push_back(Json{{"point", point}, {"log_loss", scores[g]}});
    }
    return rows;
}

inline MethodResult run_simple_method(const std::string& method, const Json& params, const TrainingView& view,
                                      const ValidationTarget* stop_override) {
    const auto plan = simple_method(method, view);
    const auto grid = expand_grid(params, plan.grid_axes);
    MethodResult result;
    Json chosen = grid.front();
    if (grid.size() > 1) {
        const auto folds = kfold_plan(view.train_labels, view.folds, mix_seed(view.seed, 21));
        const auto tuned = in_stage("tune", [&] {
            return tune(std::span<const Json>(grid), view.train_labels, folds, TuneMetric::LogLoss,
                        [&](const Json& hp, std::size_t, const LabelMap& fold_train, const std::vector<std::string>& held) {
                            return predict_all(plan.fit(hp, fold_train, nullptr), held);
                        });
        });
        chosen = tuned.best;
        result.details["cv"] = cv_summary(grid, tuned.scores, plan.grid_axes);
    }
    const auto fitted = in_stage("train", [&] { return plan.fit(chosen, view.train_labels, stop_override); });
    result.predictions = in_stage("predict", [&] { return predict_all(fitted, view.test_users); });
    result.chosen = chosen;
    result.details["model"] = fitted.model;
    return result;
}

// Two-stage tuning: latent dimension and MF penalty by cross-validated
// rating log loss, then the stacked classifier's penalty by gender CV. With
// gender-seeded initialization each gender fold refits the factorization
// seeded by that fold's training labels only.
inline MethodResult run_mf_stacked(const Json& params, const TrainingView& view, const ValidationTarget* stop_override) {
    const auto init_name = param<std::string>(params, "init");
    MfInitKind init_kind{};
    if (init_name == "random") {
        init_kind = MfInitKind::Random;
    } else if (init_name == "gender-seeded") {
        init_kind = MfInitKind::GenderSeeded;
    } else {
        throw ConfigError("init must be 'random' or 'gender-seeded'");
    }
    auto mf_config = [&](const Json& hp) {
        SgdConfig c;
        c.learning_rate = param<double>(hp, "mf_learning_rate");
        c.epochs = param<std::size_t>(hp, "mf_epochs");
        c.batch_size = param<std::size_t>(hp, "mf_batch_size");
        c.l2_penalty = param<double>(hp, "mf_l2");
        c.stopping = FixedEpochs{};
        c.seed = mix_seed(view.seed, 31);
        c.validate();
        return c;
    };
    MethodResult result;

    const std::vector<std::string> mf_axes{"latent_dim", "mf_l2", "mf_learning_rate", "mf_epochs"};
    const auto mf_grid = expand_grid(params, mf_axes);
    Json chosen = mf_grid.front();
    if (mf_grid.size() > 1) {
        std::vector<double> scores(mf_grid.size());
        std::vector<std::future<double>> jobs;
        for (const auto& hp : mf_grid) {
            jobs.push_back(std::async(std::launch::async, [&, hp] {
                return in_stage("tune mf", [&] {
                    return mf_edge_cv_loss(view.graph, param<std::size_t>(hp, "latent_dim"), mf_config(hp),
                                           MfInit{init_kind, &view.train_labels}, view.folds, mix_seed(view.seed, 32));
                });
            }));
        }
        for (std::size_t g = 0; g < jobs.size(); ++g) scores[g] = jobs[g].get();
        std::size_t best = 0;
        for (std::size_t g = 1; g < scores.size(); ++g) {
            if (scores[g] < scores[best]) best = g;
        }
        chosen = mf_grid[best];
        result.details["mf_cv"] = cv_summary(mf_grid, scores, mf_axes);
    }
    const auto factors = param<std::size_t>(chosen, "latent_dim");
    const auto mf_sgd = mf_config(chosen);
    const auto stacked_sgd = [&](const Json& hp) { return sgd_from(hp, mix_seed(view.seed, 33), "lr_l2"); };

    const std::vector<std::string> lr_axes{"lr_l2"};
    const auto lr_grid = expand_grid(chosen, lr_axes);
    if (lr_grid.size() > 1) {
        const auto folds = kfold_plan(view.train_labels, view.folds, mix_seed(view.seed, 21));
        std::optional<MfModel> shared_mf;
        if (init_kind == MfInitKind::Random) shared_mf = train_logistic_mf(view.graph, factors, mf_sgd, {});
        std::vector<std::optional<MfModel>> fold_mf(view.folds);
        const auto tuned = in_stage("tune stacked", [&] {
            return tune(std::span<const Json>(lr_grid), view.train_labels, folds, TuneMetric::LogLoss,
                        [&](const Json& hp, std::size_t fold, const LabelMap& fold_train,
                            const std::vector<std::string>& held) {
                            const MfModel* mf = shared_mf ? &*shared_mf : nullptr;
                            if (!mf) {
                                if (!fold_mf[fold]) {
                                    fold_mf[fold] = train_logistic_mf(view.graph, factors, mf_sgd,
                                                                      MfInit{init_kind, &fold_train});
                                }
                                mf = &*fold_mf[fold];
                            }
                            const auto s = train_stacked_gender(*mf, fold_train, stacked_sgd(hp));
                            std::vector<double> preds;
                            for (const auto& u : held) preds.push_back(predict_gender_mf(s, *mf, u));
                            return preds;
                        });
        });
        chosen = tuned.best;
        result.details["stacked_cv"] = cv_summary(lr_grid, tuned.scores, lr_axes);
    }

    const auto mf = in_stage("train mf", [&] {
        return train_logistic_mf(view.graph, factors, mf_sgd, MfInit{init_kind, &view.train_labels});
    });
    const auto stacked = in_stage("train stacked", [&] {
        return train_stacked_gender(mf, view.train_labels, stacked_sgd(chosen), stop_override);
    });
    result.predictions = in_stage("predict", [&] {
        std::vector<double> preds;
        for (const auto& u : view.test_users) preds.push_back(predict_gender_mf(stacked, mf, u));
        return preds;
    });
    result.chosen = chosen;
    result.details["model"] = Json{{"w", stacked.w}, {"w_bias", stacked.w_bias}, {"w_f", stacked.w_f}, {"mu", mf.mu}};
    return result;
}

}  // namespace detail

inline const std::vector<std::string>& registered_methods() {
    static const std::vector<std::string> names{"predict-half", "train-average", "count-sigmoid", "noisy-or", "rlr",
                                                "p1",           "p2",            "rlr-dropout",   "mf-stacked",
                                                "nb-limited"};
    return names;
}

inline std::string display_name(const std::string& method) {
    static const std::map<std::string, std::string> names{
        {"predict-half", "Predict 0.5"},
        {"train-average", "Training average"},
        {"count-sigmoid", "MLN/RLR count model"},
        {"noisy-or", "Noisy-OR"},
        {"rlr", "Per-item RLR"},
        {"p1", "Movies as a dataset (P1)"},
        {"p2", "Average of movies as dataset (P2)"},
        {"rlr-dropout", "RLR with relational dropout"},
        {"mf-stacked", "Matrix factorization"},
        {"nb-limited", "Naive Bayes, limited neighbors"}};
    const auto it = names.find(method);
    return it == names.end() ? method : it->second;
}

// Runs one method on prepared data. Training sees only the graph and the
// training labels; test labels are read for scoring and, under
// paper_stopping, for the stopping criterion.
inline EvalReport run_on_data(const ExperimentConfig& config, const PreparedData& data) {
    const auto start = std::chrono::steady_clock::now();
    const auto params = detail::resolve_params(config.method, config.params);
    if (config.folds < 2) throw ConfigError("folds must be at least 2");
    if (data.train_labels.empty()) throw DataError("no labeled training users");
    if (data.test_users.empty()) throw DataError("no test users");

    TrainingView view{data.graph, data.train_labels, data.test_users, config.seed, config.folds};

    std::optional<ValidationTarget> paper_target;
    if (config.paper_stopping) {
        paper_target = ValidationTarget{data.test_users, [held = data.held_out, users = data.test_users](
                                                              std::span<const double> preds) {
                                            std::vector<EvalPair> pairs;
                                            for (std::size_t j = 0; j < users.size(); ++j) {
                                                const auto g = held->reveal(users[j], HeldOutLabels::Purpose::PaperStopping);
                                                pairs.push_back({clip_probability(preds[j]), g == Gender::Female ? 1 : 0});
                                            }
                                            return log_loss(pairs);
                                        }};
    }
    const ValidationTarget* stop = paper_target ? &*paper_target : nullptr;

    const auto reads_before = data.held_out->evaluation_reads();
    const auto stop_reads_before = data.held_out->stopping_reads();
    detail::MethodResult result = config.method == "mf-stacked" ? detail::run_mf_stacked(params, view, stop)
                                                                : detail::run_simple_method(config.method, params, view, stop);

    std::vector<EvalPair> pairs;
    detail::in_stage("evaluate", [&] {
        for (std::size_t j = 0; j < data.test_users.size(); ++j) {
            const auto g = data.held_out->reveal(data.test_users[j], HeldOutLabels::Purpose::Evaluation);
            pairs.push_back({clip_probability(result.predictions[j]), g == Gender::Female ? 1 : 0});
        }
    });

    EvalReport report;
    report.method = config.method;
    report.mse = mse(pairs);
    report.log_loss = log_loss(pairs);
    report.hyperparameters = result.chosen;
    report.n_test = data.test_users.size();
    report.seed = config.seed;
    report.details = std::move(result.details);
    report.details["paper_stopping"] = config.paper_stopping;
    report.details["label_audit"] = Json{{"evaluation_reads", data.held_out->evaluation_reads() - reads_before},
                                         {"stopping_reads", data.held_out->stopping_reads() - stop_reads_before}};
    report.details["data"] = data.summary;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

inline EvalReport run_experiment(const ExperimentConfig& config) {
    const auto data = prepare_data(config.data);
    return run_on_data(config, data);
}

struct SuiteEntry {
    std::string method;
    std::optional<EvalReport> report;
    std::string error;      // set when report is empty
    int error_code = 0;     // CLI exit code class of the failure
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const DataError*>(&e)) return 2;
    return 3;
}

// One entry per config, in order. Failures are recorded and the suite
// continues. Consecutive configs on the same data share one ingestion.
inline std::vector<SuiteEntry> run_suite(const std::vector<ExperimentConfig>& configs) {
    std::vector<SuiteEntry> out;
    std::optional<DatasetSpec> loaded_spec;
    std::optional<PreparedData> loaded;
    std::string load_error;
    int load_code = 0;
    for (const auto& config : configs) {
        SuiteEntry entry{config.method, std::nullopt, "", 0};
        if (!loaded_spec || !(*loaded_spec == config.data)) {
            loaded_spec = config.data;
            loaded.reset();
            load_error.clear();
            try {
                loaded = prepare_data(config.data);
            } catch (const std::exception& e) {
                load_error = e.what();
                load_code = exit_code_for(e);
            }
        }
        if (!loaded) {
            entry.error = load_error;
            entry.error_code = load_code;
        } else {
            try {
                entry.report = run_on_data(config, *loaded);
            } catch (const std::exception& e) {
                entry.error = e.what();
                entry.error_code = exit_code_for(e);
            }
        }
        out.push_back(std::move(entry));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

inline Json to_json(const EvalReport& r) {
    return Json{{"method", r.method},
                {"mse", r.mse},
                {"log_loss", r.log_loss},
                {"hyperparameters", r.hyperparameters},
                {"n_test", r.n_test},
                {"seed", r.seed},
                {"wall_seconds", r.wall_seconds},
                {"format_version", r.format_version},
                {"details", r.details}};
}

inline EvalReport report_from_json(const Json& j) {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.mse = j.at("mse").get<double>();
    r.log_loss = j.at("log_loss").get<double>();
    r.hyperparameters = j.at("hyperparameters");
    r.n_test = j.at("n_test").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.format_version = j.at("format_version").get<std::string>();
    r.details = j.at("details");
    return r;
}

// Full-precision JSON, one object per line.
inline std::string render_json_line(const EvalReport& r) {
    return to_json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

// Method rows with MSE and log loss to three decimals.
inline std::string render_table(std::span<const SuiteEntry> entries) {
    std::ostringstream os;
    os << std::left << std::setw(36) << "Method" << std::right << std::setw(8) << "MSE" << std::setw(8) << "LL" << '\n';
    os << std::string(52, '-') << '\n';
    for (const auto& e : entries) {
        os << std::left << std::setw(36) << display_name(e.method) << std::right;
        if (e.report) {
            os << std::fixed << std::setprecision(3) << std::setw(8) << e.report->mse << std::setw(8)
               << e.report->log_loss;
        } else {
            os << "  error: " << e.error;
        }
        os << '\n';
    }
    return os.str();
}

inline std::string render_table(const EvalReport& r) {
    const SuiteEntry e{r.method, r, "", 0};
    return render_table(std::span<const SuiteEntry>(&e, 1));
}

enum class ReportFormat { Json, Table };

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report to " + path);
    out << text;
    if (!out) throw DataError("failed writing report to " + path);
}

inline void emit_report(const EvalReport& r, const std::string& path, ReportFormat format) {
    write_text(path, format == ReportFormat::Json ? render_json_line(r) : render_table(r));
}

inline void emit_suite(std::span<const SuiteEntry> entries, const std::string& path, ReportFormat format) {
    if (format == ReportFormat::Table) {
        write_text(path, render_table(entries));
        return;
    }
    std::string text;
    for (const auto& e : entries) {
        if (e.report) {
            text += render_json_line(*e.report);
        } else {
            text += Json{{"method", e.method}, {"error", e.error}}.dump() + "\n";
        }
    }
    write_text(path, text);
}

// ---------------------------------------------------------------------------
// Configuration files

// A config file holds shared settings and a list of experiments:
//   {"data": {...}, "seed": 1, "folds": 5,
//    "experiments": [{"method": "p1", "pseudo_count": [1, 10]}, ...]}
// Relative data paths resolve against the config file's directory.
inline std::vector<ExperimentConfig> parse_config(const Json& j, const std::filesystem::path& base_dir) {
    try {
        ExperimentConfig common;
        const auto& d = j.at("data");
        auto resolve = [&](const std::string& p) {
            const std::filesystem::path path(p);
            return (path.is_absolute() ? path : base_dir / path).lexically_normal().string();
        };
        common.data.ratings = resolve(d.at("ratings").get<std::string>());
        common.data.users = resolve(d.at("users").get<std::string>());
        common.data.format = d.value("format", std::string("ml-100k"));
        if (d.contains("rating_cutoff")) common.data.rating_cutoff = d.at("rating_cutoff").get<std::int64_t>();
        if (d.contains("label_cutoff")) common.data.label_cutoff = d.at("label_cutoff").get<std::int64_t>();
        if (d.contains("rating_fraction")) common.data.rating_fraction = d.at("rating_fraction").get<double>();
        if (d.contains("label_fraction")) common.data.label_fraction = d.at("label_fraction").get<double>();
        common.seed = j.value("seed", std::uint64_t{1});
        common.folds = j.value("folds", std::size_t{5});
        common.paper_stopping = j.value("paper_stopping", false);

        std::vector<ExperimentConfig> out;
        for (const auto& e : j.at("experiments")) {
            ExperimentConfig c = common;
            c.method = e.at("method").get<std::string>();
            c.params = Json::object();
            for (const auto& [k, v] : e.items()) {
                if (k != "method") c.params[k] = v;
            }
            detail::resolve_params(c.method, c.params);  // reject unknown methods and keys early
            out.push_back(std::move(c));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline std::vector<ExperimentConfig> load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j, std::filesystem::path(path).parent_path());
}

}  // namespace relagg
