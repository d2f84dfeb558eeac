#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "relagg/relagg.hpp"

namespace relagg::fixtures {

struct Rating {
    std::string user;
    std::string item;
    bool positive;
};

inline RatingGraph graph_of(const std::vector<Rating>& ratings, const std::vector<std::string>& extra_users = {}) {
    RatingGraph g;
    for (const auto& r : ratings) g.add_edge(r.user, r.item, r.positive ? Polarity::Positive : Polarity::Negative);
    for (const auto& u : extra_users) g.add_user(u);
    return g;
}

// Users are described by (positive count, negative count, female); every
// rating goes to a distinct item so only the counts matter.
struct CountUser {
    std::size_t npr;
    std::size_t nnr;
    bool female;
};

inline std::pair<RatingGraph, LabelMap> count_fixture(const std::vector<CountUser>& users) {
    RatingGraph g;
    LabelMap labels;
    std::size_t item = 0;
    for (std::size_t u = 0; u < users.size(); ++u) {
        const auto id = "u" + std::to_string(u);
        g.add_user(id);
        for (std::size_t j = 0; j < users[u].npr; ++j) g.add_edge(id, "i" + std::to_string(item++), Polarity::Positive);
        for (std::size_t j = 0; j < users[u].nnr; ++j) g.add_edge(id, "i" + std::to_string(item++), Polarity::Negative);
        labels.emplace(id, users[u].female ? Gender::Female : Gender::Male);
    }
    return {std::move(g), std::move(labels)};
}

// Two identical count vectors with opposite labels, plus a mixed user whose
// features are the average of two others: no direction separates them, so
// the optimum is finite.
inline std::vector<CountUser> four_user_fixture() {
    return {{2, 0, true}, {2, 0, false}, {0, 2, false}, {1, 1, true}};
}

inline double log2_loss_of(double p, bool female) {
    p = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
    return -std::log2(female ? p : 1.0 - p);
}

// Mean loss of a three-weight count model written out from scratch.
template <class Prob>
double count_model_loss(const std::vector<CountUser>& users, Prob prob) {
    double s = 0.0;
    for (const auto& u : users) s += log2_loss_of(prob(static_cast<double>(u.npr), static_cast<double>(u.nnr)), u.female);
    return s / static_cast<double>(users.size());
}

// Exhaustive minimum over a cube grid of (w0, w1, w2). Points where the
// model is undefined (NaN probability) never win.
template <class Prob>
double grid_minimum(const std::vector<CountUser>& users, double lo, double hi, double step, Prob prob) {
    const auto n = static_cast<int>(std::lround((hi - lo) / step));
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= n; ++a) {
        const double w0 = lo + a * step;
        for (int b = 0; b <= n; ++b) {
            const double w1 = lo + b * step;
            for (int c = 0; c <= n; ++c) {
                const double w2 = lo + c * step;
                const double l = count_model_loss(users, [&](double np, double nn) { return prob(w0, w1, w2, np, nn); });
                if (l < best) best = l;
            }
        }
    }
    return best;
}

inline double sigmoid_count_prob(double w0, double w1, double w2, double np, double nn) {
    return 1.0 / (1.0 + std::exp(-(w0 + w1 * np + w2 * nn)));
}

// Eq.-style noisy-OR; a nonpositive base with a nonzero exponent is outside
// the model, reported as NaN so the grid skips it.
inline double noisy_or_prob(double w0, double w1, double w2, double np, double nn) {
    if (1.0 - w0 <= 0.0 || (np > 0 && 1.0 - w1 <= 0.0) || (nn > 0 && 1.0 - w2 <= 0.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return 1.0 - (1.0 - w0) * std::pow(1.0 - w1, np) * std::pow(1.0 - w2, nn);
}

// Twelve users over six items: women lean towards liking a/b/c, men d/e/f,
// with exceptions so no single rating decides.
inline std::pair<RatingGraph, LabelMap> taste_fixture() {
    std::vector<Rating> r;
    LabelMap labels;
    const char* items = "abcdef";
    for (int u = 0; u < 12; ++u) {
        const bool female = u % 3 == 0;
        const auto id = "u" + std::to_string(u);
        labels.emplace(id, female ? Gender::Female : Gender::Male);
        for (int i = 0; i < 6; ++i) {
            if ((u + i) % 4 == 3) continue;
            const bool likes = (i < 3) == female;
            r.push_back({id, std::string(1, items[i]), (u + 2 * i) % 5 == 0 ? !likes : likes});
        }
    }
    return {graph_of(r), labels};
}

// 4 users x 4 items, every pair rated.
inline RatingGraph dense_fixture() {
    std::vector<Rating> r;
    const int like[4][4] = {{1, 1, 0, 0}, {1, 0, 1, 0}, {0, 1, 0, 1}, {0, 0, 1, 1}};
    for (int u = 0; u < 4; ++u) {
        for (int i = 0; i < 4; ++i) r.push_back({"u" + std::to_string(u), "i" + std::to_string(i), like[u][i] == 1});
    }
    return graph_of(r);
}

inline SgdConfig fixed_sgd(double lr, std::size_t epochs, std::size_t batch, double l2 = 0.0, std::uint64_t seed = 7) {
    SgdConfig c;
    c.learning_rate = lr;
    c.epochs = epochs;
    c.batch_size = batch;
    c.l2_penalty = l2;
    c.seed = seed;
    c.stopping = FixedEpochs{};
    return c;
}

inline std::vector<double> random_point(std::size_t dim, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng = make_rng(seed, 99);
    std::vector<double> x(dim);
    for (auto& v : x) v = uniform_real(rng, lo, hi);
    return x;
}

// A small MovieLens-shaped corpus: `n_users` users rating from `n_items`
// items, with gender-dependent tastes and increasing timestamps so a
// temporal split separates early (train) from late (test) users.
struct SyntheticCorpus {
    std::filesystem::path ratings;
    std::filesystem::path users;
    std::int64_t rating_cutoff;
    std::int64_t label_cutoff;
};

inline SyntheticCorpus write_synthetic_corpus(const std::filesystem::path& dir, std::size_t n_users = 80,
                                              std::size_t n_items = 40, std::uint64_t seed = 5) {
    std::filesystem::create_directories(dir);
    Rng rng = make_rng(seed, 1);
    std::ofstream r(dir / "u.data");
    std::ofstream u(dir / "u.user");
    std::int64_t ts = 1000;
    for (std::size_t k = 0; k < n_users; ++k) {
        const bool female = uniform_unit(rng) < 0.35;
        u << (k + 1) << "|30|" << (female ? 'F' : 'M') << "|other|00000\n";
        const std::size_t degree = 2 + uniform_index(rng, 14);
        std::vector<std::size_t> items;
        sample_subset(n_items, degree, rng, items);
        for (const auto i : items) {
            // Even items appeal to women, odd items to men.
            const bool likes = (i % 2 == 0) == female;
            const double p_high = likes ? 0.75 : 0.3;
            const int rating = uniform_unit(rng) < p_high ? 4 + static_cast<int>(uniform_index(rng, 2))
                                                          : 1 + static_cast<int>(uniform_index(rng, 3));
            r << (k + 1) << '\t' << (i + 1) << '\t' << rating << '\t' << ts++ << '\n';
        }
    }
    const auto total = ts - 1000;
    return {dir / "u.data", dir / "u.user", 1000 + total * 9 / 10, 1000 + total * 6 / 10};
}

inline DatasetSpec corpus_spec(const SyntheticCorpus& c) {
    DatasetSpec d;
    d.ratings = c.ratings.string();
    d.users = c.users.string();
    d.format = "ml-100k";
    d.rating_cutoff = c.rating_cutoff;
    d.label_cutoff = c.label_cutoff;
    return d;
}

}  // namespace relagg::fixtures
