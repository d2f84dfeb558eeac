#pragma once

// Rating ingestion, binarization and the timestamp-based train/test split.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relagg/errors.hpp"

namespace relagg {

struct RatingRecord {
    std::string user_id;
    std::string item_id;
    int rating = 0;
    std::int64_t timestamp = 0;

    bool operator==(const RatingRecord&) const = default;
};

enum class Polarity : std::uint8_t { Negative = 0, Positive = 1 };

enum class Gender : std::uint8_t { Female, Male };

using LabelMap = std::map<std::string, Gender>;

inline constexpr Polarity binarize(int rating) {
    return rating >= 4 ? Polarity::Positive : Polarity::Negative;
}

inline constexpr double as_target(Gender g) { return g == Gender::Female ? 1.0 : 0.0; }

// ml-100k u.data is tab separated; ml-1m ratings.dat uses "::".
enum class RatingFormat { Tab, DoubleColon };

// ml-100k u.user: "id|age|gender|occupation|zip";
// ml-1m users.dat: "id::gender::age::occupation::zip".
enum class LabelFormat { Ml100k, Ml1m };

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + sep.size();
    }
}

inline std::string_view strip_cr(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
    return line;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
    return value;
}

[[noreturn]] inline void fail_line(std::size_t line_no, std::string_view line, std::string_view why) {
    std::ostringstream msg;
    msg << "line " << line_no << ": " << why << ": \"" << line << '"';
    throw DataError(msg.str());
}

}  // namespace detail

// Parses rating records from a stream, preserving line order.
inline std::vector<RatingRecord> parse_ratings(std::istream& in, RatingFormat format) {
    const std::string_view sep = format == RatingFormat::Tab ? "\t" : "::";
    std::vector<RatingRecord> records;
    std::string buffer;
    std::size_t line_no = 0;
    while (std::getline(in, buffer)) {
        ++line_no;
        const auto line = detail::strip_cr(buffer);
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line, sep);
        if (fields.size() != 4) detail::fail_line(line_no, line, "expected 4 fields");
        const auto rating = detail::parse_int<int>(fields[2]);
        if (!rating) detail::fail_line(line_no, line, "rating is not an integer");
        if (*rating < 1 || *rating > 5) detail::fail_line(line_no, line, "rating outside 1-5");
        const auto ts = detail::parse_int<std::int64_t>(fields[3]);
        if (!ts) detail::fail_line(line_no, line, "timestamp is not an integer");
        if (*ts < 0) detail::fail_line(line_no, line, "negative timestamp");
        if (fields[0].empty() || fields[1].empty()) detail::fail_line(line_no, line, "empty id");
        records.push_back({std::string(fields[0]), std::string(fields[1]), *rating, *ts});
    }
    return records;
}

inline std::vector<RatingRecord> load_ratings(const std::string& path, RatingFormat format) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ratings file: " + path);
    try {
        return parse_ratings(in, format);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline LabelMap parse_user_labels(std::istream& in, LabelFormat format) {
    const std::string_view sep = format == LabelFormat::Ml100k ? "|" : "::";
    const std::size_t gender_field = format == LabelFormat::Ml100k ? 2 : 1;
    LabelMap labels;
    std::string buffer;
    std::size_t line_no = 0;
    while (std::getline(in, buffer)) {
        ++line_no;
        const auto line = detail::strip_cr(buffer);
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line, sep);
        if (fields.size() <= gender_field) detail::fail_line(line_no, line, "missing gender field");
        Gender g{};
        if (fields[gender_field] == "F") {
            g = Gender::Female;
        } else if (fields[gender_field] == "M") {
            g = Gender::Male;
        } else {
            detail::fail_line(line_no, line, "gender must be M or F");
        }
        if (!labels.emplace(std::string(fields[0]), g).second) {
            detail::fail_line(line_no, line, "duplicate user id");
        }
    }
    return labels;
}

inline LabelMap load_user_labels(const std::string& path, LabelFormat format) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open labels file: " + path);
    try {
        return parse_user_labels(in, format);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

struct Edge {
    std::size_t node;  // item index in user adjacency, user index in item adjacency
    Polarity polarity;

    bool operator==(const Edge&) const = default;
};

// Bipartite user x item graph of binarized ratings. Users and items are
// indexed densely in order of first appearance; ids stay opaque strings.
// Unobserved pairs are simply absent.
class RatingGraph {
public:
    RatingGraph() = default;

    // Adds or looks up a user with no edges.
    std::size_t add_user(std::string_view id) {
        return intern(id, user_ids_, user_index_, user_adj_);
    }

    std::size_t add_item(std::string_view id) {
        return intern(id, item_ids_, item_index_, item_adj_);
    }

    // Throws DataError on a duplicate (user, item) pair.
    void add_edge(std::string_view user, std::string_view item, Polarity polarity) {
        const auto u = add_user(user);
        const auto i = add_item(item);
        const auto key = pair_key(u, i);
        if (!edge_keys_.emplace(key, polarity).second) {
            throw DataError("duplicate rating for user " + std::string(user) + ", item " +
                            std::string(item));
        }
        user_adj_[u].push_back({i, polarity});
        item_adj_[i].push_back({u, polarity});
        ++num_edges_;
    }

    std::size_t num_users() const { return user_ids_.size(); }
    std::size_t num_items() const { return item_ids_.size(); }
    std::size_t num_edges() const { return num_edges_; }

    std::optional<std::size_t> user_index(std::string_view id) const {
        return lookup(user_index_, id);
    }
    std::optional<std::size_t> item_index(std::string_view id) const {
        return lookup(item_index_, id);
    }

    const std::string& user_id(std::size_t u) const { return user_ids_.at(u); }
    const std::string& item_id(std::size_t i) const { return item_ids_.at(i); }
    const std::vector<std::string>& user_ids() const { return user_ids_; }
    const std::vector<std::string>& item_ids() const { return item_ids_; }

    std::span<const Edge> user_edges(std::size_t u) const { return user_adj_.at(u); }
    std::span<const Edge> item_edges(std::size_t i) const { return item_adj_.at(i); }

    // Edges of a user by id; unknown users have none.
    std::span<const Edge> user_edges(std::string_view id) const {
        const auto u = user_index(id);
        return u ? user_edges(*u) : std::span<const Edge>{};
    }

    std::optional<Polarity> edge(std::size_t u, std::size_t i) const {
        const auto it = edge_keys_.find(pair_key(u, i));
        if (it == edge_keys_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t max_user_degree() const {
        std::size_t d = 0;
        for (const auto& adj : user_adj_) d = std::max(d, adj.size());
        return d;
    }

private:
    static std::uint64_t pair_key(std::size_t u, std::size_t i) {
        return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(i);
    }

    static std::optional<std::size_t> lookup(const std::unordered_map<std::string, std::size_t>& m,
                                             std::string_view id) {
        const auto it = m.find(std::string(id));
        if (it == m.end()) return std::nullopt;
        return it->second;
    }

    static std::size_t intern(std::string_view id, std::vector<std::string>& ids,
                              std::unordered_map<std::string, std::size_t>& index,
                              std::vector<std::vector<Edge>>& adj) {
        const auto [it, inserted] = index.emplace(std::string(id), ids.size());
        if (inserted) {
            ids.emplace_back(id);
            adj.emplace_back();
        }
        return it->second;
    }

    std::vector<std::string> user_ids_;
    std::vector<std::string> item_ids_;
    std::unordered_map<std::string, std::size_t> user_index_;
    std::unordered_map<std::string, std::size_t> item_index_;
    std::vector<std::vector<Edge>> user_adj_;
    std::vector<std::vector<Edge>> item_adj_;
    std::unordered_map<std::uint64_t, Polarity> edge_keys_;
    std::size_t num_edges_ = 0;
};

inline RatingGraph build_graph(std::span<const RatingRecord> records) {
    RatingGraph g;
    for (const auto& r : records) g.add_edge(r.user_id, r.item_id, binarize(r.rating));
    return g;
}

struct LabeledSplit {
    RatingGraph train_graph;
    LabelMap train_labels;
    std::vector<std::string> test_users;  // graph order
    LabelMap test_labels;                 // evaluation only
};

// Splits users by the time of their first rating. The evidence graph holds
// every rating at or before rating_cutoff_ts (for train and test users
// alike); users whose first rating is at or before label_cutoff_ts are
// labeled training users, the rest are test users.
inline LabeledSplit temporal_split(std::span<const RatingRecord> records, const LabelMap& labels,
                                   std::int64_t rating_cutoff_ts, std::int64_t label_cutoff_ts) {
    if (records.empty()) throw DataError("temporal_split: no rating records");
    if (label_cutoff_ts > rating_cutoff_ts) {
        throw ConfigError("temporal_split: label cutoff is after the rating cutoff");
    }
    LabeledSplit split;
    std::vector<std::int64_t> first_ts;
    for (const auto& r : records) {
        if (r.timestamp > rating_cutoff_ts) continue;
        split.train_graph.add_edge(r.user_id, r.item_id, binarize(r.rating));
        const auto u = *split.train_graph.user_index(r.user_id);
        if (u == first_ts.size()) first_ts.push_back(r.timestamp);
        first_ts[u] = std::min(first_ts[u], r.timestamp);
    }

    std::vector<std::string> missing;
    for (std::size_t u = 0; u < split.train_graph.num_users(); ++u) {
        const auto& id = split.train_graph.user_id(u);
        const auto it = labels.find(id);
        if (it == labels.end()) {
            missing.push_back(id);
            continue;
        }
        if (first_ts[u] <= label_cutoff_ts) {
            split.train_labels.emplace(id, it->second);
        } else {
            split.test_users.push_back(id);
            split.test_labels.emplace(id, it->second);
        }
    }
    if (!missing.empty()) {
        std::string msg = "temporal_split: rated users without a label:";
        for (std::size_t k = 0; k < missing.size() && k < 20; ++k) msg += " " + missing[k];
        if (missing.size() > 20) msg += " ... (" + std::to_string(missing.size()) + " total)";
        throw DataError(msg);
    }
    return split;
}

// Timestamps at the given fractions of the time-ordered ratings, for data
// sets that are not stored in time order (ml-1m). A fraction f selects the
// timestamp of the ceil(f * n)-th earliest rating.
inline std::pair<std::int64_t, std::int64_t> fraction_cutoffs(std::span<const RatingRecord> records,
                                                              double rating_fraction,
                                                              double label_fraction) {
    if (records.empty()) throw DataError("fraction_cutoffs: no rating records");
    if (!(label_fraction > 0 && label_fraction <= rating_fraction && rating_fraction <= 1)) {
        throw ConfigError("fraction_cutoffs: need 0 < label_fraction <= rating_fraction <= 1");
    }
    std::vector<std::int64_t> ts;
    ts.reserve(records.size());
    for (const auto& r : records) ts.push_back(r.timestamp);
    std::sort(ts.begin(), ts.end());
    const auto at = [&](double f) {
        auto k = static_cast<std::size_t>(std::ceil(f * static_cast<double>(ts.size())));
        return ts[std::clamp<std::size_t>(k, 1, ts.size()) - 1];
    };
    return {at(rating_fraction), at(label_fraction)};
}

}  // namespace relagg
