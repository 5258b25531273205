#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

// A query or gallery side of a retrieval split. camera_ids is optional;
// when present on both sides the usual ReID rule applies: gallery entries
// sharing both identity and camera with the query are excluded.
struct RetrievalSet {
    Matrix features;
    std::vector<int> identities;
    std::vector<int> camera_ids; // empty = no camera information

    std::size_t size() const { return features.rows; }
};

namespace detail {

inline void check_retrieval_inputs(const RetrievalSet& query, const RetrievalSet& gallery) {
    if (query.size() == 0 || gallery.size() == 0) {
        throw UsageError("retrieval: query and gallery must be nonempty");
    }
    if (query.features.cols != gallery.features.cols) {
        throw ShapeError("retrieval: feature dimensions differ");
    }
    if (query.identities.size() != query.size() || gallery.identities.size() != gallery.size()) {
        throw ShapeError("retrieval: identity count != feature rows");
    }
    if (!query.camera_ids.empty() && query.camera_ids.size() != query.size()) {
        throw ShapeError("retrieval: camera id count != query rows");
    }
    if (!gallery.camera_ids.empty() && gallery.camera_ids.size() != gallery.size()) {
        throw ShapeError("retrieval: camera id count != gallery rows");
    }
}

// Relevance flags of the camera-filtered gallery, in ranked order
// (descending cosine similarity, stable by gallery index), for each query
// that retains at least one valid match.
inline std::vector<std::vector<char>> ranked_relevance(const RetrievalSet& query,
                                                       const RetrievalSet& gallery) {
    check_retrieval_inputs(query, gallery);
    Matrix qf = query.features;
    Matrix gf = gallery.features;
    l2_normalize_rows(qf);
    l2_normalize_rows(gf);
    const bool use_cameras = !query.camera_ids.empty() && !gallery.camera_ids.empty();

    std::vector<std::vector<char>> out;
    std::vector<std::size_t> order;
    for (std::size_t q = 0; q < query.size(); ++q) {
        order.clear();
        bool any_match = false;
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            if (use_cameras && gallery.identities[g] == query.identities[q] &&
                gallery.camera_ids[g] == query.camera_ids[q]) {
                continue;
            }
            order.push_back(g);
            any_match = any_match || gallery.identities[g] == query.identities[q];
        }
        if (!any_match) continue; // query has no evaluable match, drop it

        std::vector<double> sims(gallery.size());
        for (std::size_t g : order) sims[g] = dot(qf.row(q), gf.row(g));
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });

        std::vector<char> relevant(order.size());
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            relevant[pos] = gallery.identities[order[pos]] == query.identities[q] ? 1 : 0;
        }
        out.push_back(std::move(relevant));
    }
    if (out.empty()) {
        throw UsageError("retrieval: no query has a valid gallery match");
    }
    return out;
}

} // namespace detail

// CMC rank-k accuracies: fraction of retained queries whose first correct
// match appears within the top-k ranked gallery entries.
inline std::vector<double> cmc(const RetrievalSet& query, const RetrievalSet& gallery,
                               std::span<const int> ks) {
    for (int k : ks) {
        if (k < 1) throw UsageError("cmc: ranks must be >= 1");
    }
    const auto ranked = detail::ranked_relevance(query, gallery);
    std::vector<double> out(ks.size(), 0.0);
    for (const auto& relevant : ranked) {
        std::size_t first_hit = relevant.size();
        for (std::size_t pos = 0; pos < relevant.size(); ++pos) {
            if (relevant[pos]) {
                first_hit = pos;
                break;
            }
        }
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (first_hit < static_cast<std::size_t>(ks[i])) out[i] += 1.0;
        }
    }
    for (double& v : out) v /= static_cast<double>(ranked.size());
    return out;
}

// Mean average precision: AP per query is the mean over relevant ranks p
// of (relevant items in the top p) / p.
inline double map_score(const RetrievalSet& query, const RetrievalSet& gallery) {
    const auto ranked = detail::ranked_relevance(query, gallery);
    double total = 0.0;
    for (const auto& relevant : ranked) {
        double ap = 0.0;
        std::size_t hits = 0;
        for (std::size_t pos = 0; pos < relevant.size(); ++pos) {
            if (relevant[pos]) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(pos + 1);
            }
        }
        total += ap / static_cast<double>(hits);
    }
    return total / static_cast<double>(ranked.size());
}

} // namespace fedsim
