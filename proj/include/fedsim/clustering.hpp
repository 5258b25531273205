#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/net.hpp"

namespace fedsim {

// One pairwise merge: cluster `drop` was folded into cluster `keep`
// (keep < drop in the id space current at the time of the event; ids
// above drop shift down by one afterwards).
struct MergeEvent {
    std::size_t keep = 0;
    std::size_t drop = 0;

    bool operator==(const MergeEvent& other) const = default;
};

// Bottom-up cluster partition of one client's samples.
struct ClusterState {
    std::vector<int> assignment;   // pseudo-label per sample, ids in [0, M)
    std::size_t cluster_count = 0; // M
    std::size_t merge_per_round = 0; // m
    double merge_percent = 0.0;      // mp
};

// One cluster per sample with an externally supplied merge schedule;
// merges_per_round may be 0 (clustering disabled, e.g. a profiled client
// whose identity estimate equals its sample count).
inline ClusterState init_clusters_with_schedule(std::size_t n, std::size_t merges_per_round,
                                                double merge_percent) {
    if (n == 0) throw UsageError("init_clusters: need at least one sample");
    ClusterState state;
    state.assignment.resize(n);
    for (std::size_t i = 0; i < n; ++i) state.assignment[i] = static_cast<int>(i);
    state.cluster_count = n;
    state.merge_per_round = merges_per_round;
    state.merge_percent = merge_percent;
    return state;
}

// Every sample starts as its own cluster; m = floor(n * mp), floored at 1
// so clustering always makes progress.
inline ClusterState init_clusters(std::size_t n, double merge_percent) {
    if (!(merge_percent > 0.0 && merge_percent < 1.0)) {
        throw UsageError("init_clusters: merge percent must lie in (0, 1)");
    }
    const auto m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * merge_percent)));
    return init_clusters_with_schedule(n, m, merge_percent);
}

inline const std::vector<int>& labels(const ClusterState& state) { return state.assignment; }

enum class Linkage { Single, Average };

struct ClusterRoundResult {
    ClusterState state;
    std::vector<MergeEvent> merges;
    bool exhausted = false; // requested merges exceeded M - 1
};

// Performs m pairwise merge steps. Each step merges the cluster pair with
// the smallest linkage distance over member features (single linkage:
// minimum pairwise Euclidean distance); ties go to the lexicographically
// smallest current (a, b) id pair. Requesting m >= M clamps to M - 1 and
// flags the state as exhausted.
inline ClusterRoundResult cluster_round(const ClusterState& state, const Matrix& features,
                                        std::optional<std::size_t> m_override = std::nullopt,
                                        Linkage linkage = Linkage::Single) {
    if (features.rows != state.assignment.size()) {
        throw ShapeError("cluster_round: feature rows != sample count");
    }
    ClusterRoundResult result;
    result.state = state;

    std::size_t m = m_override.value_or(state.merge_per_round);
    if (m >= state.cluster_count) {
        m = state.cluster_count - 1;
        result.exhausted = true;
    }
    if (m == 0) return result;

    const std::size_t initial_m = state.cluster_count;
    std::vector<std::vector<std::size_t>> members(initial_m);
    for (std::size_t i = 0; i < state.assignment.size(); ++i) {
        members[static_cast<std::size_t>(state.assignment[i])].push_back(i);
    }

    // Distance matrix over original cluster ids; `active` maps current ids
    // to original ids and shrinks as clusters merge.
    Matrix dist(initial_m, initial_m, 0.0);
    for (std::size_t a = 0; a < initial_m; ++a) {
        for (std::size_t b = a + 1; b < initial_m; ++b) {
            double acc = (linkage == Linkage::Single)
                             ? std::numeric_limits<double>::infinity()
                             : 0.0;
            for (std::size_t i : members[a]) {
                for (std::size_t j : members[b]) {
                    const double d = euclidean_distance(features.row(i), features.row(j));
                    if (linkage == Linkage::Single) {
                        acc = std::min(acc, d);
                    } else {
                        acc += d;
                    }
                }
            }
            if (linkage == Linkage::Average) {
                acc /= static_cast<double>(members[a].size() * members[b].size());
            }
            dist(a, b) = acc;
            dist(b, a) = acc;
        }
    }

    std::vector<std::size_t> active(initial_m);
    std::vector<std::size_t> sizes(initial_m);
    for (std::size_t c = 0; c < initial_m; ++c) {
        active[c] = c;
        sizes[c] = members[c].size();
    }
    auto& assignment = result.state.assignment;

    for (std::size_t step = 0; step < m; ++step) {
        std::size_t best_a = 0, best_b = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a + 1 < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const double d = dist(active[a], active[b]);
                if (d < best) {
                    best = d;
                    best_a = a;
                    best_b = b;
                }
            }
        }

        const std::size_t orig_a = active[best_a];
        const std::size_t orig_b = active[best_b];
        for (std::size_t c = 0; c < active.size(); ++c) {
            if (c == best_a || c == best_b) continue;
            const std::size_t k = active[c];
            double d;
            if (linkage == Linkage::Single) {
                d = std::min(dist(orig_a, k), dist(orig_b, k));
            } else {
                d = (static_cast<double>(sizes[orig_a]) * dist(orig_a, k) +
                     static_cast<double>(sizes[orig_b]) * dist(orig_b, k)) /
                    static_cast<double>(sizes[orig_a] + sizes[orig_b]);
            }
            dist(orig_a, k) = d;
            dist(k, orig_a) = d;
        }
        sizes[orig_a] += sizes[orig_b];
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));

        for (int& label : assignment) {
            const auto id = static_cast<std::size_t>(label);
            if (id == best_b) {
                label = static_cast<int>(best_a);
            } else if (id > best_b) {
                label = static_cast<int>(id - 1);
            }
        }
        result.merges.push_back({best_a, best_b});
    }

    result.state.cluster_count = state.cluster_count - m;
    return result;
}

// Replays classifier rows through a merge map: the surviving row becomes
// the elementwise mean of the merged pair; rows above the dropped index
// shift down, mirroring the pseudo-label re-indexing.
inline ClassifierHead resize_classifier(const ClassifierHead& head,
                                        std::span<const MergeEvent> merge_map) {
    std::vector<std::vector<double>> rows(head.weight.rows);
    for (std::size_t i = 0; i < head.weight.rows; ++i) {
        rows[i].assign(head.weight.row(i).begin(), head.weight.row(i).end());
    }
    for (const MergeEvent& ev : merge_map) {
        if (ev.keep >= rows.size() || ev.drop >= rows.size() || ev.keep == ev.drop) {
            throw UsageError("resize_classifier: merge event references invalid rows");
        }
        auto& dst = rows[ev.keep];
        const auto& src = rows[ev.drop];
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = 0.5 * (dst[j] + src[j]);
        rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(ev.drop));
    }
    ClassifierHead out;
    out.weight = Matrix(rows.size(), head.weight.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].end(), out.weight.row(i).begin());
    }
    return out;
}

} // namespace fedsim
