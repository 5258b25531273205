#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fedsim/clustering.hpp"
#include "fedsim/config.hpp"
#include "fedsim/net.hpp"
#include "fedsim/report.hpp"
#include "fedsim/scoring.hpp"
#include "fedsim/synth.hpp"

namespace fedsim {

// Per-round accuracy estimate used to pick the best profiling round. The
// training data is unlabeled, so the score source is pluggable; the default
// uses the held-out labeled query/gallery split.
using ProfileScorer = std::function<double(const Backbone&, const ClientDataset&)>;

inline ProfileScorer rank1_scorer() {
    return [](const Backbone& model, const ClientDataset& data) {
        return evaluate_split(model, data).rank1;
    };
}

// Merge schedule from an identity estimate: m_k = floor((n_k - M) / R),
// mp_k = m_k / n_k.
inline std::pair<std::size_t, double> derive_schedule(std::size_t train_size,
                                                      std::size_t estimated_identities,
                                                      std::size_t rounds) {
    if (rounds == 0) throw UsageError("derive_schedule: rounds must be >= 1");
    if (estimated_identities == 0 || estimated_identities > train_size) {
        throw UsageError("derive_schedule: identity estimate must lie in [1, n]");
    }
    const std::size_t m = (train_size - estimated_identities) / rounds;
    return {m, static_cast<double>(m) / static_cast<double>(train_size)};
}

// Raw per-round data of one client's profiling run.
struct ProfilePass {
    std::vector<double> scores;           // score after round r's training
    std::vector<std::size_t> cluster_counts; // M used during round r
    std::size_t epochs_spent = 0;
};

// Cheap standalone training run: coarse merge percent, few epochs, fixed
// schedule (no early stop). Never touches federation state.
inline ProfilePass profile_pass(const ClientDataset& data, const TrainConfig& cfg,
                                const ProfileScorer& scorer) {
    if (!scorer) {
        throw UsageError(
            "profiling needs a scorer: supply a labeled validation split or an "
            "unsupervised score callback");
    }
    const auto& pc = cfg.profiling;
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(data.client_id) + 1,
                                           kSeedTagProfile);
    Backbone backbone(backbone_config(cfg, data.input_dim()), derive_seed(seed, 1));
    ClassifierHead head = ClassifierHead::init(data.size(), cfg.embedding_dim, derive_seed(seed, 2));
    ClusterState state = init_clusters(data.size(), pc.merge_percent);

    ProfilePass pass;
    for (std::size_t r = 0; r < pc.rounds; ++r) {
        pass.cluster_counts.push_back(state.cluster_count);
        const std::size_t budget = r == 0 ? pc.first_round_epochs : pc.rest_epochs;
        for (std::size_t epoch = 0; epoch < budget; ++epoch) {
            train_epoch(backbone, head, data.train, labels(state), cfg.learning_rate,
                        cfg.batch_size, derive_seed(seed, r + 1, epoch + 1));
            ++pass.epochs_spent;
        }
        pass.scores.push_back(scorer(backbone, data));

        const Matrix features = extract_features(backbone, data.train);
        ClusterRoundResult cr = cluster_round(state, features, std::nullopt, cfg.linkage);
        state = std::move(cr.state);
        head = resize_classifier(head, cr.merges);
    }
    return pass;
}

namespace detail {

inline std::size_t argmax_round(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < scores.size(); ++r) {
        if (scores[r] > scores[best]) best = r;
    }
    return best;
}

} // namespace detail

// Profiles every client and derives per-client merge schedules. By default
// one best round is chosen by mean score across clients and each client's
// cluster count is read at that round; per_client_best switches to each
// client's own best round.
inline std::vector<ProfileResult> profile_clients(const std::vector<ClientDataset>& clients,
                                                  const TrainConfig& cfg,
                                                  const ProfileScorer& scorer) {
    if (clients.empty()) throw UsageError("profile_clients: no clients");
    std::vector<ProfilePass> passes;
    passes.reserve(clients.size());
    for (const auto& c : clients) passes.push_back(profile_pass(c, cfg, scorer));

    std::size_t shared_best = 0;
    if (!cfg.profiling.per_client_best) {
        std::vector<double> mean_scores(cfg.profiling.rounds, 0.0);
        for (const auto& p : passes) {
            for (std::size_t r = 0; r < p.scores.size(); ++r) mean_scores[r] += p.scores[r];
        }
        shared_best = detail::argmax_round(mean_scores);
    }

    std::vector<ProfileResult> results;
    results.reserve(clients.size());
    for (std::size_t k = 0; k < clients.size(); ++k) {
        const auto& pass = passes[k];
        ProfileResult res;
        res.client_id = clients[k].client_id;
        res.best_round = cfg.profiling.per_client_best ? detail::argmax_round(pass.scores)
                                                       : shared_best;
        res.estimated_identities = pass.cluster_counts[res.best_round];
        const auto [m, mp] = derive_schedule(clients[k].size(), res.estimated_identities,
                                             cfg.rounds);
        res.merges_per_round = m;
        res.merge_percent = mp;
        res.epochs_spent = pass.epochs_spent;
        res.round_scores = pass.scores;
        results.push_back(std::move(res));
    }
    return results;
}

// Single-client convenience wrapper (per-client best round).
inline ProfileResult profile_client(const ClientDataset& client, const TrainConfig& cfg,
                                    const ProfileScorer& scorer) {
    const ProfilePass pass = profile_pass(client, cfg, scorer);
    ProfileResult res;
    res.client_id = client.client_id;
    res.best_round = detail::argmax_round(pass.scores);
    res.estimated_identities = pass.cluster_counts[res.best_round];
    const auto [m, mp] = derive_schedule(client.size(), res.estimated_identities, cfg.rounds);
    res.merges_per_round = m;
    res.merge_percent = mp;
    res.epochs_spent = pass.epochs_spent;
    res.round_scores = pass.scores;
    return res;
}

} // namespace fedsim
