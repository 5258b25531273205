#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/config.hpp"

namespace fedsim {

struct EvalMetrics {
    double rank1 = 0.0;
    double rank5 = 0.0;
    double rank10 = 0.0;
    double map = 0.0;

    bool operator==(const EvalMetrics&) const = default;
};

// One client's record for one training round.
struct RoundMetrics {
    std::size_t round = 0;
    int client_id = 0;
    std::size_t epochs_consumed = 0;
    std::size_t cluster_count = 0;          // M after this round's clustering
    double precision_first_epoch = 0.0;      // cumulative batch-precision averages
    double precision_last_epoch = 0.0;
    bool clustering_exhausted = false;
    EvalMetrics local;  // this client's trained model on its own split
    EvalMetrics global; // the aggregated model on the same split

    bool operator==(const RoundMetrics&) const = default;
};

// Output of the profiling pass for one client.
struct ProfileResult {
    int client_id = 0;
    std::size_t estimated_identities = 0; // M_profile
    std::size_t merges_per_round = 0;     // m_k
    double merge_percent = 0.0;           // mp_k
    std::size_t best_round = 0;
    std::size_t epochs_spent = 0;
    std::vector<double> round_scores;

    bool operator==(const ProfileResult&) const = default;
};

struct ClientSummary {
    int client_id = 0;
    std::size_t train_size = 0;
    double best_rank1 = 0.0; // best over rounds, local and global models
    double best_map = 0.0;
    double best_local_rank1 = 0.0;
    double best_global_rank1 = 0.0;
    std::size_t epochs = 0;

    bool operator==(const ClientSummary&) const = default;
};

struct ExperimentReport {
    int schema_version = 1;
    std::string mode; // "federated" or "standalone"
    TrainConfig config;
    std::vector<ProfileResult> profiles; // present when PC ran
    std::vector<RoundMetrics> rounds;    // sorted by (round, client_id)
    std::vector<ClientSummary> summary;
    std::size_t training_epochs = 0;
    std::size_t profiling_epochs = 0;
    std::size_t total_epochs = 0;

    bool operator==(const ExperimentReport&) const = default;
};

} // namespace fedsim
