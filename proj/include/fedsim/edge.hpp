#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fedsim/clustering.hpp"
#include "fedsim/net.hpp"
#include "fedsim/report.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/synth.hpp"

namespace fedsim {

// Early-stop rule of the epoch controller: stop the round once any batch
// hit 100% precision or the epoch's cumulative average exceeded 95%.
inline bool should_early_stop(const EpochFeedback& feedback) {
    for (double p : feedback.batch_precisions) {
        if (p == 1.0) return true;
    }
    return feedback.cumulative_avg > 0.95;
}

// Per-client training plan for a full experiment.
struct EdgeSchedule {
    std::size_t max_epochs = 5;                     // E
    std::optional<std::size_t> first_round_epochs;  // fixed round-0 budget
    std::size_t merges_per_round = 1;               // m_k
    double merge_percent = 0.05;                    // mp_k
};

struct EdgeRoundResult {
    ParamSet upload; // backbone layers only; the classifier never leaves the edge
    RoundMetrics metrics;
};

// One client's runtime: model, classifier, cluster state and history.
// Owned by a single task; the server talks to it only through ParamSets.
class EdgeRuntime {
public:
    EdgeRuntime(int client_id, const ClientDataset& data, const BackboneConfig& backbone_cfg,
                std::size_t batch_size, double learning_rate, EdgeSchedule schedule,
                std::uint64_t client_seed, Linkage linkage = Linkage::Single)
        : client_id_(client_id),
          data_(&data),
          batch_size_(batch_size),
          learning_rate_(learning_rate),
          schedule_(schedule),
          client_seed_(client_seed),
          linkage_(linkage),
          backbone_(backbone_cfg, derive_seed(client_seed, 1)),
          head_(ClassifierHead::init(data.size(), backbone_cfg.embedding_dim,
                                     derive_seed(client_seed, 2))),
          cluster_state_(init_clusters_with_schedule(data.size(), schedule.merges_per_round,
                                                     schedule.merge_percent)) {
        if (data.input_dim() != backbone_cfg.input_dim) {
            throw ShapeError("edge: dataset input_dim != backbone input_dim");
        }
    }

    int client_id() const { return client_id_; }
    const ClientDataset& data() const { return *data_; }
    const Backbone& backbone() const { return backbone_; }
    const ClassifierHead& head() const { return head_; }
    const ClusterState& cluster_state() const { return cluster_state_; }
    const std::vector<RoundMetrics>& history() const { return history_; }
    const EdgeSchedule& schedule() const { return schedule_; }

    std::size_t epoch_budget(std::size_t round_idx) const {
        if (round_idx == 0 && schedule_.first_round_epochs) return *schedule_.first_round_epochs;
        return schedule_.max_epochs;
    }

    // One client round: adopt the incoming model, train with the epoch
    // controller (round 0 always spends the full budget), then run the
    // clustering flow and resize the classifier. Returns the trained
    // backbone and this round's metrics.
    EdgeRoundResult local_round(const ParamSet& incoming, std::size_t round_idx,
                                bool pe_enabled) {
        backbone_.set_params(incoming);

        RoundMetrics metrics;
        metrics.round = round_idx;
        metrics.client_id = client_id_;

        const std::size_t budget = epoch_budget(round_idx);
        for (std::size_t epoch = 0; epoch < budget; ++epoch) {
            const auto seed = derive_seed(client_seed_, round_idx + 1, epoch + 1);
            EpochFeedback fb =
                train_epoch(backbone_, head_, data_->train, labels(cluster_state_),
                            learning_rate_, batch_size_, seed);
            if (epoch == 0) metrics.precision_first_epoch = fb.cumulative_avg;
            metrics.precision_last_epoch = fb.cumulative_avg;
            ++metrics.epochs_consumed;
            if (pe_enabled && round_idx > 0 && should_early_stop(fb)) break;
        }

        const Matrix features = extract_features(backbone_, data_->train);
        ClusterRoundResult cr = cluster_round(cluster_state_, features,
                                              schedule_.merges_per_round, linkage_);
        cluster_state_ = std::move(cr.state);
        head_ = resize_classifier(head_, cr.merges);
        metrics.cluster_count = cluster_state_.cluster_count;
        metrics.clustering_exhausted = cr.exhausted;

        history_.push_back(metrics);
        return {backbone_.params(), std::move(metrics)};
    }

private:
    int client_id_;
    const ClientDataset* data_;
    std::size_t batch_size_;
    double learning_rate_;
    EdgeSchedule schedule_;
    std::uint64_t client_seed_;
    Linkage linkage_;
    Backbone backbone_;
    ClassifierHead head_;
    ClusterState cluster_state_;
    std::vector<RoundMetrics> history_;
};

} // namespace fedsim
