#pragma once

#include <algorithm>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/edge.hpp"
#include "fedsim/params.hpp"
#include "fedsim/profiler.hpp"
#include "fedsim/report.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/scoring.hpp"

namespace fedsim {

// Uniformly random K-subset of {0..N-1}, returned sorted.
inline std::vector<int> select_clients(std::size_t total, std::size_t count, Rng& rng) {
    if (count == 0 || count > total) {
        throw UsageError("select_clients: need 1 <= K <= N");
    }
    std::vector<int> ids(total);
    for (std::size_t i = 0; i < total; ++i) ids[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(total - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

struct ClientUpload {
    int client_id = 0;
    ParamSet params;
    std::size_t data_size = 0; // n_k
};

// Data-volume weighted average over the participating subset. Uploads are
// sorted by client id first so the result is independent of arrival order.
inline ParamSet aggregate(std::vector<ClientUpload> uploads) {
    if (uploads.empty()) throw UsageError("aggregate: no uploads");
    std::sort(uploads.begin(), uploads.end(),
              [](const ClientUpload& a, const ClientUpload& b) {
                  return a.client_id < b.client_id;
              });
    std::vector<ParamSet> models;
    std::vector<double> weights;
    models.reserve(uploads.size());
    weights.reserve(uploads.size());
    for (auto& u : uploads) {
        models.push_back(std::move(u.params));
        weights.push_back(static_cast<double>(u.data_size));
    }
    return weighted_average(models, weights);
}

// EMA blend of each client's local model with the new global model. The
// weighting mu comes from the normalized per-layer distance between the
// two, so dissimilar clients keep more of their own history. With PU off
// every client simply receives the global model.
inline std::map<int, ParamSet> personalized_update(
    const ParamSet& global, const std::map<int, ParamSet>& locals, bool pu_enabled,
    LayerDistance distance = LayerDistance::SquaredL2) {
    std::map<int, ParamSet> out;
    for (const auto& [client_id, local] : locals) {
        if (pu_enabled) {
            const double mu = compute_mu(layer_distances(global, local, distance));
            out.emplace(client_id, ema_update(local, global, mu));
        } else {
            out.emplace(client_id, global);
        }
    }
    return out;
}

// Mutable server-side state across rounds: the global model, the latest
// model held by each client, the round counter and the selection rng.
struct FederationState {
    ParamSet global_model;
    std::map<int, ParamSet> client_models;
    std::size_t round = 0;
    Rng rng;

    FederationState(ParamSet initial, const std::vector<ClientDataset>& clients,
                    std::uint64_t server_seed)
        : global_model(std::move(initial)), rng(server_seed) {
        for (const auto& c : clients) client_models.emplace(c.client_id, global_model);
    }
};

using MetricsSink = std::function<void(const RoundMetrics&)>;

// Process-level execution knobs; not part of the experiment configuration
// and never serialized.
struct RunOptions {
    MetricsSink sink;
    std::ostream* progress = nullptr;
    bool parallel_edges = false;   // run selected edges on worker threads
    bool shuffle_execution = false; // permute edge processing order per round
    ParamSet* final_global = nullptr;             // filled on return when set
    std::map<int, ParamSet>* final_models = nullptr;
};

namespace detail {

inline std::size_t resolved_clients_per_round(const TrainConfig& cfg, std::size_t total) {
    const std::size_t k = cfg.clients_per_round == 0 ? total : cfg.clients_per_round;
    if (k == 0 || k > total) throw UsageError("config: need 1 <= clients_per_round <= client count");
    return k;
}

inline std::size_t common_input_dim(const std::vector<ClientDataset>& clients) {
    if (clients.empty()) throw UsageError("run: no clients");
    const std::size_t dim = clients.front().input_dim();
    for (std::size_t k = 0; k < clients.size(); ++k) {
        if (clients[k].input_dim() != dim) {
            throw UsageError("run: all clients must share one input dimension");
        }
        if (clients[k].client_id != static_cast<int>(k)) {
            throw UsageError("run: client ids must match their positions (0..N-1)");
        }
    }
    return dim;
}

[[noreturn]] inline void rethrow_with_context(std::size_t round, int client_id) {
    try {
        throw;
    } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "round " << round << ", client " << client_id << ": " << e.what();
        std::throw_with_nested(std::runtime_error(msg.str()));
    }
}

struct ExperimentTotals {
    std::size_t training_epochs = 0;
};

inline void finalize_report(ExperimentReport& report, const std::vector<ClientDataset>& clients,
                            const ExperimentTotals& totals) {
    std::sort(report.rounds.begin(), report.rounds.end(),
              [](const RoundMetrics& a, const RoundMetrics& b) {
                  return std::tie(a.round, a.client_id) < std::tie(b.round, b.client_id);
              });
    for (const auto& c : clients) {
        ClientSummary s;
        s.client_id = c.client_id;
        s.train_size = c.size();
        for (const auto& rm : report.rounds) {
            if (rm.client_id != c.client_id) continue;
            s.best_local_rank1 = std::max(s.best_local_rank1, rm.local.rank1);
            s.best_global_rank1 = std::max(s.best_global_rank1, rm.global.rank1);
            s.best_rank1 = std::max({s.best_rank1, rm.local.rank1, rm.global.rank1});
            s.best_map = std::max({s.best_map, rm.local.map, rm.global.map});
            s.epochs += rm.epochs_consumed;
        }
        report.summary.push_back(s);
    }
    report.profiling_epochs = 0;
    for (const auto& p : report.profiles) report.profiling_epochs += p.epochs_spent;
    report.training_epochs = totals.training_epochs;
    report.total_epochs = report.training_epochs + report.profiling_epochs;
}

inline std::vector<EdgeSchedule> build_schedules(const TrainConfig& cfg,
                                                 const std::vector<ClientDataset>& clients,
                                                 const std::vector<ProfileResult>& profiles) {
    std::vector<EdgeSchedule> schedules(clients.size());
    for (std::size_t k = 0; k < clients.size(); ++k) {
        EdgeSchedule& s = schedules[k];
        s.max_epochs = cfg.epochs;
        s.first_round_epochs = cfg.first_round_epochs;
        if (profiles.empty()) {
            s.merges_per_round = std::max<std::size_t>(
                1, static_cast<std::size_t>(static_cast<double>(clients[k].size()) *
                                            cfg.merge_percent));
            s.merge_percent = cfg.merge_percent;
        } else {
            s.merges_per_round = profiles[k].merges_per_round;
            s.merge_percent = profiles[k].merge_percent;
        }
    }
    return schedules;
}

inline void progress_line(std::ostream* os, std::size_t round, std::size_t rounds,
                          std::size_t participants, std::size_t epochs,
                          double mean_global_rank1) {
    if (!os) return;
    *os << "round " << round + 1 << "/" << rounds << ": " << participants
        << " clients, " << epochs << " epochs, mean global rank-1 "
        << std::fixed << std::setprecision(4) << mean_global_rank1
        << std::defaultfloat << "\n";
}

} // namespace detail

// Barrier-synchronized federation loop: select -> local rounds ->
// aggregate -> personalized update, with local and global evaluation on
// every participant's split each round. Results are independent of edge
// completion order.
inline ExperimentReport run_experiment(const TrainConfig& cfg,
                                       const std::vector<ClientDataset>& clients,
                                       const RunOptions& options = {}) {
    validate_config(cfg);
    const std::size_t total = clients.size();
    if (cfg.num_clients != 0 && cfg.num_clients != total) {
        throw UsageError("run: client count disagrees with config num_clients");
    }
    const std::size_t per_round = detail::resolved_clients_per_round(cfg, total);
    const std::size_t input_dim = detail::common_input_dim(clients);
    const BackboneConfig bcfg = backbone_config(cfg, input_dim);

    ExperimentReport report;
    report.mode = "federated";
    report.config = cfg;

    if (cfg.pc) {
        report.profiles = profile_clients(clients, cfg, rank1_scorer());
    }
    const auto schedules = detail::build_schedules(cfg, clients, report.profiles);

    std::vector<EdgeRuntime> edges;
    edges.reserve(total);
    for (std::size_t k = 0; k < total; ++k) {
        edges.emplace_back(clients[k].client_id, clients[k], bcfg, cfg.batch_size,
                           cfg.learning_rate, schedules[k],
                           derive_seed(cfg.seed, k + 1, kSeedTagClient), cfg.linkage);
    }

    FederationState state(Backbone(bcfg, derive_seed(cfg.seed, 0, kSeedTagGlobalInit)).params(),
                          clients, derive_seed(cfg.seed, 0, kSeedTagServer));
    Backbone eval_scratch(bcfg, 0);
    detail::ExperimentTotals totals;

    for (; state.round < cfg.rounds;) {
        const std::size_t round = state.round;
        const std::vector<int> selected = select_clients(total, per_round, state.rng);

        std::vector<int> exec_order = selected;
        if (options.shuffle_execution) {
            Rng order_rng(derive_seed(cfg.seed, round + 1, 0x5u));
            order_rng.shuffle(exec_order);
        }

        std::map<int, EdgeRoundResult> results;
        auto run_edge = [&](int client_id) {
            EdgeRuntime& edge = edges[static_cast<std::size_t>(client_id)];
            try {
                return edge.local_round(state.client_models.at(client_id), round, cfg.pe);
            } catch (...) {
                detail::rethrow_with_context(round, client_id);
            }
        };
        if (options.parallel_edges) {
            std::vector<std::pair<int, std::future<EdgeRoundResult>>> futures;
            futures.reserve(exec_order.size());
            for (int client_id : exec_order) {
                futures.emplace_back(client_id, std::async(std::launch::async, run_edge, client_id));
            }
            for (auto& [client_id, fut] : futures) results.emplace(client_id, fut.get());
        } else {
            for (int client_id : exec_order) results.emplace(client_id, run_edge(client_id));
        }

        std::vector<ClientUpload> uploads;
        uploads.reserve(results.size());
        for (const auto& [client_id, res] : results) {
            uploads.push_back({client_id, res.upload,
                               clients[static_cast<std::size_t>(client_id)].size()});
        }
        state.global_model = aggregate(std::move(uploads));

        std::map<int, ParamSet> locals;
        for (const auto& [client_id, res] : results) locals.emplace(client_id, res.upload);
        for (auto& [client_id, updated] :
             personalized_update(state.global_model, locals, cfg.pu, cfg.layer_distance)) {
            state.client_models.at(client_id) = std::move(updated);
        }

        std::size_t round_epochs = 0;
        double global_rank1_sum = 0.0;
        for (auto& [client_id, res] : results) {
            const auto& data = clients[static_cast<std::size_t>(client_id)];
            try {
                eval_scratch.set_params(res.upload);
                res.metrics.local = evaluate_split(eval_scratch, data);
                eval_scratch.set_params(state.global_model);
                res.metrics.global = evaluate_split(eval_scratch, data);
            } catch (...) {
                detail::rethrow_with_context(round, client_id);
            }
            round_epochs += res.metrics.epochs_consumed;
            global_rank1_sum += res.metrics.global.rank1;
            if (options.sink) options.sink(res.metrics);
            report.rounds.push_back(res.metrics);
        }
        totals.training_epochs += round_epochs;
        detail::progress_line(options.progress, round, cfg.rounds, results.size(), round_epochs,
                              global_rank1_sum / static_cast<double>(results.size()));
        ++state.round;
    }

    detail::finalize_report(report, clients, totals);
    if (options.final_global) *options.final_global = std::move(state.global_model);
    if (options.final_models) *options.final_models = std::move(state.client_models);
    return report;
}

// Per-client training with no aggregation: every client runs the same
// local loop against its own model only. PE and PC are honored; the
// global-model metrics mirror the client's own model.
inline ExperimentReport run_standalone(const TrainConfig& cfg,
                                       const std::vector<ClientDataset>& clients,
                                       const RunOptions& options = {}) {
    validate_config(cfg);
    if (clients.empty()) throw UsageError("run: no clients");
    const std::size_t input_dim = detail::common_input_dim(clients);
    const BackboneConfig bcfg = backbone_config(cfg, input_dim);

    ExperimentReport report;
    report.mode = "standalone";
    report.config = cfg;

    if (cfg.pc) {
        report.profiles = profile_clients(clients, cfg, rank1_scorer());
    }
    const auto schedules = detail::build_schedules(cfg, clients, report.profiles);

    const ParamSet initial =
        Backbone(bcfg, derive_seed(cfg.seed, 0, kSeedTagGlobalInit)).params();
    Backbone eval_scratch(bcfg, 0);
    detail::ExperimentTotals totals;
    std::map<int, ParamSet> final_models;

    for (std::size_t k = 0; k < clients.size(); ++k) {
        EdgeRuntime edge(clients[k].client_id, clients[k], bcfg, cfg.batch_size,
                         cfg.learning_rate, schedules[k],
                         derive_seed(cfg.seed, k + 1, kSeedTagClient), cfg.linkage);
        ParamSet model = initial;
        for (std::size_t round = 0; round < cfg.rounds; ++round) {
            EdgeRoundResult res;
            try {
                res = edge.local_round(model, round, cfg.pe);
                eval_scratch.set_params(res.upload);
                res.metrics.local = evaluate_split(eval_scratch, clients[k]);
                res.metrics.global = res.metrics.local;
            } catch (...) {
                detail::rethrow_with_context(round, clients[k].client_id);
            }
            model = std::move(res.upload);
            totals.training_epochs += res.metrics.epochs_consumed;
            if (options.sink) options.sink(res.metrics);
            report.rounds.push_back(res.metrics);
        }
        if (options.progress) {
            *options.progress << "client " << clients[k].client_id << ": standalone "
                              << cfg.rounds << " rounds done\n";
        }
        final_models.emplace(clients[k].client_id, std::move(model));
    }

    detail::finalize_report(report, clients, totals);
    if (options.final_models) *options.final_models = std::move(final_models);
    return report;
}

} // namespace fedsim
