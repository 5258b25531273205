#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedsim/clustering.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/net.hpp"
#include "fedsim/params.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/synth.hpp"

namespace fedsim {

// Pre-run profiling pass settings (cheap standalone schedule estimation).
struct ProfilingConfig {
    double merge_percent = 0.08;
    std::size_t rounds = 12;
    std::size_t first_round_epochs = 5;
    std::size_t rest_epochs = 1;
    bool per_client_best = false; // default: shared best round across clients

    bool operator==(const ProfilingConfig&) const = default;
};

// Federation hyperparameters; mirrored field-for-field by the config file.
struct TrainConfig {
    std::size_t epochs = 5;            // E: per-round epoch budget
    std::size_t batch_size = 16;       // B
    std::size_t rounds = 20;           // R
    std::size_t clients_per_round = 0; // K; 0 = all clients
    std::size_t num_clients = 0;       // N; 0 = derive from client list
    double learning_rate = 0.1;
    std::size_t embedding_dim = 8;     // v
    double merge_percent = 0.05;       // default mp when PC is off
    bool pe = false;
    bool pc = false;
    bool pu = false;
    std::uint64_t seed = 1;
    std::optional<std::size_t> first_round_epochs; // fixed round-0 budget override
    ProfilingConfig profiling;
    BackboneKind backbone_kind = BackboneKind::Linear;
    std::size_t hidden_dim = 16; // one-hidden backbone only
    LayerDistance layer_distance = LayerDistance::SquaredL2;
    Linkage linkage = Linkage::Single;
    std::vector<ClientSpec> clients;

    bool operator==(const TrainConfig&) const = default;
};

inline void validate_config(const TrainConfig& cfg) {
    if (cfg.rounds == 0) throw UsageError("config: rounds must be >= 1");
    if (cfg.batch_size == 0) throw UsageError("config: batch_size must be >= 1");
    if (cfg.epochs == 0) throw UsageError("config: epochs must be >= 1");
    if (cfg.embedding_dim == 0) throw UsageError("config: embedding_dim must be >= 1");
    if (!(cfg.merge_percent > 0.0 && cfg.merge_percent < 1.0)) {
        throw UsageError("config: merge_percent must lie in (0, 1)");
    }
    if (!(cfg.profiling.merge_percent > 0.0 && cfg.profiling.merge_percent < 1.0)) {
        throw UsageError("config: profiling merge_percent must lie in (0, 1)");
    }
    if (cfg.profiling.rounds == 0 || cfg.profiling.first_round_epochs == 0 ||
        cfg.profiling.rest_epochs == 0) {
        throw UsageError("config: profiling rounds and epochs must be >= 1");
    }
    if (cfg.first_round_epochs && *cfg.first_round_epochs == 0) {
        throw UsageError("config: first_round_epochs must be >= 1");
    }
    if (cfg.backbone_kind == BackboneKind::OneHidden && cfg.hidden_dim == 0) {
        throw UsageError("config: hidden_dim must be >= 1 for the one-hidden backbone");
    }
    if (cfg.num_clients != 0 && !cfg.clients.empty() && cfg.num_clients != cfg.clients.size()) {
        throw UsageError("config: num_clients disagrees with the client list length");
    }
}

// Seed tags keep the derived rng streams apart.
inline constexpr std::uint64_t kSeedTagClient = 0x11;
inline constexpr std::uint64_t kSeedTagData = 0x22;
inline constexpr std::uint64_t kSeedTagServer = 0x33;
inline constexpr std::uint64_t kSeedTagGlobalInit = 0x44;
inline constexpr std::uint64_t kSeedTagProfile = 0x55;

// Fills in derived client seeds (spec.seed == 0) from the experiment seed.
inline std::vector<ClientSpec> resolved_client_specs(const TrainConfig& cfg) {
    std::vector<ClientSpec> specs = cfg.clients;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (specs[k].seed == 0) {
            specs[k].seed = derive_seed(cfg.seed, k + 1, kSeedTagData);
        }
    }
    return specs;
}

inline BackboneConfig backbone_config(const TrainConfig& cfg, std::size_t input_dim) {
    BackboneConfig bc;
    bc.kind = cfg.backbone_kind;
    bc.input_dim = input_dim;
    bc.hidden_dim = cfg.hidden_dim;
    bc.embedding_dim = cfg.embedding_dim;
    return bc;
}

} // namespace fedsim
