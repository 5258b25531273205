#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/params.hpp"
#include "fedsim/report.hpp"

namespace fedsim {

// ordered_json keeps insertion order, so serialized files are stable
// byte-for-byte across runs.
using Json = nlohmann::ordered_json;

inline std::string to_string(BackboneKind k) {
    return k == BackboneKind::Linear ? "linear" : "one_hidden";
}
inline std::string to_string(LayerDistance d) {
    return d == LayerDistance::SquaredL2 ? "squared_l2" : "l2";
}
inline std::string to_string(Linkage l) { return l == Linkage::Single ? "single" : "average"; }

inline BackboneKind backbone_kind_from_string(const std::string& s) {
    if (s == "linear") return BackboneKind::Linear;
    if (s == "one_hidden") return BackboneKind::OneHidden;
    throw ParseError("unknown backbone kind '" + s + "' (expected linear|one_hidden)");
}
inline LayerDistance layer_distance_from_string(const std::string& s) {
    if (s == "squared_l2") return LayerDistance::SquaredL2;
    if (s == "l2") return LayerDistance::L2;
    throw ParseError("unknown layer distance '" + s + "' (expected squared_l2|l2)");
}
inline Linkage linkage_from_string(const std::string& s) {
    if (s == "single") return Linkage::Single;
    if (s == "average") return Linkage::Average;
    throw ParseError("unknown linkage '" + s + "' (expected single|average)");
}

namespace detail {

template <typename T>
T field(const Json& j, std::string_view key) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ParseError("missing field '" + std::string(key) + "'");
    }
    try {
        return it->get<T>();
    } catch (const Json::exception& e) {
        throw ParseError("field '" + std::string(key) + "': " + e.what());
    }
}

template <typename T>
T field_or(const Json& j, std::string_view key, T fallback) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const Json::exception& e) {
        throw ParseError("field '" + std::string(key) + "': " + e.what());
    }
}

inline void check_allowed_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                               const char* what) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (auto a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ParseError(std::string(what) + ": unknown key '" + item.key() + "'");
        }
    }
}

} // namespace detail

// ---- client specs ----------------------------------------------------

inline Json client_spec_to_json(const ClientSpec& s) {
    Json j;
    j["train_size"] = s.train_size;
    j["identities"] = s.identities;
    j["input_dim"] = s.input_dim;
    j["center_dim"] = s.center_dim;
    j["noise"] = s.noise;
    j["region_spread"] = s.region_spread;
    j["query_per_identity"] = s.query_per_identity;
    j["gallery_per_identity"] = s.gallery_per_identity;
    j["with_cameras"] = s.with_cameras;
    j["seed"] = s.seed;
    return j;
}

inline ClientSpec client_spec_from_json(const Json& j) {
    detail::check_allowed_keys(j,
                               {"train_size", "identities", "input_dim", "center_dim",
                                "noise", "region_spread", "query_per_identity",
                                "gallery_per_identity", "with_cameras", "seed"},
                               "client spec");
    ClientSpec s;
    s.train_size = detail::field<std::size_t>(j, "train_size");
    s.identities = detail::field<std::size_t>(j, "identities");
    s.input_dim = detail::field_or<std::size_t>(j, "input_dim", s.input_dim);
    s.center_dim = detail::field_or<std::size_t>(j, "center_dim", s.center_dim);
    s.noise = detail::field_or<double>(j, "noise", s.noise);
    s.region_spread = detail::field_or<double>(j, "region_spread", s.region_spread);
    s.query_per_identity = detail::field_or<std::size_t>(j, "query_per_identity", s.query_per_identity);
    s.gallery_per_identity =
        detail::field_or<std::size_t>(j, "gallery_per_identity", s.gallery_per_identity);
    s.with_cameras = detail::field_or<bool>(j, "with_cameras", s.with_cameras);
    s.seed = detail::field_or<std::uint64_t>(j, "seed", s.seed);
    return s;
}

// ---- train config ------------------------------------------------------

inline Json config_to_json(const TrainConfig& cfg) {
    Json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["rounds"] = cfg.rounds;
    j["clients_per_round"] = cfg.clients_per_round;
    j["num_clients"] = cfg.num_clients;
    j["learning_rate"] = cfg.learning_rate;
    j["embedding_dim"] = cfg.embedding_dim;
    j["merge_percent"] = cfg.merge_percent;
    j["pe"] = cfg.pe;
    j["pc"] = cfg.pc;
    j["pu"] = cfg.pu;
    j["seed"] = cfg.seed;
    if (cfg.first_round_epochs) {
        j["first_round_epochs"] = *cfg.first_round_epochs;
    } else {
        j["first_round_epochs"] = nullptr;
    }
    j["profiling"] = Json{{"merge_percent", cfg.profiling.merge_percent},
                          {"rounds", cfg.profiling.rounds},
                          {"first_round_epochs", cfg.profiling.first_round_epochs},
                          {"rest_epochs", cfg.profiling.rest_epochs},
                          {"per_client_best", cfg.profiling.per_client_best}};
    j["backbone"] = Json{{"kind", to_string(cfg.backbone_kind)}, {"hidden_dim", cfg.hidden_dim}};
    j["layer_distance"] = to_string(cfg.layer_distance);
    j["linkage"] = to_string(cfg.linkage);
    j["clients"] = Json::array();
    for (const auto& c : cfg.clients) j["clients"].push_back(client_spec_to_json(c));
    return j;
}

inline TrainConfig config_from_json(const Json& j) {
    detail::check_allowed_keys(
        j,
        {"epochs", "batch_size", "rounds", "clients_per_round", "num_clients", "learning_rate",
         "embedding_dim", "merge_percent", "pe", "pc", "pu", "seed", "first_round_epochs",
         "profiling", "backbone", "layer_distance", "linkage", "clients"},
        "config");
    TrainConfig cfg;
    cfg.epochs = detail::field_or<std::size_t>(j, "epochs", cfg.epochs);
    cfg.batch_size = detail::field_or<std::size_t>(j, "batch_size", cfg.batch_size);
    cfg.rounds = detail::field_or<std::size_t>(j, "rounds", cfg.rounds);
    cfg.clients_per_round = detail::field_or<std::size_t>(j, "clients_per_round", cfg.clients_per_round);
    cfg.num_clients = detail::field_or<std::size_t>(j, "num_clients", cfg.num_clients);
    cfg.learning_rate = detail::field_or<double>(j, "learning_rate", cfg.learning_rate);
    cfg.embedding_dim = detail::field_or<std::size_t>(j, "embedding_dim", cfg.embedding_dim);
    cfg.merge_percent = detail::field_or<double>(j, "merge_percent", cfg.merge_percent);
    cfg.pe = detail::field_or<bool>(j, "pe", cfg.pe);
    cfg.pc = detail::field_or<bool>(j, "pc", cfg.pc);
    cfg.pu = detail::field_or<bool>(j, "pu", cfg.pu);
    cfg.seed = detail::field_or<std::uint64_t>(j, "seed", cfg.seed);
    if (j.contains("first_round_epochs") && !j.at("first_round_epochs").is_null()) {
        cfg.first_round_epochs = detail::field<std::size_t>(j, "first_round_epochs");
    }
    if (j.contains("profiling")) {
        const Json& p = j.at("profiling");
        detail::check_allowed_keys(
            p, {"merge_percent", "rounds", "first_round_epochs", "rest_epochs", "per_client_best"},
            "profiling config");
        cfg.profiling.merge_percent =
            detail::field_or<double>(p, "merge_percent", cfg.profiling.merge_percent);
        cfg.profiling.rounds = detail::field_or<std::size_t>(p, "rounds", cfg.profiling.rounds);
        cfg.profiling.first_round_epochs =
            detail::field_or<std::size_t>(p, "first_round_epochs", cfg.profiling.first_round_epochs);
        cfg.profiling.rest_epochs =
            detail::field_or<std::size_t>(p, "rest_epochs", cfg.profiling.rest_epochs);
        cfg.profiling.per_client_best =
            detail::field_or<bool>(p, "per_client_best", cfg.profiling.per_client_best);
    }
    if (j.contains("backbone")) {
        const Json& b = j.at("backbone");
        detail::check_allowed_keys(b, {"kind", "hidden_dim"}, "backbone config");
        cfg.backbone_kind =
            backbone_kind_from_string(detail::field_or<std::string>(b, "kind", "linear"));
        cfg.hidden_dim = detail::field_or<std::size_t>(b, "hidden_dim", cfg.hidden_dim);
    }
    cfg.layer_distance =
        layer_distance_from_string(detail::field_or<std::string>(j, "layer_distance", "squared_l2"));
    cfg.linkage = linkage_from_string(detail::field_or<std::string>(j, "linkage", "single"));
    if (j.contains("clients")) {
        for (const Json& c : j.at("clients")) cfg.clients.push_back(client_spec_from_json(c));
    }
    return cfg;
}

// ---- metrics and reports ----------------------------------------------

inline Json eval_metrics_to_json(const EvalMetrics& m) {
    return Json{{"rank1", m.rank1}, {"rank5", m.rank5}, {"rank10", m.rank10}, {"map", m.map}};
}

inline EvalMetrics eval_metrics_from_json(const Json& j) {
    EvalMetrics m;
    m.rank1 = detail::field<double>(j, "rank1");
    m.rank5 = detail::field<double>(j, "rank5");
    m.rank10 = detail::field<double>(j, "rank10");
    m.map = detail::field<double>(j, "map");
    return m;
}

inline Json round_metrics_to_json(const RoundMetrics& m) {
    Json j;
    j["round"] = m.round;
    j["client"] = m.client_id;
    j["epochs"] = m.epochs_consumed;
    j["clusters"] = m.cluster_count;
    j["precision_first"] = m.precision_first_epoch;
    j["precision_last"] = m.precision_last_epoch;
    j["exhausted"] = m.clustering_exhausted;
    j["local"] = eval_metrics_to_json(m.local);
    j["global"] = eval_metrics_to_json(m.global);
    return j;
}

inline RoundMetrics round_metrics_from_json(const Json& j) {
    RoundMetrics m;
    m.round = detail::field<std::size_t>(j, "round");
    m.client_id = detail::field<int>(j, "client");
    m.epochs_consumed = detail::field<std::size_t>(j, "epochs");
    m.cluster_count = detail::field<std::size_t>(j, "clusters");
    m.precision_first_epoch = detail::field<double>(j, "precision_first");
    m.precision_last_epoch = detail::field<double>(j, "precision_last");
    m.clustering_exhausted = detail::field<bool>(j, "exhausted");
    m.local = eval_metrics_from_json(detail::field<Json>(j, "local"));
    m.global = eval_metrics_from_json(detail::field<Json>(j, "global"));
    return m;
}

inline Json profile_result_to_json(const ProfileResult& p) {
    Json j;
    j["client"] = p.client_id;
    j["estimated_identities"] = p.estimated_identities;
    j["merges_per_round"] = p.merges_per_round;
    j["merge_percent"] = p.merge_percent;
    j["best_round"] = p.best_round;
    j["epochs_spent"] = p.epochs_spent;
    j["round_scores"] = p.round_scores;
    return j;
}

inline ProfileResult profile_result_from_json(const Json& j) {
    ProfileResult p;
    p.client_id = detail::field<int>(j, "client");
    p.estimated_identities = detail::field<std::size_t>(j, "estimated_identities");
    p.merges_per_round = detail::field<std::size_t>(j, "merges_per_round");
    p.merge_percent = detail::field<double>(j, "merge_percent");
    p.best_round = detail::field<std::size_t>(j, "best_round");
    p.epochs_spent = detail::field<std::size_t>(j, "epochs_spent");
    p.round_scores = detail::field<std::vector<double>>(j, "round_scores");
    return p;
}

inline Json client_summary_to_json(const ClientSummary& s) {
    Json j;
    j["client"] = s.client_id;
    j["train_size"] = s.train_size;
    j["best_rank1"] = s.best_rank1;
    j["best_map"] = s.best_map;
    j["best_local_rank1"] = s.best_local_rank1;
    j["best_global_rank1"] = s.best_global_rank1;
    j["epochs"] = s.epochs;
    return j;
}

inline ClientSummary client_summary_from_json(const Json& j) {
    ClientSummary s;
    s.client_id = detail::field<int>(j, "client");
    s.train_size = detail::field<std::size_t>(j, "train_size");
    s.best_rank1 = detail::field<double>(j, "best_rank1");
    s.best_map = detail::field<double>(j, "best_map");
    s.best_local_rank1 = detail::field<double>(j, "best_local_rank1");
    s.best_global_rank1 = detail::field<double>(j, "best_global_rank1");
    s.epochs = detail::field<std::size_t>(j, "epochs");
    return s;
}

inline constexpr int kReportSchemaVersion = 1;

inline Json report_to_json(const ExperimentReport& r) {
    Json j;
    j["schema_version"] = r.schema_version;
    j["mode"] = r.mode;
    j["config"] = config_to_json(r.config);
    j["profiles"] = Json::array();
    for (const auto& p : r.profiles) j["profiles"].push_back(profile_result_to_json(p));
    j["rounds"] = Json::array();
    for (const auto& m : r.rounds) j["rounds"].push_back(round_metrics_to_json(m));
    j["summary"] = Json::array();
    for (const auto& s : r.summary) j["summary"].push_back(client_summary_to_json(s));
    j["training_epochs"] = r.training_epochs;
    j["profiling_epochs"] = r.profiling_epochs;
    j["total_epochs"] = r.total_epochs;
    return j;
}

inline ExperimentReport report_from_json(const Json& j) {
    ExperimentReport r;
    r.schema_version = detail::field<int>(j, "schema_version");
    if (r.schema_version != kReportSchemaVersion) {
        throw ParseError("unsupported report schema version " +
                         std::to_string(r.schema_version));
    }
    r.mode = detail::field<std::string>(j, "mode");
    r.config = config_from_json(detail::field<Json>(j, "config"));
    for (const Json& p : detail::field<Json>(j, "profiles")) {
        r.profiles.push_back(profile_result_from_json(p));
    }
    for (const Json& m : detail::field<Json>(j, "rounds")) {
        r.rounds.push_back(round_metrics_from_json(m));
    }
    for (const Json& s : detail::field<Json>(j, "summary")) {
        r.summary.push_back(client_summary_from_json(s));
    }
    r.training_epochs = detail::field<std::size_t>(j, "training_epochs");
    r.profiling_epochs = detail::field<std::size_t>(j, "profiling_epochs");
    r.total_epochs = detail::field<std::size_t>(j, "total_epochs");
    return r;
}

// ---- files --------------------------------------------------------------

namespace detail {

inline void ensure_parent_dir(const std::filesystem::path& path) {
    const auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

inline Json parse_json_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        // nlohmann messages already carry line/column context
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace detail

inline void save_config(const TrainConfig& cfg, const std::filesystem::path& path) {
    detail::ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    out << config_to_json(cfg).dump(2) << "\n";
    if (!out) throw ParseError("failed to write '" + path.string() + "'");
}

inline TrainConfig load_config(const std::filesystem::path& path) {
    try {
        return config_from_json(detail::parse_json_file(path));
    } catch (const ParseError&) {
        throw;
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline void save_report(const ExperimentReport& report, const std::filesystem::path& path) {
    detail::ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    out << report_to_json(report).dump(2) << "\n";
    if (!out) throw ParseError("failed to write '" + path.string() + "'");
}

inline ExperimentReport load_report(const std::filesystem::path& path) {
    try {
        return report_from_json(detail::parse_json_file(path));
    } catch (const ParseError&) {
        throw;
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline std::string metrics_jsonl_line(const RoundMetrics& m) {
    return round_metrics_to_json(m).dump();
}

inline void write_metrics_csv(std::span<const RoundMetrics> rounds,
                              const std::filesystem::path& path) {
    detail::ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    out << "round,client,epochs,clusters,precision_first,precision_last,exhausted,"
           "local_rank1,local_rank5,local_rank10,local_map,"
           "global_rank1,global_rank5,global_rank10,global_map\n";
    const auto num = [](double v) { return Json(v).dump(); }; // shortest round-trip repr
    for (const auto& m : rounds) {
        out << m.round << ',' << m.client_id << ',' << m.epochs_consumed << ','
            << m.cluster_count << ',' << num(m.precision_first_epoch) << ','
            << num(m.precision_last_epoch) << ',' << (m.clustering_exhausted ? 1 : 0) << ','
            << num(m.local.rank1) << ',' << num(m.local.rank5) << ',' << num(m.local.rank10)
            << ',' << num(m.local.map) << ',' << num(m.global.rank1) << ',' << num(m.global.rank5)
            << ',' << num(m.global.rank10) << ',' << num(m.global.map) << '\n';
    }
    if (!out) throw ParseError("failed to write '" + path.string() + "'");
}

// ---- parameter sets (text header + little-endian doubles) ---------------

inline constexpr std::string_view kParamsMagic = "fedsim-params v1";

inline void save_params(const ParamSet& params, const std::filesystem::path& path) {
    for (const auto& layer : params.layers) {
        if (layer.name.empty() ||
            layer.name.find_first_of(" \t\n\r") != std::string::npos) {
            throw UsageError("save_params: layer names must be nonempty and whitespace-free");
        }
    }
    detail::ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    out << kParamsMagic << "\n";
    out << "layers " << params.layers.size() << "\n";
    for (const auto& layer : params.layers) {
        out << layer.name << " " << layer.values.size() << "\n";
    }
    out << "binary\n";
    for (const auto& layer : params.layers) {
        for (double v : layer.values) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            char bytes[8];
            for (int b = 0; b < 8; ++b) {
                bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
            }
            out.write(bytes, 8);
        }
    }
    if (!out) throw ParseError("failed to write '" + path.string() + "'");
}

inline ParamSet load_params(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    std::size_t pos = 0;
    const auto next_line = [&]() -> std::string {
        const auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            throw ParseError(path.string() + ": truncated header");
        }
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    if (next_line() != kParamsMagic) {
        throw ParseError(path.string() + ": not a fedsim parameter file");
    }
    std::istringstream counts(next_line());
    std::string word;
    std::size_t layer_count = 0;
    if (!(counts >> word >> layer_count) || word != "layers") {
        throw ParseError(path.string() + ": malformed layer count line");
    }

    ParamSet params;
    std::size_t total_values = 0;
    for (std::size_t l = 0; l < layer_count; ++l) {
        std::istringstream line(next_line());
        Layer layer;
        std::size_t n = 0;
        if (!(line >> layer.name >> n)) {
            throw ParseError(path.string() + ": malformed layer header at layer " +
                             std::to_string(l));
        }
        if (params.find(layer.name) != nullptr) {
            throw ParseError(path.string() + ": duplicate layer name '" + layer.name + "'");
        }
        layer.values.resize(n);
        total_values += n;
        params.layers.push_back(std::move(layer));
    }
    if (next_line() != "binary") {
        throw ParseError(path.string() + ": missing binary marker");
    }
    if (text.size() - pos != total_values * 8) {
        throw ParseError(path.string() + ": value block has wrong size (file truncated?)");
    }
    for (auto& layer : params.layers) {
        for (double& v : layer.values) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) {
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(text[pos + b]))
                        << (8 * b);
            }
            pos += 8;
            v = std::bit_cast<double>(bits);
        }
    }
    return params;
}

// FNV-1a over the canonical config dump; used to key default output
// directories so concurrent experiments do not collide.
inline std::string config_hash(const TrainConfig& cfg, std::string_view mode) {
    const std::string text = config_to_json(cfg).dump() + std::string(mode);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

} // namespace fedsim
