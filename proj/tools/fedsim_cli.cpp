// Command-line front end: federated runs, standalone baselines, profiling
// passes and report summaries.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "fedsim/fedsim.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

enum class LogLevel { Quiet, Info, Debug };

LogLevel log_level_from_env() {
    const char* env = std::getenv("FEDSIM_LOG");
    if (!env) return LogLevel::Info;
    const std::string v = env;
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    throw UsageError("FEDSIM_LOG must be quiet|info|debug, got '" + v + "'");
}

// "64:8,512:32" -> client specs with train_size:identities pairs.
std::vector<ClientSpec> parse_clients_spec(const std::string& text) {
    std::vector<ClientSpec> specs;
    std::stringstream items(text);
    std::string item;
    while (std::getline(items, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            throw UsageError("--clients entries must look like <train_size>:<identities>, got '" +
                             item + "'");
        }
        ClientSpec spec;
        try {
            spec.train_size = std::stoul(item.substr(0, colon));
            spec.identities = std::stoul(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw UsageError("--clients entries must be numeric, got '" + item + "'");
        }
        specs.push_back(spec);
    }
    if (specs.empty()) throw UsageError("--clients spec is empty");
    return specs;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string clients_spec;
    std::uint64_t seed = 0;
    std::size_t first_round_epochs = 0;
    CLI::App* cmd = nullptr;
};

void add_common_options(CLI::App& cmd, CommonArgs& args) {
    cmd.add_option("--config", args.config_path, "JSON experiment configuration")
        ->check(CLI::ExistingFile);
    cmd.add_option("--seed", args.seed, "override the experiment seed");
    cmd.add_flag("--pe", "enable personalized epochs (early stop after round 0)");
    cmd.add_flag("--no-pe", "disable personalized epochs");
    cmd.add_flag("--pc", "enable personalized clustering (profiling pass)");
    cmd.add_flag("--no-pc", "disable personalized clustering");
    cmd.add_flag("--pu", "enable personalized EMA model updates");
    cmd.add_flag("--no-pu", "disable personalized EMA model updates");
    cmd.add_option("--out", args.out_dir, "output directory (default: runs/<mode>-<config hash>)");
    cmd.add_option("--clients", args.clients_spec,
                   "synthetic clients as <train_size>:<identities>[,...], replaces the config list");
    cmd.add_option("--first-round-epochs", args.first_round_epochs,
                   "fixed epoch budget for round 0 only");
    args.cmd = &cmd;
}

TrainConfig build_config(const CommonArgs& args) {
    TrainConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    if (args.cmd->count("--seed") > 0) cfg.seed = args.seed;
    if (args.cmd->count("--pe") > 0) cfg.pe = true;
    if (args.cmd->count("--no-pe") > 0) cfg.pe = false;
    if (args.cmd->count("--pc") > 0) cfg.pc = true;
    if (args.cmd->count("--no-pc") > 0) cfg.pc = false;
    if (args.cmd->count("--pu") > 0) cfg.pu = true;
    if (args.cmd->count("--no-pu") > 0) cfg.pu = false;
    if (args.cmd->count("--first-round-epochs") > 0) {
        cfg.first_round_epochs = args.first_round_epochs;
    }
    if (!args.clients_spec.empty()) cfg.clients = parse_clients_spec(args.clients_spec);
    if (cfg.clients.empty()) {
        throw UsageError("no clients configured: pass --clients or a config file with a client list");
    }
    validate_config(cfg);
    return cfg;
}

fs::path resolve_out_dir(const CommonArgs& args, const TrainConfig& cfg, std::string_view mode) {
    if (!args.out_dir.empty()) return args.out_dir;
    return fs::path("runs") / (std::string(mode) + "-" + config_hash(cfg, mode));
}

void print_summary(const ExperimentReport& report, std::ostream& os) {
    os << std::fixed << std::setprecision(4);
    for (const auto& s : report.summary) {
        os << "client " << s.client_id << " (n=" << s.train_size << "): best rank-1 "
           << s.best_rank1 << ", best mAP " << s.best_map << ", epochs " << s.epochs << "\n";
    }
    os << std::defaultfloat;
    os << "total epochs: " << report.total_epochs << " (training " << report.training_epochs
       << ", profiling " << report.profiling_epochs << ")\n";
}

int run_command(const CommonArgs& args, bool standalone) {
    const LogLevel level = log_level_from_env();
    const TrainConfig cfg = build_config(args);
    const std::string mode = standalone ? "standalone" : "federated";
    const fs::path out_dir = resolve_out_dir(args, cfg, mode);
    fs::create_directories(out_dir);

    const auto datasets = generate_synthetic(resolved_client_specs(cfg));

    std::ofstream jsonl(out_dir / "metrics.jsonl", std::ios::binary);
    RunOptions options;
    options.sink = [&](const RoundMetrics& m) {
        jsonl << metrics_jsonl_line(m) << "\n";
        if (level == LogLevel::Debug) {
            std::cout << "  " << metrics_jsonl_line(m) << "\n";
        }
    };
    if (level != LogLevel::Quiet) options.progress = &std::cout;
    ParamSet final_global;
    std::map<int, ParamSet> final_models;
    options.final_global = standalone ? nullptr : &final_global;
    options.final_models = &final_models;

    const ExperimentReport report = standalone ? run_standalone(cfg, datasets, options)
                                               : run_experiment(cfg, datasets, options);
    jsonl.close();

    const fs::path report_path = out_dir / "report.json";
    save_report(report, report_path);
    write_metrics_csv(report.rounds, out_dir / "metrics.csv");
    if (!report.profiles.empty()) {
        Json profiles = Json::array();
        for (const auto& p : report.profiles) profiles.push_back(profile_result_to_json(p));
        std::ofstream(out_dir / "profiles.json", std::ios::binary) << profiles.dump(2) << "\n";
    }
    if (!standalone) save_params(final_global, out_dir / "global_model.fsp");
    for (const auto& [client_id, params] : final_models) {
        save_params(params, out_dir / ("model_client" + std::to_string(client_id) + ".fsp"));
    }

    // exit 0 only when the written report validates against the schema
    if (load_report(report_path) != report) {
        std::cerr << "error: report round-trip mismatch for " << report_path << "\n";
        return 3;
    }
    if (level != LogLevel::Quiet) {
        std::cout << "wrote " << report_path.string() << "\n";
        print_summary(report, std::cout);
    }
    return 0;
}

int profile_command(const CommonArgs& args) {
    const LogLevel level = log_level_from_env();
    const TrainConfig cfg = build_config(args);
    const fs::path out_dir = resolve_out_dir(args, cfg, "profile");
    fs::create_directories(out_dir);

    const auto datasets = generate_synthetic(resolved_client_specs(cfg));
    const auto profiles = profile_clients(datasets, cfg, rank1_scorer());

    Json out = Json::array();
    for (const auto& p : profiles) out.push_back(profile_result_to_json(p));
    const fs::path path = out_dir / "profiles.json";
    std::ofstream(path, std::ios::binary) << out.dump(2) << "\n";

    if (level != LogLevel::Quiet) {
        std::cout << "wrote " << path.string() << "\n";
        std::size_t total = 0;
        for (const auto& p : profiles) {
            std::cout << "client " << p.client_id << ": estimated identities "
                      << p.estimated_identities << ", merges/round " << p.merges_per_round
                      << ", merge percent " << std::fixed << std::setprecision(5)
                      << p.merge_percent << std::defaultfloat << ", best round " << p.best_round
                      << ", epochs " << p.epochs_spent << "\n";
            total += p.epochs_spent;
        }
        std::cout << "profiling epochs: " << total << "\n";
    }
    return 0;
}

int report_command(const std::string& path) {
    const ExperimentReport report = load_report(path);
    std::cout << "mode: " << report.mode << "\n";
    std::cout << "clients: " << report.summary.size() << ", rounds: " << report.config.rounds
              << ", seed: " << report.config.seed << "\n";
    std::cout << "flags: pe=" << (report.config.pe ? "on" : "off")
              << " pc=" << (report.config.pc ? "on" : "off")
              << " pu=" << (report.config.pu ? "on" : "off") << "\n";
    print_summary(report, std::cout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedsim: federated unsupervised re-identification simulator"};
    app.require_subcommand(1);
    app.footer("Environment: FEDSIM_LOG=quiet|info|debug controls verbosity.\n"
               "Config keys: epochs, batch_size, rounds, clients_per_round, num_clients,\n"
               "  learning_rate, embedding_dim, merge_percent, pe, pc, pu, seed,\n"
               "  first_round_epochs, profiling{merge_percent, rounds, first_round_epochs,\n"
               "  rest_epochs, per_client_best}, backbone{kind, hidden_dim}, layer_distance,\n"
               "  linkage, clients[{train_size, identities, input_dim, center_dim, noise,\n"
               "  region_spread, query_per_identity, gallery_per_identity, with_cameras, seed}]");

    CommonArgs run_args, standalone_args, profile_args;
    CLI::App* run = app.add_subcommand("run", "federated experiment over synthetic clients");
    add_common_options(*run, run_args);
    CLI::App* standalone =
        app.add_subcommand("standalone", "per-client training without federation");
    add_common_options(*standalone, standalone_args);
    CLI::App* profile = app.add_subcommand("profile", "profiling pass only (merge schedules)");
    add_common_options(*profile, profile_args);

    std::string report_path;
    CLI::App* report = app.add_subcommand("report", "summarize a saved report file");
    report->add_option("path", report_path, "report.json to summarize")
        ->required()
        ->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return run_command(run_args, false);
        if (standalone->parsed()) return run_command(standalone_args, true);
        if (profile->parsed()) return profile_command(profile_args);
        if (report->parsed()) return report_command(report_path);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        try {
            std::rethrow_if_nested(e);
        } catch (const std::exception& inner) {
            std::cerr << "  caused by: " << inner.what() << "\n";
        } catch (...) {
        }
        return 3;
    }
    return 0;
}
