#include "fedsim/io.hpp"
#include "fedsim/synth.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>

using namespace fedsim;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "fedsim_io_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

ParamSet sample_params() {
    ParamSet p;
    p.layers.push_back({"w1", {1.5, -2.25, 0.0, 1e-300, 3.14159}});
    p.layers.push_back({"b1", {-0.5}});
    return p;
}

TrainConfig sample_config() {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.rounds = 4;
    cfg.pe = true;
    cfg.pu = true;
    cfg.seed = 99;
    cfg.first_round_epochs = 7;
    cfg.backbone_kind = BackboneKind::OneHidden;
    cfg.hidden_dim = 6;
    cfg.layer_distance = LayerDistance::L2;
    cfg.linkage = Linkage::Average;
    ClientSpec spec;
    spec.train_size = 32;
    spec.identities = 4;
    spec.seed = 5;
    cfg.clients.push_back(spec);
    return cfg;
}

} // namespace

TEST_CASE("zero noise collapses an identity to one point") {
    ClientSpec spec;
    spec.train_size = 12;
    spec.identities = 3;
    spec.noise = 0.0;
    spec.seed = 11;
    const ClientDataset data = generate_client(spec, 0);
    std::map<int, std::vector<double>> first;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int id = data.train_identities[i];
        std::vector<double> row(data.train.row(i).begin(), data.train.row(i).end());
        if (auto it = first.find(id); it != first.end()) {
            CHECK(it->second == row);
        } else {
            first.emplace(id, std::move(row));
        }
    }
}

TEST_CASE("one identity per sample matches initial pseudo-labels") {
    ClientSpec spec;
    spec.train_size = 9;
    spec.identities = 9;
    spec.seed = 3;
    const ClientDataset data = generate_client(spec, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(data.train_identities[i] == static_cast<int>(i));
    }
}

TEST_CASE("sizes and identity histograms check out") {
    std::vector<ClientSpec> specs(2);
    specs[0].train_size = 64;
    specs[0].identities = 8;
    specs[0].seed = 21;
    specs[1].train_size = 512;
    specs[1].identities = 32;
    specs[1].seed = 22;
    const auto datasets = generate_synthetic(specs);
    REQUIRE(datasets.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& d = datasets[k];
        CHECK(d.client_id == static_cast<int>(k));
        CHECK(d.size() == specs[k].train_size);
        std::vector<std::size_t> histogram(specs[k].identities, 0);
        for (int id : d.train_identities) ++histogram[static_cast<std::size_t>(id)];
        for (std::size_t count : histogram) {
            CHECK(count == specs[k].train_size / specs[k].identities);
        }
        // every query identity has gallery entries
        std::vector<bool> in_gallery(specs[k].identities, false);
        for (int id : d.gallery_identities) in_gallery[static_cast<std::size_t>(id)] = true;
        for (int id : d.query_identities) CHECK(in_gallery[static_cast<std::size_t>(id)]);
    }
}

TEST_CASE("generation is deterministic per seed") {
    ClientSpec spec;
    spec.train_size = 40;
    spec.identities = 5;
    spec.seed = 77;
    const ClientDataset a = generate_client(spec, 0);
    const ClientDataset b = generate_client(spec, 0);
    CHECK(a.train == b.train);
    CHECK(a.query == b.query);
    CHECK(a.gallery == b.gallery);
    spec.seed = 78;
    const ClientDataset c = generate_client(spec, 0);
    CHECK(a.train.data != c.train.data);
}

TEST_CASE("camera-aware generation covers both cameras per identity") {
    ClientSpec spec;
    spec.train_size = 16;
    spec.identities = 4;
    spec.with_cameras = true;
    spec.seed = 9;
    const ClientDataset d = generate_client(spec, 0);
    REQUIRE(d.gallery_cameras.size() == d.gallery_identities.size());
    REQUIRE(d.query_cameras.size() == d.query_identities.size());
    std::map<int, std::pair<bool, bool>> seen;
    for (std::size_t i = 0; i < d.gallery_identities.size(); ++i) {
        auto& [cam0, cam1] = seen[d.gallery_identities[i]];
        if (d.gallery_cameras[i] == 0) cam0 = true;
        if (d.gallery_cameras[i] == 1) cam1 = true;
    }
    for (const auto& [id, cams] : seen) {
        CHECK(cams.first);
        CHECK(cams.second);
    }
}

TEST_CASE("generator rejects bad specs") {
    ClientSpec spec;
    spec.train_size = 4;
    spec.identities = 5;
    CHECK_THROWS_AS(generate_client(spec, 0), UsageError);
    spec.identities = 2;
    spec.noise = -0.1;
    CHECK_THROWS_AS(generate_client(spec, 0), UsageError);
    spec.noise = 0.1;
    spec.with_cameras = true;
    spec.gallery_per_identity = 1;
    CHECK_THROWS_AS(generate_client(spec, 0), UsageError);
}

TEST_CASE("parameter files round-trip bit-exactly") {
    const auto path = temp_dir() / "params.fsp";
    const ParamSet p = sample_params();
    save_params(p, path);
    const ParamSet loaded = load_params(path);
    CHECK(loaded == p);
}

TEST_CASE("truncated parameter files raise parse errors") {
    const auto path = temp_dir() / "params_trunc.fsp";
    save_params(sample_params(), path);
    const auto full_size = std::filesystem::file_size(path);
    for (std::uintmax_t keep : {full_size - 1, full_size / 2, std::uintmax_t{10}, std::uintmax_t{0}}) {
        std::filesystem::resize_file(path, keep);
        CHECK_THROWS_AS(load_params(path), ParseError);
        save_params(sample_params(), path);
    }
    std::ofstream(path, std::ios::binary) << "not a params file\n";
    CHECK_THROWS_AS(load_params(path), ParseError);
}

TEST_CASE("save_params rejects unserializable layer names") {
    ParamSet p;
    p.layers.push_back({"has space", {1.0}});
    CHECK_THROWS_AS(save_params(p, temp_dir() / "bad.fsp"), UsageError);
}

TEST_CASE("config files round-trip") {
    const auto path = temp_dir() / "config.json";
    const TrainConfig cfg = sample_config();
    save_config(cfg, path);
    CHECK(load_config(path) == cfg);

    TrainConfig no_override = cfg;
    no_override.first_round_epochs.reset();
    save_config(no_override, path);
    CHECK(load_config(path) == no_override);
}

TEST_CASE("unknown config keys are rejected with context") {
    const auto path = temp_dir() / "bad_config.json";
    std::ofstream(path) << R"({"epochs": 3, "epochz": 4})";
    try {
        load_config(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("epochz") != std::string::npos);
    }
}

TEST_CASE("malformed json reports line context") {
    const auto path = temp_dir() / "broken.json";
    std::ofstream(path) << "{\n  \"epochs\": 3,\n  oops\n}";
    try {
        load_config(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
}

TEST_CASE("reports round-trip including every nested record") {
    ExperimentReport report;
    report.mode = "federated";
    report.config = sample_config();
    ProfileResult prof;
    prof.client_id = 0;
    prof.estimated_identities = 4;
    prof.merges_per_round = 7;
    prof.merge_percent = 7.0 / 32.0;
    prof.best_round = 2;
    prof.epochs_spent = 16;
    prof.round_scores = {0.25, 0.5, 0.75};
    report.profiles.push_back(prof);
    RoundMetrics rm;
    rm.round = 1;
    rm.client_id = 0;
    rm.epochs_consumed = 3;
    rm.cluster_count = 25;
    rm.precision_first_epoch = 0.25;
    rm.precision_last_epoch = 1.0 / 3.0;
    rm.clustering_exhausted = true;
    rm.local = {0.5, 0.75, 1.0, 2.0 / 3.0};
    rm.global = {0.25, 0.5, 0.75, 1.0 / 7.0};
    report.rounds.push_back(rm);
    ClientSummary cs;
    cs.client_id = 0;
    cs.train_size = 32;
    cs.best_rank1 = 0.5;
    cs.best_map = 1.0 / 3.0;
    cs.best_local_rank1 = 0.5;
    cs.best_global_rank1 = 0.25;
    cs.epochs = 11;
    report.summary.push_back(cs);
    report.training_epochs = 11;
    report.profiling_epochs = 16;
    report.total_epochs = 27;

    const auto path = temp_dir() / "report.json";
    save_report(report, path);
    CHECK(load_report(path) == report);

    SECTION("empty metrics list is a valid minimal file") {
        ExperimentReport minimal;
        minimal.mode = "standalone";
        save_report(minimal, path);
        CHECK(load_report(path) == minimal);
    }

    SECTION("truncation raises parse errors, not crashes") {
        save_report(report, path);
        const auto size = std::filesystem::file_size(path);
        Rng rng(13);
        for (int trial = 0; trial < 8; ++trial) {
            std::filesystem::resize_file(path, rng.bounded(size));
            CHECK_THROWS_AS(load_report(path), ParseError);
            save_report(report, path);
        }
    }

    SECTION("wrong schema version is rejected") {
        Json j = report_to_json(report);
        j["schema_version"] = 2;
        std::ofstream(path) << j.dump();
        CHECK_THROWS_AS(load_report(path), ParseError);
    }
}

TEST_CASE("metrics exports stay consistent") {
    RoundMetrics rm;
    rm.round = 2;
    rm.client_id = 1;
    rm.epochs_consumed = 4;
    rm.cluster_count = 9;
    rm.precision_last_epoch = 0.625;
    rm.local = {0.5, 0.75, 1.0, 0.6};
    rm.global = {0.4, 0.7, 0.9, 0.55};

    const std::string line = metrics_jsonl_line(rm);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(round_metrics_from_json(Json::parse(line)) == rm);

    const auto path = temp_dir() / "metrics.csv";
    const std::vector<RoundMetrics> rows{rm, rm};
    write_metrics_csv(rows, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.starts_with("round,client,epochs"));
    std::size_t data_lines = 0;
    for (std::string l; std::getline(in, l);) ++data_lines;
    CHECK(data_lines == 2);
}

TEST_CASE("config hash separates configs and modes") {
    const TrainConfig a = sample_config();
    TrainConfig b = a;
    b.seed = 100;
    CHECK(config_hash(a, "federated") == config_hash(a, "federated"));
    CHECK(config_hash(a, "federated") != config_hash(b, "federated"));
    CHECK(config_hash(a, "federated") != config_hash(a, "standalone"));
}
