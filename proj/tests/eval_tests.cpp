#include "fedsim/eval.hpp"
#include "fedsim/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace fedsim;

namespace {

Matrix row_matrix(std::vector<std::vector<double>> rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
}

// Counting-based oracle, no sorting: a candidate's rank is the number of
// candidates that beat it (strictly larger similarity, or equal similarity
// with a smaller gallery index).
struct OracleMetrics {
    std::vector<double> cmc;
    double map = 0.0;
    std::size_t retained = 0;
};

OracleMetrics brute_force_metrics(const RetrievalSet& query, const RetrievalSet& gallery,
                                  const std::vector<int>& ks) {
    Matrix qf = query.features;
    Matrix gf = gallery.features;
    l2_normalize_rows(qf);
    l2_normalize_rows(gf);
    const bool cams = !query.camera_ids.empty() && !gallery.camera_ids.empty();

    OracleMetrics out;
    out.cmc.assign(ks.size(), 0.0);
    for (std::size_t q = 0; q < query.size(); ++q) {
        std::vector<std::size_t> cand;
        bool any = false;
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            if (cams && gallery.identities[g] == query.identities[q] &&
                gallery.camera_ids[g] == query.camera_ids[q]) {
                continue;
            }
            cand.push_back(g);
            any = any || gallery.identities[g] == query.identities[q];
        }
        if (!any) continue;
        ++out.retained;

        std::vector<double> sim(cand.size());
        for (std::size_t c = 0; c < cand.size(); ++c) sim[c] = dot(qf.row(q), gf.row(cand[c]));
        std::vector<std::size_t> rank(cand.size(), 0);
        for (std::size_t c = 0; c < cand.size(); ++c) {
            for (std::size_t o = 0; o < cand.size(); ++o) {
                if (o == c) continue;
                if (sim[o] > sim[c] || (sim[o] == sim[c] && cand[o] < cand[c])) ++rank[c];
            }
        }

        std::size_t best_relevant_rank = cand.size();
        std::size_t relevant_total = 0;
        for (std::size_t c = 0; c < cand.size(); ++c) {
            if (gallery.identities[cand[c]] == query.identities[q]) {
                ++relevant_total;
                best_relevant_rank = std::min(best_relevant_rank, rank[c]);
            }
        }
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (best_relevant_rank < static_cast<std::size_t>(ks[i])) out.cmc[i] += 1.0;
        }

        double ap = 0.0;
        for (std::size_t c = 0; c < cand.size(); ++c) {
            if (gallery.identities[cand[c]] != query.identities[q]) continue;
            std::size_t relevant_at_or_before = 0;
            for (std::size_t o = 0; o < cand.size(); ++o) {
                if (gallery.identities[cand[o]] == query.identities[q] && rank[o] <= rank[c]) {
                    ++relevant_at_or_before;
                }
            }
            ap += static_cast<double>(relevant_at_or_before) / static_cast<double>(rank[c] + 1);
        }
        out.map += ap / static_cast<double>(relevant_total);
    }
    for (double& v : out.cmc) v /= static_cast<double>(out.retained);
    out.map /= static_cast<double>(out.retained);
    return out;
}

RetrievalSet random_retrieval(Rng& rng, std::size_t n, std::size_t dim, int id_range,
                              bool cams) {
    RetrievalSet s;
    s.features = Matrix(n, dim);
    for (double& v : s.features.data) v = rng.uniform(-1.0, 1.0);
    s.identities.resize(n);
    for (int& id : s.identities) id = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(id_range)));
    if (cams) {
        s.camera_ids.resize(n);
        for (int& c : s.camera_ids) c = static_cast<int>(rng.bounded(2));
    }
    return s;
}

} // namespace

TEST_CASE("self retrieval gives rank-1 accuracy 1") {
    RetrievalSet gallery;
    gallery.features = row_matrix({{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}});
    gallery.identities = {0, 1, 2};
    RetrievalSet query;
    query.features = row_matrix({{1.0, 0.0}});
    query.identities = {0};
    const std::vector<int> ks{1};
    CHECK(cmc(query, gallery, ks)[0] == 1.0);
    CHECK(map_score(query, gallery) == 1.0);
}

TEST_CASE("queries with no matching identity are an error") {
    RetrievalSet gallery;
    gallery.features = row_matrix({{1.0, 0.0}});
    gallery.identities = {5};
    RetrievalSet query;
    query.features = row_matrix({{1.0, 0.0}});
    query.identities = {0};
    const std::vector<int> ks{1};
    CHECK_THROWS_AS(cmc(query, gallery, ks), UsageError);
    CHECK_THROWS_AS(map_score(query, gallery), UsageError);
    CHECK_THROWS_AS(cmc(RetrievalSet{}, gallery, ks), UsageError);
}

TEST_CASE("two-query hand case matches the brute-force oracle") {
    RetrievalSet gallery;
    gallery.features = row_matrix({{1.0, 0.0}, {0.8, 0.6}, {0.0, 1.0}});
    gallery.identities = {0, 1, 0};
    RetrievalSet query;
    query.features = row_matrix({{1.0, 0.0}, {0.6, 0.8}});
    query.identities = {0, 1};
    const std::vector<int> ks{1, 2};
    const auto got = cmc(query, gallery, ks);
    const auto oracle = brute_force_metrics(query, gallery, ks);
    REQUIRE(oracle.retained == 2);
    CHECK(got[0] == oracle.cmc[0]);
    CHECK(got[1] == oracle.cmc[1]);
    CHECK(map_score(query, gallery) == Catch::Approx(oracle.map).margin(1e-15));
}

TEST_CASE("average precision hand cases are exact") {
    SECTION("relevant at ranks 1 and 3") {
        RetrievalSet gallery;
        gallery.features = row_matrix({{1.0, 0.0}, {0.9, std::sqrt(1.0 - 0.81)}, {0.5, std::sqrt(0.75)}});
        gallery.identities = {0, 1, 0};
        RetrievalSet query;
        query.features = row_matrix({{1.0, 0.0}});
        query.identities = {0};
        CHECK(map_score(query, gallery) == (1.0 + 2.0 / 3.0) / 2.0);
    }
    SECTION("single relevant at rank 2") {
        RetrievalSet gallery;
        gallery.features = row_matrix({{0.9, std::sqrt(1.0 - 0.81)}, {0.5, std::sqrt(0.75)}});
        gallery.identities = {1, 0};
        RetrievalSet query;
        query.features = row_matrix({{1.0, 0.0}});
        query.identities = {0};
        CHECK(map_score(query, gallery) == 0.5);
    }
}

TEST_CASE("camera rule excludes same-id same-camera entries") {
    RetrievalSet gallery;
    gallery.features = row_matrix({{1.0, 0.0}, {0.9, std::sqrt(1.0 - 0.81)}, {0.0, 1.0}});
    gallery.identities = {0, 0, 1};
    gallery.camera_ids = {0, 1, 0};
    RetrievalSet query;
    query.features = row_matrix({{1.0, 0.0}});
    query.identities = {0};
    query.camera_ids = {0};
    // the perfect-similarity gallery entry shares id and camera -> excluded,
    // the cross-camera entry ranks first among the rest
    const std::vector<int> ks{1};
    CHECK(cmc(query, gallery, ks)[0] == 1.0);

    // excluding every match drops the query; a single query then errors
    RetrievalSet small_gallery;
    small_gallery.features = row_matrix({{1.0, 0.0}, {0.0, 1.0}});
    small_gallery.identities = {0, 1};
    small_gallery.camera_ids = {0, 0};
    CHECK_THROWS_AS(cmc(query, small_gallery, ks), UsageError);
}

TEST_CASE("rank-k accuracy is nondecreasing and saturates", "[property]") {
    Rng rng(0xE7A1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t g = 2 + rng.bounded(18);
        RetrievalSet gallery = random_retrieval(rng, g, 3, 4, false);
        RetrievalSet query = random_retrieval(rng, 1 + rng.bounded(10), 3, 4, false);
        bool valid = false;
        for (int qid : query.identities) {
            for (int gid : gallery.identities) valid = valid || qid == gid;
        }
        if (!valid) {
            gallery.identities[0] = query.identities[0];
        }
        std::vector<int> ks(g);
        for (std::size_t k = 0; k < g; ++k) ks[k] = static_cast<int>(k + 1);
        const auto acc = cmc(query, gallery, ks);
        for (std::size_t k = 1; k < acc.size(); ++k) CHECK(acc[k] >= acc[k - 1]);
        CHECK(acc.back() == 1.0);
    }
}

TEST_CASE("metrics are invariant under gallery permutation", "[property]") {
    Rng rng(0xE7A2);
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t g = 3 + rng.bounded(15);
        RetrievalSet gallery = random_retrieval(rng, g, 3, 3, false);
        RetrievalSet query = random_retrieval(rng, 4, 3, 3, false);
        gallery.identities[0] = query.identities[0];
        gallery.identities[1] = query.identities[1];
        gallery.identities[2] = query.identities[2];

        std::vector<std::size_t> perm(g);
        for (std::size_t i = 0; i < g; ++i) perm[i] = i;
        rng.shuffle(perm);
        RetrievalSet shuffled;
        shuffled.features = Matrix(g, 3);
        shuffled.identities.resize(g);
        for (std::size_t i = 0; i < g; ++i) {
            std::copy(gallery.features.row(perm[i]).begin(), gallery.features.row(perm[i]).end(),
                      shuffled.features.row(i).begin());
            shuffled.identities[i] = gallery.identities[perm[i]];
        }

        const std::vector<int> ks{1, 3, 5};
        const auto a = cmc(query, gallery, ks);
        const auto b = cmc(query, shuffled, ks);
        for (std::size_t i = 0; i < ks.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
        CHECK(map_score(query, gallery) == Catch::Approx(map_score(query, shuffled)).margin(1e-12));
    }
}

TEST_CASE("cmc and map match the brute-force oracle", "[property]") {
    Rng rng(0xE7A3);
    int done = 0;
    while (done < 30) {
        const std::size_t g = 2 + rng.bounded(19);
        const std::size_t q = 1 + rng.bounded(19);
        const bool cams = done % 3 == 0;
        RetrievalSet gallery = random_retrieval(rng, g, 1 + rng.bounded(4), 4, cams);
        RetrievalSet query = random_retrieval(rng, q, gallery.features.cols, 4, cams);
        const std::vector<int> ks{1, 2, 5, 10};
        OracleMetrics oracle;
        try {
            oracle = brute_force_metrics(query, gallery, ks);
            if (oracle.retained == 0) continue;
        } catch (...) {
            continue;
        }
        const auto acc = cmc(query, gallery, ks);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            CHECK(std::abs(acc[i] - oracle.cmc[i]) < 1e-12);
        }
        CHECK(std::abs(map_score(query, gallery) - oracle.map) < 1e-12);
        ++done;
    }
}
