#include "fedsim/params.hpp"
#include "fedsim/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace fedsim;

namespace {

ParamSet make_set(std::vector<std::pair<std::string, std::vector<double>>> layers) {
    ParamSet p;
    for (auto& [name, values] : layers) p.layers.push_back({name, values});
    return p;
}

ParamSet random_set(Rng& rng, std::size_t num_layers, std::size_t max_len) {
    ParamSet p;
    for (std::size_t l = 0; l < num_layers; ++l) {
        Layer layer;
        layer.name = "layer" + std::to_string(l);
        const std::size_t n = 1 + rng.bounded(max_len);
        layer.values.resize(n);
        for (double& v : layer.values) v = rng.uniform(-10.0, 10.0);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

ParamSet random_like(const ParamSet& shape, Rng& rng) {
    ParamSet p = shape;
    for (auto& layer : p.layers) {
        for (double& v : layer.values) v = rng.uniform(-10.0, 10.0);
    }
    return p;
}

} // namespace

TEST_CASE("weighted_average identity and convexity fixed points") {
    const ParamSet a = make_set({{"w", {2.0, 4.0}}, {"b", {1.0}}});

    const std::vector<ParamSet> one{a};
    const std::vector<double> w1{1.0};
    CHECK(weighted_average(one, w1) == a);

    const std::vector<ParamSet> two{a, a};
    const std::vector<double> w2{3.0, 5.0};
    const ParamSet avg = weighted_average(two, w2);
    REQUIRE(avg.layers.size() == 2);
    for (std::size_t l = 0; l < avg.layers.size(); ++l) {
        for (std::size_t i = 0; i < avg.layers[l].values.size(); ++i) {
            CHECK(avg.layers[l].values[i] == Catch::Approx(a.layers[l].values[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("weighted_average hand-computed mean") {
    const ParamSet a = make_set({{"w", {2.0, 4.0}}});
    const ParamSet b = make_set({{"w", {4.0, 8.0}}});
    const std::vector<ParamSet> models{a, b};
    const std::vector<double> weights{1.0, 3.0};
    const ParamSet avg = weighted_average(models, weights);
    // (1*2 + 3*4)/4 = 3.5, (1*4 + 3*8)/4 = 7
    CHECK(avg.layers[0].values[0] == Catch::Approx(3.5).margin(1e-15));
    CHECK(avg.layers[0].values[1] == Catch::Approx(7.0).margin(1e-15));
}

TEST_CASE("weighted_average rejects bad input") {
    const ParamSet a = make_set({{"w", {1.0}}});
    const ParamSet odd = make_set({{"w", {1.0, 2.0}}});
    CHECK_THROWS_AS(weighted_average(std::vector<ParamSet>{}, std::vector<double>{}), UsageError);
    CHECK_THROWS_AS(
        weighted_average(std::vector<ParamSet>{a, odd}, std::vector<double>{1.0, 1.0}),
        ShapeError);
    CHECK_THROWS_AS(weighted_average(std::vector<ParamSet>{a}, std::vector<double>{0.0}),
                    UsageError);
    CHECK_THROWS_AS(weighted_average(std::vector<ParamSet>{a}, std::vector<double>{-1.0}),
                    UsageError);
}

TEST_CASE("weighted_average scale invariance and envelope", "[property]") {
    Rng rng(0xA11CE);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.bounded(5);
        const ParamSet shape = random_set(rng, 1 + rng.bounded(3), 6);
        std::vector<ParamSet> models;
        std::vector<double> weights, scaled;
        const double c = rng.uniform(0.1, 9.0);
        for (std::size_t k = 0; k < n; ++k) {
            models.push_back(random_like(shape, rng));
            weights.push_back(rng.uniform(0.01, 5.0));
            scaled.push_back(c * weights.back());
        }
        const ParamSet avg = weighted_average(models, weights);
        const ParamSet avg_scaled = weighted_average(models, scaled);
        for (std::size_t l = 0; l < avg.layers.size(); ++l) {
            for (std::size_t i = 0; i < avg.layers[l].values.size(); ++i) {
                CHECK(std::abs(avg.layers[l].values[i] - avg_scaled.layers[l].values[i]) < 1e-12);
                double lo = models[0].layers[l].values[i];
                double hi = lo;
                for (const auto& m : models) {
                    lo = std::min(lo, m.layers[l].values[i]);
                    hi = std::max(hi, m.layers[l].values[i]);
                }
                CHECK(avg.layers[l].values[i] >= lo - 1e-12);
                CHECK(avg.layers[l].values[i] <= hi + 1e-12);
            }
        }
        // a zero-weight entry contributes nothing
        std::vector<ParamSet> with_extra = models;
        with_extra.push_back(random_like(shape, rng));
        std::vector<double> weights_extra = weights;
        weights_extra.push_back(0.0);
        CHECK(weighted_average(with_extra, weights_extra) == avg);
    }
}

TEST_CASE("layer_distances examples") {
    const ParamSet a = make_set({{"w", {0.0, 0.0}}});
    const ParamSet b = make_set({{"w", {3.0, 4.0}}});
    CHECK(layer_distances(a, a) == std::vector<double>{0.0});
    CHECK(layer_distances(a, b) == std::vector<double>{25.0});
    CHECK(layer_distances(a, b, LayerDistance::L2) == std::vector<double>{5.0});

    const ParamSet c = make_set({{"u", {1.0}}, {"v", {1.0, 1.0}}});
    const ParamSet d = make_set({{"u", {2.0}}, {"v", {3.0, 3.0}}});
    CHECK(layer_distances(c, d) == std::vector<double>{1.0, 8.0});

    CHECK_THROWS_AS(layer_distances(a, c), ShapeError);
}

TEST_CASE("layer_distances symmetry and zero iff equal", "[property]") {
    Rng rng(0xD157);
    for (int trial = 0; trial < 50; ++trial) {
        const ParamSet shape = random_set(rng, 1 + rng.bounded(4), 5);
        const ParamSet x = random_like(shape, rng);
        const ParamSet y = random_like(shape, rng);
        CHECK(layer_distances(x, y) == layer_distances(y, x));
        for (double d : layer_distances(x, x)) CHECK(d == 0.0);
        const auto dxy = layer_distances(x, y);
        for (std::size_t l = 0; l < dxy.size(); ++l) {
            if (x.layers[l].values != y.layers[l].values) CHECK(dxy[l] > 0.0);
        }
    }
}

TEST_CASE("compute_mu examples and degenerate ranges") {
    CHECK(compute_mu(std::vector<double>{0.0, 0.0, 0.0}) == 0.0);
    CHECK(compute_mu(std::vector<double>{1.0, 3.0}) == 0.5);
    CHECK(compute_mu(std::vector<double>{2.0, 2.0, 2.0}) == 0.5);
    CHECK_THROWS_AS(compute_mu(std::vector<double>{}), UsageError);
}

TEST_CASE("compute_mu stays in range and survives affine rescaling", "[property]") {
    Rng rng(0xF00D);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.bounded(6);
        std::vector<double> d(n);
        for (double& v : d) v = rng.uniform(0.0, 50.0);
        d[0] += 1.0; // ensure a non-degenerate range
        const double mu = compute_mu(d);
        CHECK(mu >= 0.0);
        CHECK(mu <= 1.0);

        const double slope = rng.uniform(0.1, 5.0);
        const double shift = rng.uniform(0.0, 10.0);
        std::vector<double> rescaled(n);
        for (std::size_t i = 0; i < n; ++i) rescaled[i] = slope * d[i] + shift;
        CHECK(std::abs(compute_mu(rescaled) - mu) < 1e-9);
    }
}

TEST_CASE("ema_update endpoints and hand case") {
    const ParamSet local = make_set({{"w", {0.0, 2.0}}});
    const ParamSet global = make_set({{"w", {4.0, 6.0}}});
    CHECK(ema_update(local, global, 0.0) == global);
    CHECK(ema_update(local, global, 1.0) == local);
    const ParamSet mixed = ema_update(local, global, 0.25);
    CHECK(mixed.layers[0].values[0] == 3.0);
    CHECK(mixed.layers[0].values[1] == 5.0);
    CHECK_THROWS_AS(ema_update(local, global, -0.1), UsageError);
    CHECK_THROWS_AS(ema_update(local, global, 1.1), UsageError);
    CHECK_THROWS_AS(ema_update(local, make_set({{"w", {1.0}}}), 0.5), ShapeError);
}

TEST_CASE("ema_update fixed point and envelope", "[property]") {
    Rng rng(0xE3A);
    for (int trial = 0; trial < 50; ++trial) {
        const ParamSet shape = random_set(rng, 1 + rng.bounded(3), 5);
        const ParamSet x = random_like(shape, rng);
        const ParamSet y = random_like(shape, rng);
        const double mu = rng.uniform01();
        CHECK(ema_update(x, x, mu) == x);
        const ParamSet mixed = ema_update(x, y, mu);
        CHECK(all_finite(mixed));
        for (std::size_t l = 0; l < mixed.layers.size(); ++l) {
            for (std::size_t i = 0; i < mixed.layers[l].values.size(); ++i) {
                const double lo = std::min(x.layers[l].values[i], y.layers[l].values[i]);
                const double hi = std::max(x.layers[l].values[i], y.layers[l].values[i]);
                CHECK(mixed.layers[l].values[i] >= lo - 1e-12);
                CHECK(mixed.layers[l].values[i] <= hi + 1e-12);
            }
        }
    }
}
