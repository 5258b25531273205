#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Recipe for one synthetic client. Identities are Gaussian clusters whose
// centers sit on the unit sphere inside a client-specific region, so the
// clients are heterogeneous in size, identity count and distribution.
// center_dim < input_dim confines every center to the leading coordinates
// while noise stays full-dimension isotropic; the trailing dimensions are
// then pure nuisance that a model can learn to suppress, and that skill
// transfers across clients.
struct ClientSpec {
    std::size_t train_size = 128;  // n_k
    std::size_t identities = 16;   // I_k
    std::size_t input_dim = 24;
    std::size_t center_dim = 0; // subspace holding the centers; 0 = input_dim
    double noise = 0.08;
    double region_spread = 0.5; // how far identity centers wander from the region center
    std::size_t query_per_identity = 2;
    std::size_t gallery_per_identity = 4;
    bool with_cameras = false;
    std::uint64_t seed = 0; // 0 = derive from the experiment seed

    bool operator==(const ClientSpec&) const = default;
};

// One edge's data: unlabeled training samples (ground-truth identities kept
// only for generation, the profiling scorer and evaluation) plus a held-out
// query/gallery split.
struct ClientDataset {
    int client_id = 0;
    Matrix train;
    std::vector<int> train_identities;
    Matrix query;
    std::vector<int> query_identities;
    std::vector<int> query_cameras;
    Matrix gallery;
    std::vector<int> gallery_identities;
    std::vector<int> gallery_cameras;

    std::size_t size() const { return train.rows; }      // n_k
    std::size_t input_dim() const { return train.cols; }
};

namespace detail {

inline std::vector<double> unit_gaussian_vector(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.gaussian();
    const double n = l2_norm(v);
    if (n > 1e-12) {
        for (double& x : v) x /= n;
    } else {
        v[0] = 1.0;
    }
    return v;
}

inline void fill_sample(Matrix& out, std::size_t row, std::span<const double> center,
                        double noise, Rng& rng) {
    auto r = out.row(row);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = center[j] + noise * rng.gaussian();
}

} // namespace detail

inline ClientDataset generate_client(const ClientSpec& spec, int client_id) {
    if (spec.identities == 0 || spec.train_size == 0 || spec.input_dim == 0) {
        throw UsageError("generate_client: sizes must be positive");
    }
    if (spec.identities > spec.train_size) {
        throw UsageError("generate_client: identities must not exceed train size");
    }
    if (!(spec.noise >= 0.0)) throw UsageError("generate_client: noise must be >= 0");
    if (spec.query_per_identity == 0 || spec.gallery_per_identity == 0) {
        throw UsageError("generate_client: query/gallery per identity must be positive");
    }
    if (spec.with_cameras && spec.gallery_per_identity < 2) {
        throw UsageError("generate_client: camera-aware splits need >= 2 gallery samples per identity");
    }
    const std::size_t center_dim = spec.center_dim == 0 ? spec.input_dim : spec.center_dim;
    if (center_dim > spec.input_dim) {
        throw UsageError("generate_client: center_dim must not exceed input_dim");
    }

    Rng rng(spec.seed);
    ClientDataset data;
    data.client_id = client_id;

    // Identity centers: unit vectors scattered around this client's region,
    // confined to the leading center_dim coordinates.
    const std::vector<double> region = detail::unit_gaussian_vector(center_dim, rng);
    std::vector<std::vector<double>> centers(spec.identities);
    for (auto& c : centers) {
        c.assign(spec.input_dim, 0.0);
        for (std::size_t j = 0; j < center_dim; ++j) {
            c[j] = region[j] + spec.region_spread * rng.gaussian();
        }
        const double n = l2_norm(c);
        for (double& x : c) x /= n;
    }

    data.train = Matrix(spec.train_size, spec.input_dim);
    data.train_identities.resize(spec.train_size);
    for (std::size_t i = 0; i < spec.train_size; ++i) {
        const auto id = i % spec.identities;
        data.train_identities[i] = static_cast<int>(id);
        detail::fill_sample(data.train, i, centers[id], spec.noise, rng);
    }

    const std::size_t q = spec.identities * spec.query_per_identity;
    data.query = Matrix(q, spec.input_dim);
    data.query_identities.resize(q);
    for (std::size_t id = 0, row = 0; id < spec.identities; ++id) {
        for (std::size_t s = 0; s < spec.query_per_identity; ++s, ++row) {
            data.query_identities[row] = static_cast<int>(id);
            detail::fill_sample(data.query, row, centers[id], spec.noise, rng);
            if (spec.with_cameras) data.query_cameras.push_back(static_cast<int>(s % 2));
        }
    }

    const std::size_t g = spec.identities * spec.gallery_per_identity;
    data.gallery = Matrix(g, spec.input_dim);
    data.gallery_identities.resize(g);
    for (std::size_t id = 0, row = 0; id < spec.identities; ++id) {
        for (std::size_t s = 0; s < spec.gallery_per_identity; ++s, ++row) {
            data.gallery_identities[row] = static_cast<int>(id);
            detail::fill_sample(data.gallery, row, centers[id], spec.noise, rng);
            if (spec.with_cameras) data.gallery_cameras.push_back(static_cast<int>(s % 2));
        }
    }
    return data;
}

inline std::vector<ClientDataset> generate_synthetic(std::span<const ClientSpec> specs) {
    std::vector<ClientDataset> out;
    out.reserve(specs.size());
    for (std::size_t k = 0; k < specs.size(); ++k) {
        out.push_back(generate_client(specs[k], static_cast<int>(k)));
    }
    return out;
}

} // namespace fedsim
