#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

struct Layer {
    std::string name;
    std::vector<double> values;

    bool operator==(const Layer& other) const = default;
};

// Named ordered layers of flat numeric vectors. All parameter exchange
// between server and clients happens through this type.
struct ParamSet {
    std::vector<Layer> layers;

    std::size_t layer_count() const { return layers.size(); }

    std::size_t value_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.values.size();
        return n;
    }

    bool shape_compatible(const ParamSet& other) const {
        if (layers.size() != other.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].name != other.layers[i].name) return false;
            if (layers[i].values.size() != other.layers[i].values.size()) return false;
        }
        return true;
    }

    const Layer* find(const std::string& name) const {
        for (const auto& l : layers) {
            if (l.name == name) return &l;
        }
        return nullptr;
    }

    Layer* find(const std::string& name) {
        for (auto& l : layers) {
            if (l.name == name) return &l;
        }
        return nullptr;
    }

    bool operator==(const ParamSet& other) const = default;
};

inline bool all_finite(const ParamSet& p) {
    for (const auto& l : p.layers) {
        for (double v : l.values) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

inline void require_compatible(const ParamSet& a, const ParamSet& b) {
    if (!a.shape_compatible(b)) {
        throw ShapeError("parameter sets are not shape-compatible");
    }
}

// Convex combination of models with weights proportional to the given
// nonnegative weights. Coordinatewise: sum_k (w_k / sum_w) * theta_k.
inline ParamSet weighted_average(std::span<const ParamSet> models,
                                 std::span<const double> weights) {
    if (models.empty()) throw UsageError("weighted_average: no models given");
    if (models.size() != weights.size()) {
        throw UsageError("weighted_average: models and weights differ in length");
    }
    double weight_sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw UsageError("weighted_average: negative weight");
        weight_sum += w;
    }
    if (!(weight_sum > 0.0)) throw UsageError("weighted_average: weight sum must be positive");
    for (std::size_t k = 1; k < models.size(); ++k) {
        require_compatible(models[0], models[k]);
    }

    ParamSet out = models[0];
    for (auto& layer : out.layers) {
        for (double& v : layer.values) v = 0.0;
    }
    for (std::size_t k = 0; k < models.size(); ++k) {
        const double w = weights[k] / weight_sum;
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            const auto& src = models[k].layers[l].values;
            auto& dst = out.layers[l].values;
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] += w * src[i];
            }
        }
    }
    return out;
}

enum class LayerDistance { SquaredL2, L2 };

// Per-layer distance between two shape-compatible models. Defaults to the
// squared L2 norm of the layer difference.
inline std::vector<double> layer_distances(const ParamSet& a, const ParamSet& b,
                                           LayerDistance kind = LayerDistance::SquaredL2) {
    require_compatible(a, b);
    std::vector<double> out;
    out.reserve(a.layers.size());
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& va = a.layers[l].values;
        const auto& vb = b.layers[l].values;
        double s = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) {
            const double d = va[i] - vb[i];
            s += d * d;
        }
        out.push_back(kind == LayerDistance::SquaredL2 ? s : std::sqrt(s));
    }
    return out;
}

// Min-max normalizes per-layer distances to [0, 1] and returns their mean.
// Degenerate range rule: all zeros -> 0 (models coincide); equal nonzero
// distances -> 0.5 everywhere (equal dissimilarity, balanced blend).
inline double compute_mu(std::span<const double> distances) {
    if (distances.empty()) throw UsageError("compute_mu: empty distance vector");
    double lo = distances[0];
    double hi = distances[0];
    for (double d : distances) {
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    const double range = hi - lo;
    if (range <= 0.0) {
        return hi == 0.0 ? 0.0 : 0.5;
    }
    double sum = 0.0;
    for (double d : distances) sum += (d - lo) / range;
    return sum / static_cast<double>(distances.size());
}

// theta_new = mu * local + (1 - mu) * global, coordinatewise. Computed as
// global + mu * (local - global) so that identical inputs are an exact
// fixed point; the endpoints return the inputs verbatim.
inline ParamSet ema_update(const ParamSet& local, const ParamSet& global, double mu) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw UsageError("ema_update: mu must lie in [0, 1]");
    require_compatible(local, global);
    if (mu == 0.0) return global;
    if (mu == 1.0) return local;
    ParamSet out = global;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        const auto& lv = local.layers[l].values;
        auto& v = out.layers[l].values;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] += mu * (lv[i] - v[i]);
        }
    }
    return out;
}

} // namespace fedsim
