#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/params.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class BackboneKind { Linear, OneHidden };

struct BackboneConfig {
    BackboneKind kind = BackboneKind::Linear;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0; // OneHidden only
    std::size_t embedding_dim = 0;
};

// Small trainable embedding network: either a plain linear map or one
// tanh hidden layer. Parameters live in a ParamSet so the federation
// protocol can move them around without a separate conversion step.
class Backbone {
public:
    Backbone() = default;

    Backbone(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg.input_dim == 0 || cfg.embedding_dim == 0) {
            throw UsageError("backbone: input_dim and embedding_dim must be positive");
        }
        if (cfg.kind == BackboneKind::OneHidden && cfg.hidden_dim == 0) {
            throw UsageError("backbone: hidden_dim must be positive for one-hidden nets");
        }
        Rng rng(seed);
        if (cfg.kind == BackboneKind::Linear) {
            params_.layers.push_back(init_layer("w1", cfg.embedding_dim * cfg.input_dim, cfg.input_dim, rng));
            params_.layers.push_back(init_layer("b1", cfg.embedding_dim, cfg.input_dim, rng));
        } else {
            params_.layers.push_back(init_layer("w1", cfg.hidden_dim * cfg.input_dim, cfg.input_dim, rng));
            params_.layers.push_back(init_layer("b1", cfg.hidden_dim, cfg.input_dim, rng));
            params_.layers.push_back(init_layer("w2", cfg.embedding_dim * cfg.hidden_dim, cfg.hidden_dim, rng));
            params_.layers.push_back(init_layer("b2", cfg.embedding_dim, cfg.hidden_dim, rng));
        }
    }

    const BackboneConfig& config() const { return cfg_; }
    std::size_t input_dim() const { return cfg_.input_dim; }
    std::size_t embedding_dim() const { return cfg_.embedding_dim; }

    const ParamSet& params() const { return params_; }
    ParamSet& params() { return params_; }

    void set_params(ParamSet p) {
        require_compatible(params_, p);
        params_ = std::move(p);
    }

    // L2-normalized embeddings of a batch, one row per sample.
    Matrix embed(const Matrix& batch) const {
        Matrix z = pre_embed(batch);
        l2_normalize_rows(z);
        return z;
    }

    // Embeddings before normalization.
    Matrix pre_embed(const Matrix& batch) const {
        if (batch.cols != cfg_.input_dim) {
            throw ShapeError("backbone: batch column count != input_dim");
        }
        if (cfg_.kind == BackboneKind::Linear) {
            return affine(batch, *params_.find("w1"), *params_.find("b1"), cfg_.embedding_dim);
        }
        Matrix h = affine(batch, *params_.find("w1"), *params_.find("b1"), cfg_.hidden_dim);
        for (double& x : h.data) x = std::tanh(x);
        return affine(h, *params_.find("w2"), *params_.find("b2"), cfg_.embedding_dim);
    }

private:
    static Layer init_layer(const char* name, std::size_t size, std::size_t fan_in, Rng& rng) {
        Layer l;
        l.name = name;
        l.values.resize(size);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : l.values) v = rng.uniform(-bound, bound);
        return l;
    }

    static Matrix affine(const Matrix& in, const Layer& w, const Layer& b, std::size_t out_dim) {
        Matrix out(in.rows, out_dim);
        for (std::size_t i = 0; i < in.rows; ++i) {
            const auto x = in.row(i);
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double* wrow = w.values.data() + o * in.cols;
                double s = b.values[o];
                for (std::size_t j = 0; j < in.cols; ++j) s += wrow[j] * x[j];
                out(i, o) = s;
            }
        }
        return out;
    }

    BackboneConfig cfg_;
    ParamSet params_;
};

// Linear classifier over normalized embeddings; one row per cluster.
struct ClassifierHead {
    Matrix weight; // M x v

    std::size_t num_classes() const { return weight.rows; }

    static ClassifierHead init(std::size_t num_classes, std::size_t embedding_dim,
                               std::uint64_t seed) {
        ClassifierHead head;
        head.weight = Matrix(num_classes, embedding_dim);
        Rng rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
        for (double& v : head.weight.data) v = rng.uniform(-bound, bound);
        return head;
    }
};

struct ForwardResult {
    Matrix embeddings; // B x v, L2-normalized rows
    Matrix logits;     // B x M
};

inline ForwardResult forward(const Backbone& backbone, const ClassifierHead& head,
                             const Matrix& batch) {
    if (head.weight.cols != backbone.embedding_dim()) {
        throw ShapeError("forward: head width != embedding_dim");
    }
    ForwardResult r;
    r.embeddings = backbone.embed(batch);
    r.logits = Matrix(batch.rows, head.weight.rows);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        for (std::size_t c = 0; c < head.weight.rows; ++c) {
            r.logits(i, c) = dot(r.embeddings.row(i), head.weight.row(c));
        }
    }
    return r;
}

inline Matrix extract_features(const Backbone& backbone, const Matrix& samples) {
    if (samples.rows == 0) throw UsageError("extract_features: empty sample set");
    return backbone.embed(samples);
}

struct NetGradients {
    ParamSet backbone;
    Matrix head;
    double loss = 0.0;
    std::vector<int> predictions;
};

namespace detail {

// Softmax cross-entropy over one row of logits; returns the per-sample loss
// and writes p - onehot(y) into grad.
inline double softmax_ce_row(std::span<const double> logits, int label,
                             std::span<double> grad) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        grad[j] = std::exp(logits[j] - mx);
        sum += grad[j];
    }
    for (std::size_t j = 0; j < logits.size(); ++j) grad[j] /= sum;
    const double loss = -(logits[static_cast<std::size_t>(label)] - mx) + std::log(sum);
    grad[static_cast<std::size_t>(label)] -= 1.0;
    return loss;
}

inline int argmax_row(std::span<const double> row) {
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

} // namespace detail

// Mean softmax cross-entropy loss and its analytic gradients for one batch.
// Backprop goes through the embedding L2 normalization: with e = z/|z|,
// dL/dz = (dL/de - (e . dL/de) e) / |z|.
inline NetGradients backward(const Backbone& backbone, const ClassifierHead& head,
                             const Matrix& batch, std::span<const int> labels) {
    if (batch.rows != labels.size()) {
        throw ShapeError("backward: batch rows != label count");
    }
    const std::size_t num_classes = head.weight.rows;
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw UsageError("backward: label out of range");
        }
    }
    const auto& cfg = backbone.config();
    const bool hidden = cfg.kind == BackboneKind::OneHidden;
    const std::size_t v = cfg.embedding_dim;

    NetGradients g;
    g.backbone = backbone.params();
    for (auto& layer : g.backbone.layers) {
        std::fill(layer.values.begin(), layer.values.end(), 0.0);
    }
    g.head = Matrix(head.weight.rows, head.weight.cols);
    g.predictions.resize(batch.rows);

    // Forward with cached intermediates.
    Matrix hid;
    if (hidden) {
        hid = Matrix(batch.rows, cfg.hidden_dim);
        const auto& w1 = *backbone.params().find("w1");
        const auto& b1 = *backbone.params().find("b1");
        for (std::size_t i = 0; i < batch.rows; ++i) {
            const auto x = batch.row(i);
            for (std::size_t o = 0; o < cfg.hidden_dim; ++o) {
                const double* wrow = w1.values.data() + o * cfg.input_dim;
                double s = b1.values[o];
                for (std::size_t j = 0; j < cfg.input_dim; ++j) s += wrow[j] * x[j];
                hid(i, o) = std::tanh(s);
            }
        }
    }
    Matrix z = backbone.pre_embed(batch);

    Layer* gw1 = g.backbone.find("w1");
    Layer* gb1 = g.backbone.find("b1");
    Layer* gw2 = hidden ? g.backbone.find("w2") : nullptr;
    Layer* gb2 = hidden ? g.backbone.find("b2") : nullptr;
    const Layer* w2 = hidden ? backbone.params().find("w2") : nullptr;

    std::vector<double> e(v), gs(num_classes), ge(v), gz(v);
    std::vector<double> logits(num_classes);
    double total_loss = 0.0;

    for (std::size_t i = 0; i < batch.rows; ++i) {
        const auto zrow = z.row(i);
        // mirrors l2_normalize_rows: a degenerate zero embedding stays zero
        // and blocks the gradient through the normalization
        const double raw_norm = l2_norm(zrow);
        const bool degenerate = raw_norm <= kNormFloor;
        const double norm = degenerate ? 1.0 : raw_norm;
        for (std::size_t j = 0; j < v; ++j) e[j] = zrow[j] / norm;

        for (std::size_t c = 0; c < num_classes; ++c) {
            logits[c] = dot(std::span<const double>(e), head.weight.row(c));
        }
        g.predictions[i] = detail::argmax_row(logits);
        total_loss += detail::softmax_ce_row(logits, labels[i], gs);

        // Head gradient and dL/de.
        std::fill(ge.begin(), ge.end(), 0.0);
        for (std::size_t c = 0; c < num_classes; ++c) {
            const auto hrow = head.weight.row(c);
            auto ghrow = g.head.row(c);
            for (std::size_t j = 0; j < v; ++j) {
                ghrow[j] += gs[c] * e[j];
                ge[j] += gs[c] * hrow[j];
            }
        }

        // Through the normalization.
        double proj = 0.0;
        for (std::size_t j = 0; j < v; ++j) proj += e[j] * ge[j];
        for (std::size_t j = 0; j < v; ++j) {
            gz[j] = degenerate ? 0.0 : (ge[j] - proj * e[j]) / norm;
        }

        const auto x = batch.row(i);
        if (!hidden) {
            for (std::size_t o = 0; o < v; ++o) {
                double* grow = gw1->values.data() + o * cfg.input_dim;
                for (std::size_t j = 0; j < cfg.input_dim; ++j) grow[j] += gz[o] * x[j];
                gb1->values[o] += gz[o];
            }
        } else {
            const auto hrow = hid.row(i);
            std::vector<double> ga(cfg.hidden_dim, 0.0);
            for (std::size_t o = 0; o < v; ++o) {
                double* grow = gw2->values.data() + o * cfg.hidden_dim;
                const double* wrow = w2->values.data() + o * cfg.hidden_dim;
                for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
                    grow[j] += gz[o] * hrow[j];
                    ga[j] += gz[o] * wrow[j];
                }
                gb2->values[o] += gz[o];
            }
            for (std::size_t j = 0; j < cfg.hidden_dim; ++j) ga[j] *= 1.0 - hrow[j] * hrow[j];
            for (std::size_t o = 0; o < cfg.hidden_dim; ++o) {
                double* grow = gw1->values.data() + o * cfg.input_dim;
                for (std::size_t j = 0; j < cfg.input_dim; ++j) grow[j] += ga[o] * x[j];
                gb1->values[o] += ga[o];
            }
        }
    }

    const double inv_b = 1.0 / static_cast<double>(batch.rows);
    for (auto& layer : g.backbone.layers) {
        for (double& val : layer.values) val *= inv_b;
    }
    for (double& val : g.head.data) val *= inv_b;
    g.loss = total_loss * inv_b;
    return g;
}

inline double batch_loss(const Backbone& backbone, const ClassifierHead& head,
                         const Matrix& batch, std::span<const int> labels) {
    ForwardResult fr = forward(backbone, head, batch);
    std::vector<double> scratch(head.weight.rows);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.rows; ++i) {
        total += detail::softmax_ce_row(fr.logits.row(i), labels[i], scratch);
    }
    return total / static_cast<double>(batch.rows);
}

inline void apply_sgd_step(Backbone& backbone, ClassifierHead& head,
                           const NetGradients& g, double lr) {
    auto& p = backbone.params();
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& dst = p.layers[l].values;
        const auto& src = g.backbone.layers[l].values;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= lr * src[i];
    }
    for (std::size_t i = 0; i < head.weight.data.size(); ++i) {
        head.weight.data[i] -= lr * g.head.data[i];
    }
}

// Per-epoch training feedback used by the early-stop controller.
struct EpochFeedback {
    std::vector<double> batch_precisions;
    double cumulative_avg = 0.0;
};

// One pass over the data in shuffled batches of size batch_size; SGD on
// softmax cross-entropy. Batch precision is measured on the forward pass
// that produced the gradients, before the update. A short last batch is
// trained as-is.
inline EpochFeedback train_epoch(Backbone& backbone, ClassifierHead& head,
                                 const Matrix& samples, std::span<const int> labels,
                                 double lr, std::size_t batch_size, std::uint64_t seed) {
    if (samples.rows != labels.size()) {
        throw ShapeError("train_epoch: sample count != label count");
    }
    if (samples.rows == 0) throw UsageError("train_epoch: empty dataset");
    if (batch_size == 0) throw UsageError("train_epoch: batch_size must be positive");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= head.weight.rows) {
            throw UsageError("train_epoch: label out of range");
        }
    }

    std::vector<std::size_t> order(samples.rows);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    EpochFeedback fb;
    double precision_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, order.size() - start);
        Matrix batch(count, samples.cols);
        std::vector<int> batch_labels(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t src = order[start + i];
            std::copy(samples.row(src).begin(), samples.row(src).end(), batch.row(i).begin());
            batch_labels[i] = labels[src];
        }
        NetGradients g = backward(backbone, head, batch, batch_labels);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < count; ++i) {
            if (g.predictions[i] == batch_labels[i]) ++correct;
        }
        apply_sgd_step(backbone, head, g, lr);

        const double precision = static_cast<double>(correct) / static_cast<double>(count);
        fb.batch_precisions.push_back(precision);
        precision_sum += precision;
        fb.cumulative_avg = precision_sum / static_cast<double>(fb.batch_precisions.size());
    }
    return fb;
}

} // namespace fedsim
