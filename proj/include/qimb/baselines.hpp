#pragma once

// Supervised comparators sharing the numeric kernel: a one-hidden-layer MLP
// trained with (optionally class-weighted) cross-entropy. Binary tasks use a
// single sigmoid output, multiclass tasks a softmax output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qimb/dataset.hpp"
#include "qimb/numkernel.hpp"

namespace qimb {

enum class ClassWeightMode { none, inverse_frequency };
enum class OutputKind : std::uint32_t { sigmoid = 0, softmax = 1 };

struct SupervisedConfig {
    std::vector<std::size_t> hidden{10};
    double dropout = 0.3;
    double learning_rate = 0.1;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    std::size_t patience = 10;  // epochs without validation improvement; 0 disables
    ClassWeightMode class_weights = ClassWeightMode::none;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs == 0) throw UsageError("epochs must be at least 1");
        if (batch_size == 0) throw UsageError("batch size must be positive");
        if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
    }
};

/// w_k = N / (K * N_k): all ones on balanced data.
inline Vector cost_weights(std::span<const std::size_t> counts) {
    if (counts.empty()) throw InvalidArgument("cost_weights: no classes");
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    Vector w(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) throw DataError("cost_weights: class " + std::to_string(k) + " has no samples");
        w[k] = total / (static_cast<double>(counts.size()) * static_cast<double>(counts[k]));
    }
    return w;
}

struct MlpModel {
    std::vector<DenseLayer> hidden;
    DenseLayer output;
    OutputKind kind = OutputKind::sigmoid;
    std::size_t class_count = 2;
    double keep_probability = 0.7;

    std::size_t input_dim() const noexcept { return hidden.empty() ? output.in() : hidden.front().in(); }

    ParamViews views() {
        ParamViews v;
        for (auto& l : hidden) append_views(v, l);
        append_views(v, output);
        return v;
    }
    ConstParamViews views() const {
        ConstParamViews v;
        for (const auto& l : hidden) append_views(v, l);
        append_views(v, output);
        return v;
    }

    bool operator==(const MlpModel&) const = default;
};

inline MlpModel make_mlp(std::size_t input, std::size_t classes, const std::vector<std::size_t>& hidden,
                         double dropout, Rng& rng) {
    if (classes < 2) throw InvalidArgument("a classifier needs at least 2 classes");
    MlpModel m;
    m.class_count = classes;
    m.kind = classes == 2 ? OutputKind::sigmoid : OutputKind::softmax;
    m.keep_probability = 1.0 - dropout;
    std::size_t width = input;
    for (std::size_t h : hidden) {
        m.hidden.push_back(DenseLayer::glorot(width, h, Activation::relu, rng));
        width = h;
    }
    m.output = DenseLayer::glorot(width, m.kind == OutputKind::sigmoid ? 1 : classes, Activation::identity, rng);
    return m;
}

/// Weighted cross-entropy of one sample from its output logits, with the
/// gradient with respect to those logits.
inline LossAndGrad weighted_cross_entropy(std::span<const double> logits, std::size_t label,
                                          std::span<const double> weights, OutputKind kind) {
    const double w = weights[label];
    LossAndGrad out{0.0, Vector(logits.size())};
    if (kind == OutputKind::sigmoid) {
        const double z = logits[0];
        const double y = label == 1 ? 1.0 : 0.0;
        // softplus(z) - y z, computed without overflow
        const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        const double p = 1.0 / (1.0 + std::exp(-z));
        out.loss = w * (softplus - y * z);
        out.grad[0] = w * (p - y);
    } else {
        const Vector p = softmax(logits);
        const double m = *std::max_element(logits.begin(), logits.end());
        double lse = 0.0;
        for (double z : logits) lse += std::exp(z - m);
        lse = m + std::log(lse);
        out.loss = w * (lse - logits[label]);
        for (std::size_t k = 0; k < logits.size(); ++k) out.grad[k] = w * (p[k] - (k == label ? 1.0 : 0.0));
    }
    return out;
}

struct MlpForward {
    Vector logits;
    std::vector<LayerCache> caches;  // hidden..., output
};

inline MlpForward mlp_forward(const MlpModel& m, std::span<const double> x, Rng* rng) {
    if (x.size() != m.input_dim())
        throw InvalidArgument("mlp: input length " + std::to_string(x.size()) + " but model expects " +
                              std::to_string(m.input_dim()));
    const bool drop = rng && m.keep_probability < 1.0;
    MlpForward f;
    f.caches.resize(m.hidden.size() + 1);
    Vector h(x.begin(), x.end());
    for (std::size_t i = 0; i < m.hidden.size(); ++i) {
        DropoutMask mask;
        if (drop) mask = DropoutMask::sample(m.hidden[i].out(), m.keep_probability, *rng);
        h = dense_forward(m.hidden[i], h, drop ? &mask : nullptr, &f.caches[i]);
    }
    f.logits = dense_forward(m.output, h, nullptr, &f.caches.back());
    return f;
}

/// Class scores: [1 - p, p] for sigmoid models, softmax for multiclass.
inline Vector mlp_scores(const MlpModel& m, std::span<const double> x) {
    const Vector z = mlp_forward(m, x, nullptr).logits;
    if (m.kind == OutputKind::sigmoid) {
        const double p = 1.0 / (1.0 + std::exp(-z[0]));
        return {1.0 - p, p};
    }
    return softmax(z);
}

inline Matrix predict_scores(const MlpModel& m, const Dataset& data) {
    if (data.dims() != m.input_dim())
        throw DataError("dataset has " + std::to_string(data.dims()) + " features, model expects " +
                        std::to_string(m.input_dim()));
    Matrix out(data.size(), m.class_count);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Vector s = mlp_scores(m, data.row(i));
        std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
}

/// Summed weighted loss and parameter gradients over a set of rows, in
/// training mode when `rng` is non-null.
inline double mlp_batch_loss_and_grad(const MlpModel& m, const Dataset& data, std::span<const std::size_t> rows,
                                      std::span<const double> weights, Rng* rng, std::vector<LayerGrad>* grads) {
    std::vector<const DenseLayer*> layers;
    for (const auto& l : m.hidden) layers.push_back(&l);
    layers.push_back(&m.output);
    if (grads) {
        grads->clear();
        for (const DenseLayer* l : layers) grads->push_back(LayerGrad::zeros_like(*l));
    }
    double loss = 0.0;
    for (std::size_t r : rows) {
        const MlpForward f = mlp_forward(m, data.row(r), rng);
        const LossAndGrad lg = weighted_cross_entropy(f.logits, data.labels[r], weights, m.kind);
        loss += lg.loss;
        if (grads) {
            Vector g = lg.grad;
            for (std::size_t i = layers.size(); i-- > 0;) g = dense_backward(*layers[i], f.caches[i], g, (*grads)[i]);
        }
    }
    return loss;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct MlpTrainResult {
    MlpModel model;
    Vector class_weights;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

/// Mini-batch Adam on weighted cross-entropy. With validation data, keeps the
/// epoch with the lowest mean validation loss and stops after `patience`
/// epochs without improvement.
inline MlpTrainResult train_supervised(const SupervisedConfig& config, const Dataset& train_data,
                                       const Dataset* validation = nullptr) {
    config.validate();
    train_data.validate();
    if (train_data.empty()) throw DataError("training data is empty");
    const bool have_val = validation && !validation->empty();
    if (have_val && validation->dims() != train_data.dims())
        throw DataError("validation dimensionality differs from training data");

    Rng rng(config.seed);
    MlpTrainResult result;
    const auto counts = train_data.class_counts();
    result.class_weights = config.class_weights == ClassWeightMode::inverse_frequency
                               ? cost_weights(counts)
                               : Vector(counts.size(), 1.0);
    MlpModel model = make_mlp(train_data.dims(), train_data.class_count(), config.hidden, config.dropout, rng);
    AdamState adam(total_size(model.views()), config.learning_rate);

    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> val_rows;
    if (have_val) {
        val_rows.resize(validation->size());
        std::iota(val_rows.begin(), val_rows.end(), std::size_t{0});
    }
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    result.model = model;

    std::vector<LayerGrad> grads;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            const double loss = mlp_batch_loss_and_grad(model, train_data, rows, result.class_weights, &rng, &grads);
            if (!std::isfinite(loss))
                throw NumericalError("supervised training loss became non-finite in epoch " + std::to_string(epoch));
            rec.train_loss += loss;
            ConstParamViews gv;
            for (const auto& g : grads) append_views(gv, g);
            adam_step(model.views(), gv, adam);
        }
        rec.train_loss /= static_cast<double>(order.size());
        if (have_val) {
            rec.val_loss = mlp_batch_loss_and_grad(model, *validation, val_rows, result.class_weights, nullptr, nullptr) /
                           static_cast<double>(val_rows.size());
            if (!std::isfinite(rec.val_loss))
                throw NumericalError("validation loss became non-finite in epoch " + std::to_string(epoch));
            if (rec.val_loss < best_val) {
                best_val = rec.val_loss;
                result.model = model;
                result.best_epoch = epoch;
                since_best = 0;
            } else if (config.patience > 0 && ++since_best >= config.patience) {
                result.history.push_back(rec);
                break;
            }
        } else {
            result.model = model;
            result.best_epoch = epoch;
        }
        result.history.push_back(rec);
    }
    return result;
}

}  // namespace qimb
