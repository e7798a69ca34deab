#pragma once

// Dueling Q-network: a ReLU trunk feeding a scalar value stream and a
// K-wide advantage stream, recombined into Q-values.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qimb/numkernel.hpp"

namespace qimb {

/// How the value and advantage streams combine into Q.
///   softmax_subtract: q = v + a - softmax(a)        (default)
///   mean_subtract:    q = v + a - mean(a)
///   single_stream:    q = a, no value stream (plain DDQN head)
enum class Aggregator : std::uint32_t { softmax_subtract = 0, mean_subtract = 1, single_stream = 2 };

inline std::string to_string(Aggregator a) {
    switch (a) {
        case Aggregator::softmax_subtract: return "softmax-subtract";
        case Aggregator::mean_subtract: return "mean-subtract";
        case Aggregator::single_stream: return "single-stream";
    }
    throw InvalidArgument("unknown aggregator mode");
}

inline Aggregator parse_aggregator(const std::string& s) {
    if (s == "softmax-subtract" || s == "softmax") return Aggregator::softmax_subtract;
    if (s == "mean-subtract" || s == "mean") return Aggregator::mean_subtract;
    if (s == "single-stream" || s == "none") return Aggregator::single_stream;
    throw InvalidArgument("unknown aggregator mode '" + s + "'");
}

enum class Mode { train, eval };

struct NetworkShape {
    std::size_t input = 0;
    std::vector<std::size_t> hidden{100};
    std::size_t actions = 2;
    Aggregator aggregator = Aggregator::softmax_subtract;
    double dropout = 0.3;  // drop probability on trunk outputs
};

struct DuelingParams {
    std::vector<DenseLayer> trunk;
    DenseLayer value;      // trunk width -> 1; zero rows for single_stream
    DenseLayer advantage;  // trunk width -> K
    Aggregator aggregator = Aggregator::softmax_subtract;
    double keep_probability = 0.7;

    std::size_t action_count() const noexcept { return advantage.out(); }
    std::size_t input_dim() const noexcept { return trunk.empty() ? advantage.in() : trunk.front().in(); }
    bool has_value_stream() const noexcept { return aggregator != Aggregator::single_stream; }

    static DuelingParams create(const NetworkShape& shape, Rng& rng) {
        if (shape.actions < 2) throw InvalidArgument("a Q-network needs at least 2 actions");
        if (shape.input == 0) throw InvalidArgument("a Q-network needs a nonempty input");
        if (!(shape.dropout >= 0.0 && shape.dropout < 1.0))
            throw InvalidArgument("dropout rate must lie in [0, 1)");
        DuelingParams p;
        p.aggregator = shape.aggregator;
        p.keep_probability = 1.0 - shape.dropout;
        std::size_t width = shape.input;
        for (std::size_t h : shape.hidden) {
            if (h == 0) throw InvalidArgument("hidden layer width must be positive");
            p.trunk.push_back(DenseLayer::glorot(width, h, Activation::relu, rng));
            width = h;
        }
        if (p.has_value_stream())
            p.value = DenseLayer::glorot(width, 1, Activation::identity, rng);
        else
            p.value = DenseLayer{Matrix(0, width), {}, Activation::identity};
        p.advantage = DenseLayer::glorot(width, shape.actions, Activation::identity, rng);
        p.validate();
        return p;
    }

    void validate() const {
        std::size_t width = input_dim();
        for (const auto& l : trunk) {
            if (l.in() != width || l.bias.size() != l.out())
                throw InvalidArgument("trunk layer shapes are inconsistent");
            width = l.out();
        }
        if (advantage.in() != width || advantage.bias.size() != advantage.out())
            throw InvalidArgument("advantage stream does not match trunk width");
        if (advantage.out() < 2) throw InvalidArgument("advantage stream needs at least 2 outputs");
        if (has_value_stream()) {
            if (value.out() != 1 || value.in() != width || value.bias.size() != 1)
                throw InvalidArgument("value stream must map the trunk output to a scalar");
        } else if (value.out() != 0) {
            throw InvalidArgument("single-stream network carries a value stream");
        }
        if (!(keep_probability > 0.0 && keep_probability <= 1.0))
            throw InvalidArgument("keep probability must lie in (0, 1]");
    }

    ParamViews views() {
        ParamViews v;
        for (auto& l : trunk) append_views(v, l);
        append_views(v, value);
        append_views(v, advantage);
        return v;
    }
    ConstParamViews views() const {
        ConstParamViews v;
        for (const auto& l : trunk) append_views(v, l);
        append_views(v, value);
        append_views(v, advantage);
        return v;
    }

    bool operator==(const DuelingParams&) const = default;
};

struct DuelingGrads {
    std::vector<LayerGrad> trunk;
    LayerGrad value;
    LayerGrad advantage;

    static DuelingGrads zeros_like(const DuelingParams& p) {
        DuelingGrads g;
        for (const auto& l : p.trunk) g.trunk.push_back(LayerGrad::zeros_like(l));
        g.value = LayerGrad::zeros_like(p.value);
        g.advantage = LayerGrad::zeros_like(p.advantage);
        return g;
    }

    ConstParamViews views() const {
        ConstParamViews v;
        for (const auto& l : trunk) append_views(v, l);
        append_views(v, value);
        append_views(v, advantage);
        return v;
    }
};

struct QOutput {
    Vector q;
    double v = 0.0;
    Vector a;
};

struct QCaches {
    std::vector<LayerCache> trunk;
    LayerCache value;
    LayerCache advantage;
    Vector softmax_a;
    bool valid = false;
};

inline Vector advantage_aggregate(double v, std::span<const double> a, Aggregator mode) {
    if (a.size() < 2) throw InvalidArgument("advantage aggregation needs at least 2 actions");
    Vector q(a.size());
    switch (mode) {
        case Aggregator::softmax_subtract: {
            const Vector s = softmax(a);
            for (std::size_t k = 0; k < a.size(); ++k) q[k] = v + (a[k] - s[k]);
            return q;
        }
        case Aggregator::mean_subtract: {
            double mean = 0.0;
            for (double x : a) mean += x;
            mean /= static_cast<double>(a.size());
            for (std::size_t k = 0; k < a.size(); ++k) q[k] = v + (a[k] - mean);
            return q;
        }
        case Aggregator::single_stream:
            std::copy(a.begin(), a.end(), q.begin());
            return q;
    }
    throw InvalidArgument("unknown aggregator mode");
}

/// Forward pass. In train mode with dropout enabled, `rng` draws the trunk
/// dropout masks and must be non-null.
inline std::pair<QOutput, QCaches> q_forward(const DuelingParams& params, std::span<const double> state,
                                             Mode mode, Rng* rng = nullptr) {
    if (state.size() != params.input_dim())
        throw InvalidArgument("q_forward: state length " + std::to_string(state.size()) +
                              " but network expects " + std::to_string(params.input_dim()));
    const bool drop = mode == Mode::train && params.keep_probability < 1.0;
    if (drop && !rng) throw InvalidArgument("q_forward: train-mode dropout needs a random generator");

    QCaches caches;
    caches.trunk.resize(params.trunk.size());
    Vector h(state.begin(), state.end());
    for (std::size_t i = 0; i < params.trunk.size(); ++i) {
        DropoutMask mask;
        if (drop) mask = DropoutMask::sample(params.trunk[i].out(), params.keep_probability, *rng);
        h = dense_forward(params.trunk[i], h, drop ? &mask : nullptr, &caches.trunk[i]);
    }
    QOutput out;
    if (params.has_value_stream()) out.v = dense_forward(params.value, h, nullptr, &caches.value)[0];
    out.a = dense_forward(params.advantage, h, nullptr, &caches.advantage);
    out.q = advantage_aggregate(out.v, out.a, params.aggregator);
    if (params.aggregator == Aggregator::softmax_subtract) caches.softmax_a = softmax(out.a);
    caches.valid = true;
    return {std::move(out), std::move(caches)};
}

inline QOutput q_eval(const DuelingParams& params, std::span<const double> state) {
    return q_forward(params, state, Mode::eval).first;
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to q[action] is `dloss_dq`; no other Q entry carries gradient.
inline void q_backward_accumulate(const DuelingParams& params, const QCaches& caches, std::size_t action,
                                  double dloss_dq, DuelingGrads& grads) {
    const std::size_t K = params.action_count();
    if (action >= K)
        throw InvalidArgument("q_backward: action " + std::to_string(action) + " out of range for " +
                              std::to_string(K) + " actions");
    if (!caches.valid || caches.trunk.size() != params.trunk.size())
        throw InvalidArgument("q_backward: caches do not come from a matching forward pass");

    Vector da(K, 0.0);
    switch (params.aggregator) {
        case Aggregator::softmax_subtract: {
            const auto& s = caches.softmax_a;
            if (s.size() != K) throw InvalidArgument("q_backward: stale softmax cache");
            // d(a_k - softmax(a)_k)/da_j = [j==k] - s_k([j==k] - s_j)
            for (std::size_t j = 0; j < K; ++j) da[j] = dloss_dq * s[action] * s[j];
            da[action] += dloss_dq * (1.0 - s[action]);
            break;
        }
        case Aggregator::mean_subtract:
            for (std::size_t j = 0; j < K; ++j) da[j] = -dloss_dq / static_cast<double>(K);
            da[action] += dloss_dq;
            break;
        case Aggregator::single_stream:
            da[action] = dloss_dq;
            break;
    }

    Vector dh = dense_backward(params.advantage, caches.advantage, da, grads.advantage);
    if (params.has_value_stream()) {
        const double dv[1] = {dloss_dq};
        const Vector dh_v = dense_backward(params.value, caches.value, dv, grads.value);
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh_v[i];
    }
    for (std::size_t i = params.trunk.size(); i-- > 0;)
        dh = dense_backward(params.trunk[i], caches.trunk[i], dh, grads.trunk[i]);
}

inline DuelingGrads q_backward(const DuelingParams& params, const QCaches& caches, std::size_t action,
                               double dloss_dq) {
    DuelingGrads g = DuelingGrads::zeros_like(params);
    q_backward_accumulate(params, caches, action, dloss_dq, g);
    return g;
}

/// Target network copy. DuelingParams owns its storage, so this is a deep copy.
inline DuelingParams sync_target(const DuelingParams& online) { return online; }

/// Softmax over eval-mode Q-values; the binary positive-class score is [1].
inline Vector predict_scores(const DuelingParams& params, std::span<const double> state) {
    return softmax(q_eval(params, state).q);
}

inline std::size_t argmax(std::span<const double> xs) {
    if (xs.empty()) throw InvalidArgument("argmax of an empty vector");
    return static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin());
}

}  // namespace qimb
