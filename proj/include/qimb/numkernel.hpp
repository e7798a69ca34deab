#pragma once

// Dense numeric kernel: row-major matrices, affine layers with ReLU and
// inverted dropout, softmax, squared-error loss, reverse-mode gradients for
// layer stacks, Adam, and a central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qimb/error.hpp"

namespace qimb {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

inline std::string shape_str(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

inline bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, Vector data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw InvalidArgument("matrix data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(rows_, cols_));
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw InvalidArgument("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw InvalidArgument("matmul shape mismatch: " + shape_str(a.rows(), a.cols()) + " x " +
                              shape_str(b.rows(), b.cols()));
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

enum class Activation : std::uint32_t { identity = 0, relu = 1 };

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
    Activation activation = Activation::identity;

    std::size_t in() const noexcept { return weights.cols(); }
    std::size_t out() const noexcept { return weights.rows(); }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
    static DenseLayer glorot(std::size_t in, std::size_t out, Activation act, Rng& rng) {
        DenseLayer layer{Matrix(out, in), Vector(out, 0.0), act};
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& w : layer.weights.data()) w = dist(rng);
        return layer;
    }

    bool operator==(const DenseLayer&) const = default;
};

/// Inverted dropout: kept units are scaled by 1/keep_probability at train time.
struct DropoutMask {
    double keep_probability = 1.0;
    std::vector<std::uint8_t> mask;

    double scale() const noexcept { return 1.0 / keep_probability; }
    bool empty() const noexcept { return mask.empty(); }

    static DropoutMask sample(std::size_t n, double keep_probability, Rng& rng) {
        if (!(keep_probability > 0.0 && keep_probability <= 1.0))
            throw InvalidArgument("dropout keep probability must lie in (0, 1]");
        DropoutMask m{keep_probability, std::vector<std::uint8_t>(n, 1)};
        if (keep_probability < 1.0) {
            std::bernoulli_distribution keep(keep_probability);
            for (auto& bit : m.mask) bit = keep(rng) ? 1 : 0;
        }
        return m;
    }
};

/// What a forward pass through one layer must remember for its backward pass.
struct LayerCache {
    Vector input;
    Vector pre_activation;
    DropoutMask dropout;  // empty when no dropout was applied
    bool valid = false;
};

struct LayerGrad {
    Matrix weights;
    Vector bias;

    static LayerGrad zeros_like(const DenseLayer& layer) {
        return {Matrix(layer.out(), layer.in()), Vector(layer.out(), 0.0)};
    }
};

inline Vector dense_forward(const DenseLayer& layer, std::span<const double> input,
                            const DropoutMask* dropout = nullptr, LayerCache* cache = nullptr) {
    if (input.size() != layer.in())
        throw InvalidArgument("dense_forward: input length " + std::to_string(input.size()) +
                              " but layer expects " + std::to_string(layer.in()));
    if (dropout && !dropout->empty() && dropout->mask.size() != layer.out())
        throw InvalidArgument("dense_forward: dropout mask length does not match layer width");
    Vector pre(layer.out());
    for (std::size_t o = 0; o < layer.out(); ++o) {
        auto w = layer.weights.row(o);
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * input[i];
        pre[o] = acc;
    }
    Vector out = pre;
    if (layer.activation == Activation::relu)
        for (double& x : out) x = x > 0.0 ? x : 0.0;
    if (dropout && !dropout->empty()) {
        const double s = dropout->scale();
        for (std::size_t o = 0; o < out.size(); ++o) out[o] = dropout->mask[o] ? out[o] * s : 0.0;
    }
    if (cache) {
        cache->input.assign(input.begin(), input.end());
        cache->pre_activation = std::move(pre);
        cache->dropout = dropout ? *dropout : DropoutMask{};
        cache->valid = true;
    }
    return out;
}

/// Accumulates parameter gradients of one layer into `accum` and returns the
/// gradient with respect to the layer input.
inline Vector dense_backward(const DenseLayer& layer, const LayerCache& cache,
                             std::span<const double> grad_out, LayerGrad& accum) {
    if (!cache.valid || cache.input.size() != layer.in() ||
        cache.pre_activation.size() != layer.out())
        throw InvalidArgument("dense_backward: missing or stale layer cache");
    if (grad_out.size() != layer.out())
        throw InvalidArgument("dense_backward: upstream gradient length mismatch");
    Vector delta(grad_out.begin(), grad_out.end());
    if (!cache.dropout.empty()) {
        const double s = cache.dropout.scale();
        for (std::size_t o = 0; o < delta.size(); ++o)
            delta[o] = cache.dropout.mask[o] ? delta[o] * s : 0.0;
    }
    if (layer.activation == Activation::relu)
        for (std::size_t o = 0; o < delta.size(); ++o)
            if (cache.pre_activation[o] <= 0.0) delta[o] = 0.0;

    Vector grad_in(layer.in(), 0.0);
    for (std::size_t o = 0; o < layer.out(); ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        accum.bias[o] += d;
        auto gw = accum.weights.row(o);
        auto w = layer.weights.row(o);
        for (std::size_t i = 0; i < layer.in(); ++i) {
            gw[i] += d * cache.input[i];
            grad_in[i] += d * w[i];
        }
    }
    return grad_in;
}

/// Reverse-mode gradients through a layer stack given the caches of one
/// forward pass. Returns one LayerGrad per layer; `input_grad` (optional)
/// receives the gradient with respect to the stack input.
inline std::vector<LayerGrad> backward(std::span<const DenseLayer> layers,
                                       std::span<const LayerCache> caches,
                                       std::span<const double> upstream,
                                       Vector* input_grad = nullptr) {
    if (caches.size() != layers.size())
        throw InvalidArgument("backward: expected one cache per layer");
    std::vector<LayerGrad> grads;
    grads.reserve(layers.size());
    for (const auto& l : layers) grads.push_back(LayerGrad::zeros_like(l));
    Vector g(upstream.begin(), upstream.end());
    for (std::size_t i = layers.size(); i-- > 0;) g = dense_backward(layers[i], caches[i], g, grads[i]);
    if (input_grad) *input_grad = std::move(g);
    return grads;
}

inline Vector softmax(std::span<const double> z) {
    if (z.empty()) throw InvalidArgument("softmax of an empty vector");
    const double m = *std::max_element(z.begin(), z.end());
    Vector out(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += (out[i] = std::exp(z[i] - m));
    for (double& x : out) x /= sum;
    return out;
}

struct LossAndGrad {
    double loss = 0.0;
    Vector grad;
};

/// Sum of squared residuals and its gradient with respect to `predicted`.
inline LossAndGrad mse_loss_and_grad(std::span<const double> predicted, std::span<const double> target) {
    if (predicted.size() != target.size())
        throw InvalidArgument("mse_loss_and_grad: length mismatch " + std::to_string(predicted.size()) +
                              " vs " + std::to_string(target.size()));
    LossAndGrad out{0.0, Vector(predicted.size())};
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double r = target[i] - predicted[i];
        out.loss += r * r;
        out.grad[i] = -2.0 * r;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameter views and Adam

using ParamViews = std::vector<std::span<double>>;
using ConstParamViews = std::vector<std::span<const double>>;

inline std::size_t total_size(const ParamViews& views) {
    std::size_t n = 0;
    for (const auto& v : views) n += v.size();
    return n;
}

inline void append_views(ParamViews& out, DenseLayer& layer) {
    out.emplace_back(layer.weights.data());
    out.emplace_back(layer.bias);
}
inline void append_views(ConstParamViews& out, const DenseLayer& layer) {
    out.emplace_back(layer.weights.data());
    out.emplace_back(layer.bias);
}
inline void append_views(ConstParamViews& out, const LayerGrad& grad) {
    out.emplace_back(grad.weights.data());
    out.emplace_back(grad.bias);
}

inline Vector flatten(const ConstParamViews& views) {
    Vector out;
    for (const auto& v : views) out.insert(out.end(), v.begin(), v.end());
    return out;
}

inline void unflatten(std::span<const double> flat, const ParamViews& views) {
    std::size_t k = 0;
    for (const auto& v : views) {
        if (k + v.size() > flat.size()) throw InvalidArgument("unflatten: flat vector too short");
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), v.size(), v.begin());
        k += v.size();
    }
    if (k != flat.size()) throw InvalidArgument("unflatten: flat vector too long");
}

struct AdamState {
    Vector first_moment;
    Vector second_moment;
    std::uint64_t step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    AdamState(std::size_t n, double lr) : first_moment(n, 0.0), second_moment(n, 0.0), learning_rate(lr) {}
};

/// One bias-corrected Adam update over a set of parameter blocks. Rejects
/// non-finite gradients before touching any parameter.
inline void adam_step(const ParamViews& params, const ConstParamViews& grads, AdamState& state) {
    if (params.size() != grads.size()) throw InvalidArgument("adam_step: parameter/gradient block count mismatch");
    std::size_t n = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size())
            throw InvalidArgument("adam_step: parameter/gradient block " + std::to_string(b) + " size mismatch");
        if (!all_finite(grads[b]))
            throw NumericalError("adam_step: non-finite gradient in parameter block " + std::to_string(b));
        n += params[b].size();
    }
    if (state.first_moment.size() != n || state.second_moment.size() != n)
        throw InvalidArgument("adam_step: optimizer state holds " + std::to_string(state.first_moment.size()) +
                              " entries for " + std::to_string(n) + " parameters");
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double corr1 = 1.0 - std::pow(state.beta1, t);
    const double corr2 = 1.0 - std::pow(state.beta2, t);
    std::size_t k = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto p = params[b];
        auto g = grads[b];
        for (std::size_t i = 0; i < p.size(); ++i, ++k) {
            double& m = state.first_moment[k];
            double& v = state.second_moment[k];
            m = state.beta1 * m + (1.0 - state.beta1) * g[i];
            v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m / corr1;
            const double vhat = v / corr2;
            p[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    adam_step(ParamViews{params}, ConstParamViews{grads}, state);
}

/// Central-difference gradient estimate of `loss` at `params`. Test oracle.
template <class LossFn>
Vector finite_diff_grad(LossFn&& loss, Vector params, double h) {
    if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
    Vector grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + h;
        const double up = loss(std::span<const double>(params));
        params[i] = orig - h;
        const double down = loss(std::span<const double>(params));
        params[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace qimb
