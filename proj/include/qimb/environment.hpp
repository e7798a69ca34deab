#pragma once

// Classification as an episodic MDP. Samples are presented in a shuffled
// order; the reward for a prediction is +-lambda[label]; misclassifying a
// minority-class sample ends the episode.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "qimb/dataset.hpp"

namespace qimb {

struct ClassWeights {
    Vector lambda;
    std::vector<std::size_t> class_counts;
    std::size_t majority = 0;  // the only class outside the minority set

    std::size_t class_count() const noexcept { return lambda.size(); }
    bool is_minority(std::size_t k) const noexcept { return k != majority; }
};

/// lambda_k = (1/N_k) / ||(1/N_0, ..., 1/N_{K-1})||_2. The most frequent
/// class (lowest index on ties) is the majority; every other class is minority.
inline ClassWeights compute_lambda(std::span<const std::size_t> counts) {
    if (counts.size() < 2) throw InvalidArgument("compute_lambda: need at least 2 classes");
    ClassWeights w;
    w.class_counts.assign(counts.begin(), counts.end());
    w.lambda.resize(counts.size());
    double norm2 = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0)
            throw DataError("compute_lambda: class " + std::to_string(k) + " is absent from the training data");
        w.lambda[k] = 1.0 / static_cast<double>(counts[k]);
        norm2 += w.lambda[k] * w.lambda[k];
    }
    const double norm = std::sqrt(norm2);
    for (double& l : w.lambda) l /= norm;
    w.majority = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    return w;
}

struct Reward {
    double r = 0.0;
    bool term = false;
};

inline Reward reward(std::size_t action, std::size_t label, const ClassWeights& weights) {
    const double mag = weights.lambda.at(label);
    if (action == label) return {mag, false};
    return {-mag, weights.is_minority(label)};
}

enum class EpisodeEnd { none, misclassified_minority, exhausted };

struct EpisodeState {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::size_t steps_taken = 0;
    std::size_t step_cap = 0;
    bool terminated = true;
    EpisodeEnd end = EpisodeEnd::none;
};

struct StepResult {
    double reward = 0.0;
    bool term = false;
    EpisodeEnd end = EpisodeEnd::none;
    std::size_t label = 0;
    std::span<const double> next_state;  // the following sample; empty once the order is exhausted
};

class ClassificationEnv {
public:
    /// `step_cap` of 0 means one full pass over the data.
    ClassificationEnv(const Dataset& data, ClassWeights weights, std::size_t step_cap = 0)
        : data_(&data), weights_(std::move(weights)), step_cap_(step_cap) {
        if (weights_.class_count() != data.class_count())
            throw InvalidArgument("class weights cover " + std::to_string(weights_.class_count()) +
                                  " classes but the dataset has " + std::to_string(data.class_count()));
    }

    std::span<const double> reset(Rng& rng) {
        if (data_->empty()) throw DataError("cannot start an episode on an empty dataset");
        state_ = EpisodeState{};
        state_.order.resize(data_->size());
        std::iota(state_.order.begin(), state_.order.end(), std::size_t{0});
        std::shuffle(state_.order.begin(), state_.order.end(), rng);
        state_.step_cap = step_cap_ == 0 ? data_->size() : std::min(step_cap_, data_->size());
        state_.terminated = false;
        return current_state();
    }

    StepResult step(std::size_t action) {
        if (state_.terminated) throw InvalidArgument("step called on a terminated episode");
        if (action >= weights_.class_count()) throw InvalidArgument("action out of range");
        StepResult res;
        res.label = current_label();
        const Reward rw = reward(action, res.label, weights_);
        res.reward = rw.r;
        ++state_.cursor;
        ++state_.steps_taken;
        if (state_.cursor < state_.order.size()) res.next_state = data_->row(state_.order[state_.cursor]);
        if (rw.term) {
            res.end = EpisodeEnd::misclassified_minority;
        } else if (state_.steps_taken >= state_.step_cap) {
            res.end = EpisodeEnd::exhausted;
        }
        res.term = res.end != EpisodeEnd::none;
        state_.terminated = res.term;
        state_.end = res.end;
        return res;
    }

    std::span<const double> current_state() const { return data_->row(state_.order.at(state_.cursor)); }
    std::size_t current_label() const { return data_->labels[state_.order.at(state_.cursor)]; }

    const EpisodeState& state() const noexcept { return state_; }
    const ClassWeights& weights() const noexcept { return weights_; }
    const Dataset& data() const noexcept { return *data_; }

private:
    const Dataset* data_;
    ClassWeights weights_;
    std::size_t step_cap_;
    EpisodeState state_;
};

}  // namespace qimb
