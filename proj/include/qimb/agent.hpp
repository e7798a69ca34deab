#pragma once

// Double DQN learner over the classification environment: replay memory,
// linearly annealed epsilon-greedy exploration, decoupled action selection
// (online net) and evaluation (target net), periodic target sync and
// validation-driven early stopping.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qimb/dataset.hpp"
#include "qimb/duelnet.hpp"
#include "qimb/environment.hpp"
#include "qimb/metrics.hpp"
#include "qimb/text.hpp"

namespace qimb {

struct Transition {
    Vector state;
    std::size_t action = 0;
    double reward = 0.0;
    Vector next_state;
    bool term = false;
};

/// Fixed-capacity ring buffer; once full, the oldest transition is replaced.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw InvalidArgument("replay memory capacity must be positive");
        buffer_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    void store(Transition t) {
        if (buffer_.size() < capacity_) {
            buffer_.push_back(std::move(t));
        } else {
            buffer_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % capacity_;
    }

    /// Indices of `batch_size` distinct entries drawn uniformly (Floyd's method).
    std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const {
        if (batch_size == 0) throw InvalidArgument("batch size must be positive");
        if (batch_size > size())
            throw InvalidArgument("replay memory holds " + std::to_string(size()) + " transitions, batch needs " +
                                  std::to_string(batch_size));
        const std::size_t n = size();
        std::vector<std::size_t> picked;
        picked.reserve(batch_size);
        for (std::size_t j = n - batch_size; j < n; ++j) {
            const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
            if (std::find(picked.begin(), picked.end(), t) == picked.end())
                picked.push_back(t);
            else
                picked.push_back(j);
        }
        return picked;
    }

    /// Copies of the sampled transitions, so later writes to the buffer cannot
    /// leak into an update already in progress.
    std::vector<Transition> sample_batch(std::size_t batch_size, Rng& rng) const {
        std::vector<Transition> out;
        for (std::size_t i : sample_indices(batch_size, rng)) out.push_back(buffer_[i]);
        return out;
    }

    std::size_t size() const noexcept { return buffer_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const Transition& operator[](std::size_t i) const { return buffer_.at(i); }
    Transition& operator[](std::size_t i) { return buffer_.at(i); }

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> buffer_;
};

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.01;
    std::uint64_t horizon = 120000;
};

inline double epsilon_at(std::uint64_t step, const EpsilonSchedule& s) {
    if (s.horizon == 0) return s.end;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(s.horizon));
    return s.start - (s.start - s.end) * frac;
}

/// Uniform action with probability epsilon, otherwise argmax (lowest index on ties).
inline std::size_t select_action(std::span<const double> q, double epsilon, Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must lie in [0, 1]");
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u < epsilon) return std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng);
    return argmax(q);
}

/// y = r + (1 - term) * gamma * Q_target(s', argmax_a Q_online(s', a)),
/// both networks in evaluation mode.
inline double ddqn_target(const Transition& t, const DuelingParams& online, const DuelingParams& target,
                          double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("discount must lie in [0, 1)");
    if (t.term || gamma == 0.0) return t.reward;
    const std::size_t best = argmax(q_eval(online, t.next_state).q);
    return t.reward + gamma * q_eval(target, t.next_state).q[best];
}

enum class LossReduction { sum, mean };

struct EarlyStopTargets {
    double sensitivity = 0.85;
    double specificity = 0.75;
};

struct TrainingConfig {
    double learning_rate = 0.0004;
    double gamma = 0.1;
    std::size_t batch_size = 64;
    std::size_t memory_capacity = 50000;
    std::uint64_t total_steps = 120000;
    std::vector<std::size_t> hidden{100};
    double dropout = 0.3;
    Aggregator aggregator = Aggregator::softmax_subtract;
    std::uint64_t sync_every = 500;
    std::uint64_t eval_every = 1000;
    std::optional<EarlyStopTargets> early_stop;
    std::size_t episode_step_cap = 0;  // 0: one pass over the training data
    double epsilon_start = 1.0;
    double epsilon_end = 0.01;
    LossReduction loss = LossReduction::sum;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw UsageError("discount must lie in [0, 1)");
        if (batch_size == 0 || batch_size > memory_capacity)
            throw UsageError("batch size must be positive and no larger than the replay capacity");
        if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
        if (sync_every == 0 || eval_every == 0) throw UsageError("sync and evaluation cadences must be positive");
        if (hidden.empty()) throw UsageError("at least one hidden layer is required");
        if (!(epsilon_start >= epsilon_end && epsilon_end >= 0.0 && epsilon_start <= 1.0))
            throw UsageError("epsilon schedule must satisfy 1 >= start >= end >= 0");
    }
};

struct HistoryPoint {
    std::uint64_t step = 0;
    std::uint64_t episode = 0;
    double mean_reward = 0.0;
    double val_sensitivity = std::numeric_limits<double>::quiet_NaN();
    double val_specificity = std::numeric_limits<double>::quiet_NaN();
    double val_auroc = std::numeric_limits<double>::quiet_NaN();
    double val_g_mean = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingHistory {
    std::vector<HistoryPoint> points;
};

/// Stop when the latest evaluation point strictly exceeds both targets.
inline bool early_stop_check(const TrainingHistory& history, const std::optional<EarlyStopTargets>& targets) {
    if (!targets || history.points.empty()) return false;
    const auto& p = history.points.back();
    return p.val_sensitivity > targets->sensitivity && p.val_specificity > targets->specificity;
}

/// Validation summary: binary tasks score class 1 as positive; multiclass
/// tasks report the one-vs-all means.
struct ValidationSummary {
    double sensitivity = std::numeric_limits<double>::quiet_NaN();
    double specificity = std::numeric_limits<double>::quiet_NaN();
    double auroc = std::numeric_limits<double>::quiet_NaN();
    double g_mean = std::numeric_limits<double>::quiet_NaN();
};

/// N x K class scores (softmax over eval-mode Q) for every row of `data`.
inline Matrix score_dataset(const DuelingParams& params, const Dataset& data) {
    Matrix out(data.size(), params.action_count());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Vector s = predict_scores(params, data.row(i));
        std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
}

inline std::vector<std::size_t> argmax_rows(const Matrix& scores) {
    std::vector<std::size_t> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) out[i] = argmax(scores.row(i));
    return out;
}

inline ValidationSummary summarize(const Matrix& scores, std::span<const std::size_t> truth) {
    ValidationSummary s;
    const auto pred = argmax_rows(scores);
    const std::size_t K = scores.cols();
    if (K == 2) {
        const auto c = confusion(pred, truth, 1);
        s.sensitivity = sensitivity(c).value_or(std::numeric_limits<double>::quiet_NaN());
        s.specificity = specificity(c).value_or(std::numeric_limits<double>::quiet_NaN());
        s.g_mean = g_mean(c).value_or(std::numeric_limits<double>::quiet_NaN());
        if (c.tp + c.fn > 0 && c.tn + c.fp > 0) {
            Vector pos(scores.rows());
            for (std::size_t i = 0; i < scores.rows(); ++i) pos[i] = scores(i, 1);
            s.auroc = auroc(pos, truth, 1);
        }
    } else {
        const auto ova = one_vs_all(pred, truth, K, &scores);
        s.sensitivity = ova.mean_sensitivity;
        s.specificity = ova.mean_specificity;
        s.auroc = ova.mean_auroc;
        s.g_mean = ova.mean_g;
    }
    return s;
}

struct TrainResult {
    DuelingParams params;
    TrainingHistory history;
    std::uint64_t updates = 0;
    std::uint64_t selected_step = 0;  // evaluation point whose parameters were kept
    bool stopped_early = false;
};

/// Observer invoked after each evaluation point; used by tests and the CLI.
struct TrainHooks {
    std::ostream* log = nullptr;
};

/// Runs episodes until `total_steps` parameter updates or early stopping.
/// Returns the parameters from the evaluation point with the best validation
/// G-mean (or from the early-stopping point); without validation data the
/// final parameters are returned.
inline TrainResult train(const TrainingConfig& config, const Dataset& train_data, const Dataset* validation = nullptr,
                         TrainHooks hooks = {}) {
    config.validate();
    train_data.validate();
    const bool have_val = validation && !validation->empty();
    if (config.early_stop && !have_val)
        throw UsageError("early stopping needs a nonempty validation set");
    if (train_data.empty()) throw DataError("training data is empty");
    const auto counts = train_data.class_counts();
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
        throw DataError("training data must contain at least 2 classes");
    if (have_val && validation->dims() != train_data.dims())
        throw DataError("validation dimensionality differs from training data");

    Rng init_rng(config.seed);
    Rng run_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    NetworkShape shape;
    shape.input = train_data.dims();
    shape.hidden = config.hidden;
    shape.actions = train_data.class_count();
    shape.aggregator = config.aggregator;
    shape.dropout = config.dropout;

    TrainResult result;
    result.params = DuelingParams::create(shape, init_rng);
    if (config.total_steps == 0) return result;

    DuelingParams online = result.params;
    DuelingParams target = sync_target(online);
    AdamState adam(total_size(online.views()), config.learning_rate);
    ReplayMemory memory(config.memory_capacity);
    ClassificationEnv env(train_data, compute_lambda(counts), config.episode_step_cap);
    const EpsilonSchedule schedule{config.epsilon_start, config.epsilon_end, config.total_steps};

    double best_g = -std::numeric_limits<double>::infinity();
    double reward_sum = 0.0;
    std::uint64_t reward_steps = 0;
    std::uint64_t episode = 0;
    std::uint64_t updates = 0;
    bool done = false;

    auto evaluate_point = [&]() {
        HistoryPoint p;
        p.step = updates;
        p.episode = episode;
        p.mean_reward = reward_steps ? reward_sum / static_cast<double>(reward_steps) : 0.0;
        reward_sum = 0.0;
        reward_steps = 0;
        if (have_val) {
            const auto s = summarize(score_dataset(online, *validation), validation->labels);
            p.val_sensitivity = s.sensitivity;
            p.val_specificity = s.specificity;
            p.val_auroc = s.auroc;
            p.val_g_mean = s.g_mean;
            const double g = std::isnan(s.g_mean) ? -1.0 : s.g_mean;
            if (g > best_g) {
                best_g = g;
                result.params = online;
                result.selected_step = updates;
            }
        }
        result.history.points.push_back(p);
        if (hooks.log)
            *hooks.log << "step " << p.step << " episode " << p.episode << " mean_reward " << p.mean_reward
                       << " val_sens " << p.val_sensitivity << " val_spec " << p.val_specificity << " val_auroc "
                       << p.val_auroc << "\n";
        if (early_stop_check(result.history, config.early_stop)) {
            result.params = online;
            result.selected_step = updates;
            result.stopped_early = true;
            done = true;
        }
    };

    const double reduce = config.loss == LossReduction::mean ? 1.0 / static_cast<double>(config.batch_size) : 1.0;
    Vector state;
    while (!done) {
        ++episode;
        {
            const auto first = env.reset(run_rng);
            state.assign(first.begin(), first.end());
        }
        for (;;) {
            const double eps = epsilon_at(updates, schedule);
            const std::size_t action = select_action(q_eval(online, state).q, eps, run_rng);
            const StepResult res = env.step(action);
            reward_sum += res.reward;
            ++reward_steps;
            Transition t{state, action, res.reward,
                         res.next_state.empty() ? state : Vector(res.next_state.begin(), res.next_state.end()),
                         res.term};
            memory.store(std::move(t));

            if (memory.size() >= config.batch_size) {
                const auto batch = memory.sample_batch(config.batch_size, run_rng);
                DuelingGrads grads = DuelingGrads::zeros_like(online);
                double loss = 0.0;
                for (const auto& tr : batch) {
                    const double y = ddqn_target(tr, online, target, config.gamma);
                    auto [out, caches] = q_forward(online, tr.state, Mode::train, &run_rng);
                    const double resid = y - out.q[tr.action];
                    loss += resid * resid * reduce;
                    q_backward_accumulate(online, caches, tr.action, -2.0 * resid * reduce, grads);
                }
                if (!std::isfinite(loss))
                    throw NumericalError("training loss became non-finite at update " + std::to_string(updates));
                adam_step(online.views(), grads.views(), adam);
                ++updates;
                if (updates % config.sync_every == 0) target = sync_target(online);
                if (updates % config.eval_every == 0 || updates == config.total_steps) evaluate_point();
                if (updates >= config.total_steps) done = true;
            }
            if (done || res.term) break;
            state.assign(res.next_state.begin(), res.next_state.end());
        }
    }
    result.updates = updates;
    if (!have_val || result.history.points.empty()) {
        result.params = online;
        result.selected_step = updates;
    }
    return result;
}

inline void write_history_tsv(std::ostream& os, const TrainingHistory& h) {
    os << "step\tepisode\tmean_reward\tval_sensitivity\tval_specificity\tval_auroc\n";
    for (const auto& p : h.points)
        os << p.step << '\t' << p.episode << '\t' << format_double(p.mean_reward) << '\t'
           << format_double(p.val_sensitivity) << '\t' << format_double(p.val_specificity) << '\t'
           << format_double(p.val_auroc) << '\n';
}

}  // namespace qimb
