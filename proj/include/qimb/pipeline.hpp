#pragma once

// Experiment lifecycle behind the command-line tool: generate, train,
// tune-threshold, evaluate, compare. Every command reads a Config, writes only
// into its output directory, and stamps each file with the tool version, the
// config hash and the seed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qimb/agent.hpp"
#include "qimb/baselines.hpp"
#include "qimb/config.hpp"
#include "qimb/data.hpp"
#include "qimb/model_io.hpp"
#include "qimb/preprocess.hpp"
#include "qimb/report.hpp"

namespace qimb {

inline constexpr const char* kVersion = "0.1.0";

enum class Method { q_imb, ddqn, mlp, mlp_smote, mlp_cost_sensitive };

inline Method parse_method(const std::string& s) {
    if (s == "q-imb") return Method::q_imb;
    if (s == "ddqn") return Method::ddqn;
    if (s == "mlp") return Method::mlp;
    if (s == "mlp+smote") return Method::mlp_smote;
    if (s == "mlp+cost-sensitive") return Method::mlp_cost_sensitive;
    throw UsageError("unknown method '" + s + "' (expected q-imb, ddqn, mlp, mlp+smote or mlp+cost-sensitive)");
}

inline std::string to_string(Method m) {
    switch (m) {
        case Method::q_imb: return "q-imb";
        case Method::ddqn: return "ddqn";
        case Method::mlp: return "mlp";
        case Method::mlp_smote: return "mlp+smote";
        case Method::mlp_cost_sensitive: return "mlp+cost-sensitive";
    }
    return "?";
}

inline bool is_rl(Method m) { return m == Method::q_imb || m == Method::ddqn; }

struct CommandContext {
    Config config;
    std::filesystem::path out;
    std::ostream* log = nullptr;  // progress; null for silence
    std::ostream* console = nullptr;  // command summary (stdout in the CLI)

    std::uint64_t seed() const { return config.get_uint("seed", 0); }

    std::map<std::string, std::string> provenance() const {
        return {{"version", kVersion}, {"config", config.hash()}, {"seed", std::to_string(seed())}};
    }
};

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("failed writing " + p.string());
}

inline std::string file_hash(const std::filesystem::path& p) { return hex64(fnv1a64(read_file(p))); }

inline std::vector<std::string> provenance_lines(const std::map<std::string, std::string>& prov) {
    std::vector<std::string> out;
    for (const auto& [k, v] : prov) out.push_back(k + "=" + v);
    return out;
}

inline void put_header(std::ostream& os, const std::string& format, const std::map<std::string, std::string>& prov) {
    os << "# " << format << '\n';
    for (const auto& [k, v] : prov) os << "# " << k << '=' << v << '\n';
}

inline CsvSchema schema_from(const Config& c) {
    CsvSchema s;
    s.label_column = c.get_or("data.label_column", "label");
    s.feature_columns = c.get_list("data.features");
    s.categorical_columns = c.get_list("data.categorical");
    s.missing_token = c.get_or("data.missing_token", "");
    const std::string delim = c.get_or("data.delimiter", ",");
    if (delim == "tab" || delim == "\\t") s.delimiter = '\t';
    else if (delim.size() == 1) s.delimiter = delim[0];
    else throw UsageError("data.delimiter must be a single character or 'tab'");
    return s;
}

inline void warn_unused(const CommandContext& ctx) {
    if (!ctx.log) return;
    for (const auto& k : ctx.config.unused_keys()) *ctx.log << "note: config key '" << k << "' not used by this command\n";
}

inline Matrix score_model(const ModelFile& m, const Dataset& d) {
    if (m.kind == ModelKind::q_network) return score_dataset(to_dueling(m), d);
    return predict_scores(to_mlp(m), d);
}

inline void check_model_input(const ModelFile& m, const Dataset& d) {
    const std::size_t want = m.layers.empty() ? 0 : m.layers.front().in();
    if (d.dims() != want)
        throw DataError("data has " + std::to_string(d.dims()) + " model inputs after preprocessing, model expects " +
                        std::to_string(want));
    if (d.class_count() != m.classes) throw DataError("data class count differs from the model's");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generate

struct GenerateSummary {
    std::vector<std::size_t> counts;
    std::vector<std::string> files;
};

/// Builds a dataset (seeded Gaussian classes, or an existing delimited file),
/// optionally subsamples controls, splits it and writes data.csv,
/// train.csv, validation.csv, test.csv and dataset.json.
inline GenerateSummary cmd_generate(const CommandContext& ctx) {
    const Config& c = ctx.config;
    const std::uint64_t seed = ctx.seed();
    SplitSpec sp;
    sp.train = c.get_double("split.train", 0.6);
    sp.validation = c.get_double("split.validation", 0.2);
    sp.test = c.get_double("split.test", 0.2);
    sp.stratified = c.get_bool("split.stratified", true);
    sp.seed = seed;
    if (std::abs(sp.train + sp.validation + sp.test - 1.0) > 1e-9 || sp.train <= 0.0 || sp.validation < 0.0 ||
        sp.test < 0.0)
        throw UsageError("split fractions must be non-negative, train positive, and sum to 1");

    Dataset data;
    nlohmann::json spec_json;
    if (c.has("generate.source")) {
        const std::string src = c.get("generate.source");
        data = load_csv(src, detail::schema_from(c)).data;
        spec_json["source"] = src;
        spec_json["source_hash"] = detail::file_hash(src);
    } else {
        const auto n = c.get_uint("synthetic.n");
        const auto d = c.get_uint("synthetic.d");
        const auto prev = c.get_doubles("synthetic.prevalences");
        const double sep = c.get_double("synthetic.separation", 2.0);
        const std::string layout = c.get_or("synthetic.layout", "simplex");
        if (n == 0) throw UsageError("synthetic.n must be positive");
        if (d == 0) throw UsageError("synthetic.d must be positive");
        if (prev.size() < 2) throw UsageError("synthetic.prevalences needs at least 2 classes");
        SyntheticSpec spec;
        try {
            if (layout == "simplex") spec = simplex_layout(prev, n, d, sep, seed);
            else if (layout == "axis") spec = axis_layout(prev, n, d, sep, seed);
            else throw UsageError("synthetic.layout must be 'simplex' or 'axis'");
            spec.class_names = c.get_list("synthetic.class_names");
            data = generate_synthetic(spec);
        } catch (const InvalidArgument& e) {
            throw UsageError(std::string("invalid synthetic spec: ") + e.what());
        }
        spec_json = {{"n", n}, {"d", d}, {"prevalences", prev}, {"separation", sep}, {"layout", layout}};
    }
    if (c.has("generate.controls_per_case")) {
        const auto minority_name = c.get("generate.minority_class");
        const auto it = std::find(data.class_names.begin(), data.class_names.end(), minority_name);
        if (it == data.class_names.end()) throw UsageError("generate.minority_class '" + minority_name + "' not found");
        Rng rng(seed ^ 0x5bd1e995ULL);
        data = simulate_prevalence(data, static_cast<std::size_t>(it - data.class_names.begin()),
                                   c.get_uint("generate.controls_per_case"), rng);
    }
    detail::warn_unused(ctx);

    Splits parts;
    try {
        parts = split(data, sp);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const auto comments = detail::provenance_lines(ctx.provenance());
    GenerateSummary summary;
    summary.counts = data.class_counts();
    auto emit = [&](const std::string& name, const Dataset& d) {
        std::ostringstream os;
        write_csv(os, d, comments);
        detail::write_file(ctx.out / name, os.str());
        summary.files.push_back(name);
    };
    emit("data.csv", data);
    emit("train.csv", parts.train);
    emit("validation.csv", parts.validation);
    emit("test.csv", parts.test);

    nlohmann::json meta;
    meta["format"] = "qimb-dataset v1";
    meta["provenance"] = ctx.provenance();
    meta["spec"] = spec_json;
    meta["feature_names"] = data.feature_names;
    meta["class_names"] = data.class_names;
    meta["class_counts"] = summary.counts;
    meta["split"] = {{"train", parts.train.size()}, {"validation", parts.validation.size()}, {"test", parts.test.size()}};
    detail::write_file(ctx.out / "dataset.json", meta.dump(2) + "\n");
    summary.files.push_back("dataset.json");

    if (ctx.console) {
        *ctx.console << "class\tcount\tprevalence\n";
        for (std::size_t k = 0; k < summary.counts.size(); ++k)
            *ctx.console << data.class_names[k] << '\t' << summary.counts[k] << '\t'
                         << format_fixed(static_cast<double>(summary.counts[k]) / static_cast<double>(data.size()), 4)
                         << '\n';
    }
    return summary;
}

// ---------------------------------------------------------------------------
// train

inline TrainingConfig rl_config_from(const Config& c, Method m, std::uint64_t seed) {
    TrainingConfig t;
    t.learning_rate = c.get_double("qlearn.learning_rate", t.learning_rate);
    t.gamma = c.get_double("qlearn.gamma", t.gamma);
    t.batch_size = c.get_uint("qlearn.batch_size", t.batch_size);
    t.memory_capacity = c.get_uint("qlearn.memory", t.memory_capacity);
    t.total_steps = c.get_uint("qlearn.steps", t.total_steps);
    t.hidden = c.get_uints("qlearn.hidden", {100});
    t.dropout = c.get_double("qlearn.dropout", t.dropout);
    t.sync_every = c.get_uint("qlearn.sync_every", t.sync_every);
    t.eval_every = c.get_uint("qlearn.eval_every", t.eval_every);
    t.episode_step_cap = c.get_uint("qlearn.episode_step_cap", 0);
    t.epsilon_start = c.get_double("qlearn.epsilon_start", t.epsilon_start);
    t.epsilon_end = c.get_double("qlearn.epsilon_end", t.epsilon_end);
    const std::string loss = c.get_or("qlearn.loss", "sum");
    if (loss == "sum") t.loss = LossReduction::sum;
    else if (loss == "mean") t.loss = LossReduction::mean;
    else throw UsageError("qlearn.loss must be 'sum' or 'mean'");
    if (c.get_bool("qlearn.early_stop", false))
        t.early_stop = EarlyStopTargets{c.get_double("qlearn.early_stop_sensitivity", 0.85),
                                        c.get_double("qlearn.early_stop_specificity", 0.75)};
    if (m == Method::ddqn) {
        t.aggregator = Aggregator::single_stream;
    } else {
        try {
            t.aggregator = parse_aggregator(c.get_or("qlearn.aggregator", "softmax"));
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
        if (t.aggregator == Aggregator::single_stream)
            throw UsageError("q-imb needs a dueling aggregator; use method ddqn for a single-stream head");
    }
    t.seed = seed;
    t.validate();
    return t;
}

inline SupervisedConfig mlp_config_from(const Config& c, Method m, std::uint64_t seed) {
    SupervisedConfig s;
    s.hidden = c.get_uints("mlp.hidden", {10});
    s.dropout = c.get_double("mlp.dropout", s.dropout);
    s.learning_rate = c.get_double("mlp.learning_rate", s.learning_rate);
    s.epochs = c.get_uint("mlp.epochs", s.epochs);
    s.batch_size = c.get_uint("mlp.batch_size", s.batch_size);
    s.patience = c.get_uint("mlp.patience", s.patience);
    s.class_weights = m == Method::mlp_cost_sensitive ? ClassWeightMode::inverse_frequency : ClassWeightMode::none;
    s.seed = seed;
    s.validate();
    return s;
}

struct TrainSummary {
    Method method = Method::q_imb;
    std::vector<std::size_t> class_counts;
    Vector weights;  // lambda for RL methods, loss weights for MLPs
    std::uint64_t updates = 0;
    std::uint64_t selected_step = 0;
    bool stopped_early = false;
};

/// Trains one method on data.train (validated on data.validation) and writes
/// model.qimb, preprocess.json, history.tsv and train_report.txt.
inline TrainSummary cmd_train(const CommandContext& ctx) {
    const Config& c = ctx.config;
    const std::uint64_t seed = ctx.seed();
    const Method method = parse_method(c.get("method"));
    const std::string train_path = c.get("data.train");
    const std::string val_path = c.get_or("data.validation", "");
    const bool do_impute = c.get_bool("preprocess.impute", true);
    const bool do_scale = c.get_bool("preprocess.standardize", true);
    const double smote_strategy = c.get_double("preprocess.smote_strategy", 0.2);
    const std::size_t smote_k = c.get_uint("preprocess.smote_k", 5);
    if (method == Method::mlp_smote && !(smote_strategy > 0.0 && smote_strategy <= 1.0))
        throw UsageError("preprocess.smote_strategy must lie in (0, 1]");
    if (method == Method::mlp_smote && smote_k == 0) throw UsageError("preprocess.smote_k must be positive");

    std::optional<TrainingConfig> rl;
    std::optional<SupervisedConfig> sup;
    if (is_rl(method)) rl = rl_config_from(c, method, seed);
    else sup = mlp_config_from(c, method, seed);
    const CsvSchema schema_in = detail::schema_from(c);
    detail::warn_unused(ctx);

    CsvLoad loaded = load_csv(train_path, schema_in);
    Dataset train_data = std::move(loaded.data);
    const Preprocessor prep = fit_preprocessor(loaded.schema, train_data, do_impute, do_scale);
    std::optional<Dataset> validation;
    if (!val_path.empty()) validation = prep.load(val_path);

    TrainSummary summary;
    summary.method = method;
    summary.class_counts = train_data.class_counts();
    auto prov = ctx.provenance();
    prov["method"] = to_string(method);
    prov["train_hash"] = detail::file_hash(train_path);
    if (!val_path.empty()) prov["validation_hash"] = detail::file_hash(val_path);
    std::string prov_text;
    for (const auto& [k, v] : prov) prov_text += k + "=" + v + "\n";

    std::ostringstream history;
    detail::put_header(history, "qimb-history v1", prov);
    ModelFile model;
    if (rl) {
        summary.weights = compute_lambda(summary.class_counts).lambda;
        TrainHooks hooks;
        hooks.log = ctx.log;
        const TrainResult r = train(*rl, train_data, validation ? &*validation : nullptr, hooks);
        summary.updates = r.updates;
        summary.selected_step = r.selected_step;
        summary.stopped_early = r.stopped_early;
        write_history_tsv(history, r.history);
        model = to_model_file(r.params, prov_text);
    } else {
        Dataset fit_data = train_data;
        if (method == Method::mlp_smote) {
            Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
            try {
                fit_data = smote(train_data, smote_strategy, smote_k, rng);
            } catch (const InvalidArgument& e) {
                throw UsageError(e.what());
            }
        }
        const MlpTrainResult r = train_supervised(*sup, fit_data, validation ? &*validation : nullptr);
        summary.weights = r.class_weights;
        summary.updates = r.history.size();
        summary.selected_step = r.best_epoch;
        summary.stopped_early = r.history.size() < sup->epochs;
        history << "epoch\ttrain_loss\tval_loss\n";
        for (const auto& e : r.history)
            history << e.epoch << '\t' << format_double(e.train_loss) << '\t' << format_double(e.val_loss) << '\n';
        model = to_model_file(r.model, prov_text);
    }

    std::ostringstream report;
    detail::put_header(report, "qimb-train v1", prov);
    report << "method=" << to_string(method) << '\n';
    report << "train_rows=" << train_data.size() << '\n';
    for (std::size_t k = 0; k < summary.class_counts.size(); ++k)
        report << "class_count." << train_data.class_names[k] << '=' << summary.class_counts[k] << '\n';
    const char* weight_key = is_rl(method) ? "lambda." : "class_weight.";
    for (std::size_t k = 0; k < summary.weights.size(); ++k)
        report << weight_key << train_data.class_names[k] << '=' << format_double(summary.weights[k]) << '\n';
    report << (is_rl(method) ? "updates=" : "epochs=") << summary.updates << '\n';
    report << (is_rl(method) ? "selected_step=" : "best_epoch=") << summary.selected_step << '\n';
    report << "stopped_early=" << (summary.stopped_early ? "true" : "false") << '\n';
    if (prep.scaler)
        for (const auto& d : prep.scaler->dropped) report << "dropped_constant_feature=" << d << '\n';

    detail::write_file(ctx.out / "model.qimb", encode_model(model));
    detail::write_file(ctx.out / "preprocess.json", sidecar_json(prep, prov));
    detail::write_file(ctx.out / "history.tsv", history.str());
    detail::write_file(ctx.out / "train_report.txt", report.str());
    if (ctx.console) *ctx.console << report.str();
    return summary;
}

// ---------------------------------------------------------------------------
// tune-threshold

struct ThresholdRecord {
    double threshold = 0.0;
    double target = 0.0;
    double achieved_sensitivity = 0.0;
    std::string validation_hash;
    std::string model_hash;
};

inline void write_threshold(std::ostream& os, const ThresholdRecord& t, const std::map<std::string, std::string>& prov) {
    detail::put_header(os, "qimb-threshold v1", prov);
    os << "threshold=" << format_double(t.threshold) << '\n';
    os << "target=" << format_double(t.target) << '\n';
    os << "validation_sensitivity=" << format_double(t.achieved_sensitivity) << '\n';
    os << "validation_hash=" << t.validation_hash << '\n';
    os << "model_hash=" << t.model_hash << '\n';
}

inline ThresholdRecord read_threshold(const std::string& path) {
    std::istringstream in(detail::read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "# qimb-threshold v1") throw DataError(path + ": not a threshold record");
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError(path + ": malformed line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto num = [&](const std::string& k) {
        const auto it = kv.find(k);
        const auto v = it == kv.end() ? std::nullopt : parse_double(it->second);
        if (!v) throw DataError(path + ": missing or invalid '" + k + "'");
        return *v;
    };
    ThresholdRecord t;
    t.threshold = num("threshold");
    t.target = num("target");
    t.achieved_sensitivity = num("validation_sensitivity");
    t.validation_hash = kv["validation_hash"];
    t.model_hash = kv["model_hash"];
    return t;
}

/// Largest threshold on the positive-class score reaching threshold.target
/// sensitivity on the validation data. Binary tasks only.
inline ThresholdRecord cmd_tune_threshold(const CommandContext& ctx) {
    const Config& c = ctx.config;
    const std::filesystem::path model_dir = c.get("model.dir");
    const std::string val_path = c.get_or("threshold.data", c.get_or("data.validation", ""));
    if (val_path.empty()) throw UsageError("tune-threshold needs threshold.data or data.validation");
    const double target = c.get_double("threshold.target", 0.9);
    if (!(target > 0.0 && target <= 1.0))
        throw UsageError("threshold.target must lie in (0, 1], got " + format_double(target));
    detail::warn_unused(ctx);

    const ModelFile model = decode_model(detail::read_file(model_dir / "model.qimb"));
    if (model.classes != 2)
        throw UsageError("threshold adjustment applies to binary tasks only (model has " +
                         std::to_string(model.classes) + " classes)");
    const Preprocessor prep = load_sidecar((model_dir / "preprocess.json").string());
    const Dataset val = prep.load(val_path);
    detail::check_model_input(model, val);
    const Matrix scores = detail::score_model(model, val);
    Vector pos(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) pos[i] = scores(i, 1);

    ThresholdRecord t;
    t.target = target;
    try {
        t.threshold = threshold_tune(pos, val.labels, target, 1);
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("validation data: ") + e.what());
    }
    t.achieved_sensitivity = *sensitivity(confusion(apply_threshold(pos, t.threshold), val.labels, 1));
    t.validation_hash = detail::file_hash(val_path);
    t.model_hash = detail::file_hash(model_dir / "model.qimb");
    std::ostringstream os;
    write_threshold(os, t, ctx.provenance());
    detail::write_file(ctx.out / "threshold.txt", os.str());
    if (ctx.console) *ctx.console << os.str();
    return t;
}

// ---------------------------------------------------------------------------
// evaluate

inline constexpr const char* kScoresFormat = "qimb-scores v1";

struct ScoresFile {
    std::map<std::string, std::string> header;
    std::vector<std::string> class_names;
    std::vector<std::size_t> labels;
    Matrix scores;
};

inline void write_scores(std::ostream& os, const Matrix& scores, const Dataset& d,
                         const std::map<std::string, std::string>& prov) {
    detail::put_header(os, kScoresFormat, prov);
    os << "row\tlabel";
    for (const auto& n : d.class_names) os << "\tscore:" << n;
    os << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        os << i << '\t' << d.class_names[d.labels[i]];
        for (double s : scores.row(i)) os << '\t' << format_double(s);
        os << '\n';
    }
}

inline ScoresFile read_scores(const std::string& path) {
    std::istringstream in(detail::read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != std::string("# ") + kScoresFormat)
        throw DataError(path + ": not a scores file");
    ScoresFile f;
    std::vector<double> flat;
    bool saw_columns = false;
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) f.header[line.substr(2, eq - 2)] = line.substr(eq + 1);
            continue;
        }
        const auto cells = split(line, '\t');
        if (!saw_columns) {
            saw_columns = true;
            for (std::size_t j = 2; j < cells.size(); ++j) f.class_names.push_back(cells[j].substr(6));
            continue;
        }
        if (cells.size() != f.class_names.size() + 2) throw DataError(path + ": malformed row '" + line + "'");
        const auto it = std::find(f.class_names.begin(), f.class_names.end(), cells[1]);
        if (it == f.class_names.end()) throw DataError(path + ": unknown label '" + cells[1] + "'");
        f.labels.push_back(static_cast<std::size_t>(it - f.class_names.begin()));
        for (std::size_t j = 2; j < cells.size(); ++j) {
            const auto v = parse_double(cells[j]);
            if (!v) throw DataError(path + ": bad score '" + cells[j] + "'");
            flat.push_back(*v);
        }
    }
    f.scores = Matrix(f.labels.size(), f.class_names.size(), std::move(flat));
    return f;
}

/// Scores data.test (or evaluate.data) with the trained model and writes
/// metrics.tsv, metrics.txt and scores.tsv.
inline MetricsReport cmd_evaluate(const CommandContext& ctx) {
    const Config& c = ctx.config;
    const std::filesystem::path model_dir = c.get("model.dir");
    const std::string test_path = c.get_or("evaluate.data", c.get_or("data.test", ""));
    if (test_path.empty()) throw UsageError("evaluate needs evaluate.data or data.test");
    const std::string threshold_path = c.get_or("threshold.file", "");
    const std::size_t draws = c.get_uint("evaluate.bootstrap", 1000);
    if (draws != 0 && draws < 100) throw UsageError("evaluate.bootstrap must be 0 or at least 100");
    detail::warn_unused(ctx);

    const ModelFile model = decode_model(detail::read_file(model_dir / "model.qimb"));
    const std::string model_hash = detail::file_hash(model_dir / "model.qimb");
    const Preprocessor prep = load_sidecar((model_dir / "preprocess.json").string());
    const Dataset test = prep.load(test_path);
    detail::check_model_input(model, test);
    std::optional<double> threshold;
    if (!threshold_path.empty()) {
        if (model.classes != 2) throw UsageError("a decision threshold applies to binary tasks only");
        const ThresholdRecord t = read_threshold(threshold_path);
        if (t.model_hash != model_hash) throw DataError("threshold record was tuned for a different model");
        threshold = t.threshold;
    }
    const Matrix scores = detail::score_model(model, test);

    MetricsReport rep = model.classes == 2 ? binary_report(scores, test.labels, threshold, draws, ctx.seed())
                                           : multiclass_report(scores, test.labels, test.class_names);
    auto prov = ctx.provenance();
    prov["test_hash"] = detail::file_hash(test_path);
    prov["model_hash"] = model_hash;
    for (const auto& [k, v] : prov) rep.header[k] = v;
    if (model.classes == 2) rep.header["bootstrap_draws"] = std::to_string(draws);

    std::ostringstream tsv, txt, sc;
    write_report_tsv(tsv, rep);
    write_report_text(txt, rep);
    write_scores(sc, scores, test, prov);
    detail::write_file(ctx.out / "metrics.tsv", tsv.str());
    detail::write_file(ctx.out / "metrics.txt", txt.str());
    detail::write_file(ctx.out / "scores.tsv", sc.str());
    if (ctx.console) *ctx.console << txt.str();
    return rep;
}

// ---------------------------------------------------------------------------
// compare

struct Comparison {
    std::vector<std::tuple<std::string, std::string, double, double>> rows;  // scope, metric, a, b
    std::optional<WilcoxonResult> wilcoxon;
    std::string paired_on;  // "positive_score", "true_class_score" or "none"
    std::string note;
};

/// Side-by-side metric deltas of two evaluation directories plus a Wilcoxon
/// signed-rank test on paired per-sample scores (positive-class score for
/// binary tasks, true-class score for multiclass tasks).
inline Comparison cmd_compare(const CommandContext& ctx) {
    const Config& c = ctx.config;
    const std::filesystem::path a_dir = c.get("compare.a");
    const std::filesystem::path b_dir = c.get("compare.b");
    detail::warn_unused(ctx);

    auto load_report = [](const std::filesystem::path& dir) {
        std::istringstream in(detail::read_file(dir / "metrics.tsv"));
        return read_report_tsv(in, (dir / "metrics.tsv").string());
    };
    const MetricsReport ra = load_report(a_dir), rb = load_report(b_dir);
    const std::string ha = ra.header.count("test_hash") ? ra.header.at("test_hash") : "";
    const std::string hb = rb.header.count("test_hash") ? rb.header.at("test_hash") : "";
    if (ha.empty() || ha != hb) throw DataError("reports were computed on different test sets (test_hash mismatch)");

    Comparison cmp;
    for (const auto& r : ra.rows) {
        const auto other = rb.find(r.scope, r.metric);
        cmp.rows.emplace_back(r.scope, r.metric, r.value, other.value_or(std::nan("")));
    }

    const bool have_scores =
        std::filesystem::exists(a_dir / "scores.tsv") && std::filesystem::exists(b_dir / "scores.tsv");
    cmp.paired_on = "none";
    if (!have_scores) {
        cmp.note = "paired scores missing; metrics-only comparison";
    } else {
        const ScoresFile sa = read_scores((a_dir / "scores.tsv").string());
        const ScoresFile sb = read_scores((b_dir / "scores.tsv").string());
        if (sa.labels != sb.labels || sa.class_names != sb.class_names)
            throw DataError("paired score files disagree on rows or labels");
        const bool binary = sa.class_names.size() == 2;
        Vector xa(sa.labels.size()), xb(sb.labels.size());
        for (std::size_t i = 0; i < sa.labels.size(); ++i) {
            const std::size_t col = binary ? 1 : sa.labels[i];
            xa[i] = sa.scores(i, col);
            xb[i] = sb.scores(i, col);
        }
        cmp.paired_on = binary ? "positive_score" : "true_class_score";
        try {
            cmp.wilcoxon = wilcoxon_signed_rank(xa, xb);
        } catch (const InvalidArgument& e) {
            cmp.note = std::string("no difference: ") + e.what();
        }
    }

    auto prov = ctx.provenance();
    prov["test_hash"] = ha;
    prov["paired"] = cmp.paired_on;
    if (cmp.wilcoxon) {
        prov["wilcoxon_statistic"] = format_double(cmp.wilcoxon->statistic);
        prov["wilcoxon_p_value"] = format_double(cmp.wilcoxon->p_value);
        prov["wilcoxon_n"] = std::to_string(cmp.wilcoxon->n);
        prov["wilcoxon_exact"] = cmp.wilcoxon->exact ? "true" : "false";
    }
    if (!cmp.note.empty()) prov["note"] = cmp.note;

    std::ostringstream tsv, txt;
    detail::put_header(tsv, "qimb-comparison v1", prov);
    tsv << "scope\tmetric\ta\tb\tdelta\n";
    txt << "Comparison of " << a_dir.string() << " (a) and " << b_dir.string() << " (b)\n";
    for (const auto& [k, v] : prov) txt << "  " << k << ": " << v << '\n';
    txt << '\n';
    for (const auto& [scope, metric, a, b] : cmp.rows) {
        tsv << scope << '\t' << metric << '\t' << format_double(a) << '\t' << format_double(b) << '\t'
            << format_double(a - b) << '\n';
        txt << scope << "  " << metric << "  " << format_fixed(a) << "  " << format_fixed(b) << "  "
            << format_fixed(a - b) << '\n';
    }
    detail::write_file(ctx.out / "comparison.tsv", tsv.str());
    detail::write_file(ctx.out / "comparison.txt", txt.str());
    if (ctx.console) *ctx.console << txt.str();
    return cmp;
}

}  // namespace qimb
