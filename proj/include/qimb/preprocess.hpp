#pragma once

// Fitted preprocessing (load schema, median imputation, standardization) and
// its JSON sidecar, so evaluation data goes through exactly the transform
// the model was trained on.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qimb/data.hpp"

namespace qimb {

inline constexpr const char* kSidecarFormat = "qimb-preprocess v1";

struct Preprocessor {
    CsvSchema schema;
    std::vector<std::string> input_features;  // feature names after one-hot expansion
    std::optional<ImputeStats> impute;
    std::optional<ScalerStats> scaler;

    /// Imputes and scales in place.
    void apply(Dataset& d) const {
        if (d.feature_names != input_features) throw DataError("dataset features do not match the fitted schema");
        if (impute) apply_impute(*impute, d);
        else if (d.has_missing()) throw DataError("dataset has missing values and imputation is disabled");
        if (scaler) apply_scaler(*scaler, d);
    }

    Dataset load(const std::string& path) const {
        CsvSchema s = schema;
        Dataset d = load_csv(path, s).data;
        apply(d);
        return d;
    }
};

/// Fits on `train` (already loaded with `schema`) and transforms it in place.
inline Preprocessor fit_preprocessor(const CsvSchema& schema, Dataset& train, bool impute, bool scale) {
    Preprocessor p;
    p.schema = schema;
    p.input_features = train.feature_names;
    if (impute) p.impute = impute_median(train);
    else if (train.has_missing()) throw DataError("training data has missing values and imputation is disabled");
    if (scale) p.scaler = standardize(train);
    return p;
}

inline std::string sidecar_json(const Preprocessor& p, const std::map<std::string, std::string>& provenance) {
    using nlohmann::json;
    json j;
    j["format"] = kSidecarFormat;
    j["provenance"] = provenance;
    json s;
    s["label_column"] = p.schema.label_column;
    s["feature_columns"] = p.schema.feature_columns;
    s["categorical_columns"] = p.schema.categorical_columns;
    s["categories"] = p.schema.categories;
    s["missing_token"] = p.schema.missing_token;
    s["delimiter"] = std::string(1, p.schema.delimiter);
    s["class_names"] = p.schema.class_names;
    j["schema"] = s;
    j["input_features"] = p.input_features;
    j["impute"] = p.impute ? json(p.impute->medians) : json(nullptr);
    if (p.scaler) {
        j["scaler"] = {{"kept", p.scaler->kept},
                       {"mean", p.scaler->mean},
                       {"sd", p.scaler->sd},
                       {"dropped", p.scaler->dropped},
                       {"source_dims", p.scaler->source_dims}};
    } else {
        j["scaler"] = nullptr;
    }
    return j.dump(2) + "\n";
}

inline Preprocessor parse_sidecar(const std::string& text, const std::string& source = "<sidecar>") {
    using nlohmann::json;
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != kSidecarFormat)
            throw DataError(source + ": unsupported sidecar format");
        Preprocessor p;
        const json& s = j.at("schema");
        p.schema.label_column = s.at("label_column").get<std::string>();
        p.schema.feature_columns = s.at("feature_columns").get<std::vector<std::string>>();
        p.schema.categorical_columns = s.at("categorical_columns").get<std::vector<std::string>>();
        p.schema.categories = s.at("categories").get<std::map<std::string, std::vector<std::string>>>();
        p.schema.missing_token = s.at("missing_token").get<std::string>();
        const auto delim = s.at("delimiter").get<std::string>();
        if (delim.size() != 1) throw DataError(source + ": delimiter must be one character");
        p.schema.delimiter = delim[0];
        p.schema.class_names = s.at("class_names").get<std::vector<std::string>>();
        p.input_features = j.at("input_features").get<std::vector<std::string>>();
        if (!j.at("impute").is_null()) p.impute = ImputeStats{j.at("impute").get<Vector>()};
        if (!j.at("scaler").is_null()) {
            const json& c = j.at("scaler");
            ScalerStats st;
            st.kept = c.at("kept").get<std::vector<std::size_t>>();
            st.mean = c.at("mean").get<Vector>();
            st.sd = c.at("sd").get<Vector>();
            st.dropped = c.at("dropped").get<std::vector<std::string>>();
            st.source_dims = c.at("source_dims").get<std::size_t>();
            if (st.mean.size() != st.kept.size() || st.sd.size() != st.kept.size())
                throw DataError(source + ": scaler arrays disagree in length");
            p.scaler = st;
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(source + ": malformed sidecar (" + e.what() + ")");
    }
}

inline Preprocessor load_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_sidecar(ss.str(), path);
}

}  // namespace qimb
