#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "qimb/baselines.hpp"
#include "qimb/config.hpp"
#include "qimb/model_io.hpp"
#include "qimb/preprocess.hpp"
#include "qimb/report.hpp"

using namespace qimb;

namespace {

DuelingParams some_q(Aggregator agg) {
    Rng rng(1);
    return DuelingParams::create(NetworkShape{5, {7, 4}, 3, agg, 0.2}, rng);
}

bool bit_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(ModelIo, DuelingRoundTripIsBitExact) {
    for (Aggregator agg : {Aggregator::softmax_subtract, Aggregator::mean_subtract, Aggregator::single_stream}) {
        const DuelingParams p = some_q(agg);
        const std::string bytes = encode_model(to_model_file(p, "seed=1"));
        const ModelFile f = decode_model(bytes);
        EXPECT_EQ(f.provenance, "seed=1");
        const DuelingParams q = to_dueling(f);
        EXPECT_TRUE(p == q);
        for (std::size_t i = 0; i < p.trunk.size(); ++i) {
            const Vector a(p.trunk[i].weights.data().begin(), p.trunk[i].weights.data().end());
            const Vector b(q.trunk[i].weights.data().begin(), q.trunk[i].weights.data().end());
            EXPECT_TRUE(bit_equal(a, b));
        }
        EXPECT_EQ(encode_model(to_model_file(q, "seed=1")), bytes);
    }
}

TEST(ModelIo, MlpRoundTrip) {
    Rng rng(2);
    const MlpModel m = make_mlp(4, 3, {6}, 0.25, rng);
    const MlpModel back = to_mlp(decode_model(encode_model(to_model_file(m))));
    EXPECT_TRUE(m == back);
    EXPECT_THROW(to_dueling(to_model_file(m)), DataError);
    EXPECT_THROW(to_mlp(to_model_file(some_q(Aggregator::softmax_subtract))), DataError);
}

TEST(ModelIo, CorruptFilesRejected) {
    const std::string bytes = encode_model(to_model_file(some_q(Aggregator::softmax_subtract)));
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1})
        EXPECT_THROW(decode_model(std::string_view(bytes).substr(0, cut)), DataError) << cut;
    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_model(bad), DataError);
    EXPECT_THROW(decode_model(bytes + "z"), DataError);
    std::string kind = bytes;
    kind[8] = 7;
    EXPECT_THROW(decode_model(kind), DataError);
    EXPECT_THROW(load_model("/nonexistent/model.qimb"), DataError);
}

TEST(Config, ParseSectionsAndTypes) {
    std::istringstream in(
        "seed = 7   # trailing comment\n"
        "method = q-imb\n"
        "[qlearn]\n"
        "gamma = 0.5\n"
        "hidden = 64, 32\n"
        "early_stop = yes\n"
        "\n"
        "[synthetic]\n"
        "prevalences = 0.9,0.1\n");
    Config c = Config::parse(in);
    EXPECT_EQ(c.get_uint("seed"), 7u);
    EXPECT_EQ(c.get("method"), "q-imb");
    EXPECT_EQ(c.get_double("qlearn.gamma"), 0.5);
    EXPECT_EQ(c.get_uints("qlearn.hidden"), (std::vector<std::uint64_t>{64, 32}));
    EXPECT_TRUE(c.get_bool("qlearn.early_stop"));
    EXPECT_EQ(c.get_doubles("synthetic.prevalences"), (Vector{0.9, 0.1}));
    EXPECT_EQ(c.get_double("qlearn.missing", 3.0), 3.0);
    EXPECT_TRUE(c.unused_keys().empty());
}

TEST(Config, OverridesAndHash) {
    std::istringstream in("[qlearn]\ngamma = 0.5\n");
    Config a = Config::parse(in);
    const std::string h = a.hash();
    a.apply_override("qlearn.gamma=0.25");
    EXPECT_EQ(a.get_double("qlearn.gamma"), 0.25);
    EXPECT_NE(a.hash(), h);
    Config b;
    b.set("qlearn.gamma", "0.25");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_THROW(a.apply_override("novalue"), UsageError);
    EXPECT_THROW(a.apply_override("=3"), UsageError);
}

TEST(Config, Errors) {
    {
        std::istringstream in("[broken\n");
        EXPECT_THROW(Config::parse(in), UsageError);
    }
    {
        std::istringstream in("just words\n");
        EXPECT_THROW(Config::parse(in), UsageError);
    }
    Config c;
    c.set("x", "abc");
    c.set("y", "-3");
    c.set("z", "maybe");
    EXPECT_THROW(c.get_double("x"), UsageError);
    EXPECT_THROW(c.get_uint("y"), UsageError);
    EXPECT_THROW(c.get_bool("z"), UsageError);
    EXPECT_THROW(c.get("absent"), UsageError);
    Config unused;
    unused.set("qlearn.gamam", "0.9");
    EXPECT_EQ(unused.unused_keys(), (std::vector<std::string>{"qlearn.gamam"}));
    EXPECT_THROW(Config::load("/nonexistent.cfg"), UsageError);
}

TEST(Report, TsvRoundTrip) {
    Matrix scores(40, 2);
    std::vector<std::size_t> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        y[i] = i % 4 == 0;
        scores(i, 1) = (i % 7) / 7.0 + 0.3 * y[i];
        scores(i, 0) = 1 - scores(i, 1);
    }
    MetricsReport rep = binary_report(scores, y, 0.5, 200, 3);
    rep.header["seed"] = "3";
    ASSERT_EQ(rep.rows.size(), 5u);
    std::stringstream ss;
    write_report_tsv(ss, rep);
    const MetricsReport back = read_report_tsv(ss);
    EXPECT_EQ(back.header, rep.header);
    ASSERT_EQ(back.rows.size(), rep.rows.size());
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].metric, rep.rows[i].metric);
        EXPECT_EQ(back.rows[i].value, rep.rows[i].value);
        ASSERT_EQ(back.rows[i].ci.has_value(), rep.rows[i].ci.has_value());
        if (rep.rows[i].ci) EXPECT_EQ(back.rows[i].ci->low, rep.rows[i].ci->low);
    }
    std::istringstream junk("hello\n");
    EXPECT_THROW(read_report_tsv(junk), DataError);
}

TEST(Report, UndefinedScoresWrittenAsNan) {
    Matrix scores(4, 2);
    for (std::size_t i = 0; i < 4; ++i) scores(i, 0) = 1.0;  // never predicts positive
    const std::vector<std::size_t> y{1, 0, 1, 0};
    const auto rep = binary_report(scores, y, std::nullopt, 0, 1);
    EXPECT_TRUE(std::isnan(*rep.find("positive", "f_measure")));
    std::stringstream ss;
    write_report_tsv(ss, rep);
    EXPECT_NE(ss.str().find("f_measure\tnan\tnan\tnan"), std::string::npos);
}

TEST(Sidecar, RoundTrip) {
    std::istringstream in("c,x,y,label\nr,1,,a\ng,2,5,b\nr,4,6,a\n");
    CsvSchema s;
    s.categorical_columns = {"c"};
    auto load = load_csv(in, s);
    const Preprocessor p = fit_preprocessor(load.schema, load.data, true, true);
    const std::string text = sidecar_json(p, {{"seed", "1"}});
    const Preprocessor q = parse_sidecar(text);
    EXPECT_EQ(q.schema.categories, p.schema.categories);
    EXPECT_EQ(q.schema.class_names, p.schema.class_names);
    EXPECT_EQ(q.input_features, p.input_features);
    EXPECT_EQ(q.impute->medians, p.impute->medians);
    EXPECT_EQ(q.scaler->mean, p.scaler->mean);
    EXPECT_EQ(q.scaler->sd, p.scaler->sd);
    EXPECT_EQ(q.scaler->kept, p.scaler->kept);
    EXPECT_EQ(sidecar_json(q, {{"seed", "1"}}), text);
    EXPECT_THROW(parse_sidecar("{not json"), DataError);
    EXPECT_THROW(parse_sidecar(R"({"format":"other"})"), DataError);
}
