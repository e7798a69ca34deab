#pragma once

// Flat binary model container shared by Q-networks and MLP baselines.
//
// All integers are unsigned 32-bit little-endian, all reals IEEE-754 64-bit
// little-endian:
//
//   magic            8 bytes  "QIMBNET1"
//   kind             u32      0 = Q-network, 1 = MLP
//   mode             u32      Q-network: aggregator (0 softmax-subtract,
//                             1 mean-subtract, 2 single-stream);
//                             MLP: output (0 sigmoid, 1 softmax)
//   classes          u32      action / class count K
//   layer_count      u32      L
//   keep_probability f64      dropout keep probability used in training
//   provenance_len   u32      followed by that many bytes of UTF-8 text
//   L x (in u32, out u32, activation u32)   activation: 0 identity, 1 relu
//   L x (weights out*in f64 row-major, bias out f64)
//
// Q-network layers are the trunk, then the value stream (out = 0 for
// single-stream heads), then the advantage stream. MLP layers are the hidden
// layers followed by the output layer.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qimb/baselines.hpp"
#include "qimb/duelnet.hpp"

namespace qimb {

enum class ModelKind : std::uint32_t { q_network = 0, mlp = 1 };

struct ModelFile {
    ModelKind kind = ModelKind::q_network;
    std::uint32_t mode = 0;
    std::uint32_t classes = 0;
    double keep_probability = 1.0;
    std::string provenance;
    std::vector<DenseLayer> layers;

    bool operator==(const ModelFile&) const = default;
};

inline constexpr char kModelMagic[8] = {'Q', 'I', 'M', 'B', 'N', 'E', 'T', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return std::bit_cast<double>(v);
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("model file is truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_model(const ModelFile& m) {
    std::string out(kModelMagic, sizeof kModelMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(m.kind));
    detail::put_u32(out, m.mode);
    detail::put_u32(out, m.classes);
    detail::put_u32(out, static_cast<std::uint32_t>(m.layers.size()));
    detail::put_f64(out, m.keep_probability);
    detail::put_u32(out, static_cast<std::uint32_t>(m.provenance.size()));
    out += m.provenance;
    for (const auto& l : m.layers) {
        detail::put_u32(out, static_cast<std::uint32_t>(l.in()));
        detail::put_u32(out, static_cast<std::uint32_t>(l.out()));
        detail::put_u32(out, static_cast<std::uint32_t>(l.activation));
    }
    for (const auto& l : m.layers) {
        for (double w : l.weights.data()) detail::put_f64(out, w);
        for (double b : l.bias) detail::put_f64(out, b);
    }
    return out;
}

inline ModelFile decode_model(std::string_view bytes) {
    detail::Reader r(bytes);
    if (r.take(sizeof kModelMagic) != std::string_view(kModelMagic, sizeof kModelMagic))
        throw DataError("not a model file (bad magic)");
    ModelFile m;
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw DataError("unknown model kind " + std::to_string(kind));
    m.kind = static_cast<ModelKind>(kind);
    m.mode = r.u32();
    m.classes = r.u32();
    const std::uint32_t n_layers = r.u32();
    m.keep_probability = r.f64();
    m.provenance = std::string(r.take(r.u32()));
    std::vector<std::uint32_t> shapes;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const std::uint32_t in = r.u32(), out = r.u32(), act = r.u32();
        if (act > 1) throw DataError("unknown activation code " + std::to_string(act));
        m.layers.push_back(DenseLayer{Matrix(out, in), Vector(out, 0.0), static_cast<Activation>(act)});
    }
    for (auto& l : m.layers) {
        for (double& w : l.weights.data()) w = r.f64();
        for (double& b : l.bias) b = r.f64();
    }
    if (!r.done()) throw DataError("model file has trailing bytes");
    return m;
}

inline ModelFile to_model_file(const DuelingParams& p, std::string provenance = {}) {
    ModelFile m;
    m.kind = ModelKind::q_network;
    m.mode = static_cast<std::uint32_t>(p.aggregator);
    m.classes = static_cast<std::uint32_t>(p.action_count());
    m.keep_probability = p.keep_probability;
    m.provenance = std::move(provenance);
    m.layers = p.trunk;
    m.layers.push_back(p.value);
    m.layers.push_back(p.advantage);
    return m;
}

inline DuelingParams to_dueling(const ModelFile& m) {
    if (m.kind != ModelKind::q_network) throw DataError("model file does not hold a Q-network");
    if (m.layers.size() < 2) throw DataError("Q-network file needs value and advantage layers");
    if (m.mode > 2) throw DataError("unknown aggregator code " + std::to_string(m.mode));
    DuelingParams p;
    p.aggregator = static_cast<Aggregator>(m.mode);
    p.keep_probability = m.keep_probability;
    p.trunk.assign(m.layers.begin(), m.layers.end() - 2);
    p.value = m.layers[m.layers.size() - 2];
    p.advantage = m.layers.back();
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("inconsistent Q-network file: ") + e.what());
    }
    if (p.action_count() != m.classes) throw DataError("Q-network file action count disagrees with its layers");
    return p;
}

inline ModelFile to_model_file(const MlpModel& mlp, std::string provenance = {}) {
    ModelFile m;
    m.kind = ModelKind::mlp;
    m.mode = static_cast<std::uint32_t>(mlp.kind);
    m.classes = static_cast<std::uint32_t>(mlp.class_count);
    m.keep_probability = mlp.keep_probability;
    m.provenance = std::move(provenance);
    m.layers = mlp.hidden;
    m.layers.push_back(mlp.output);
    return m;
}

inline MlpModel to_mlp(const ModelFile& m) {
    if (m.kind != ModelKind::mlp) throw DataError("model file does not hold an MLP");
    if (m.layers.empty() || m.mode > 1) throw DataError("malformed MLP model file");
    MlpModel mlp;
    mlp.kind = static_cast<OutputKind>(m.mode);
    mlp.class_count = m.classes;
    mlp.keep_probability = m.keep_probability;
    mlp.hidden.assign(m.layers.begin(), m.layers.end() - 1);
    mlp.output = m.layers.back();
    const std::size_t want_out = mlp.kind == OutputKind::sigmoid ? 1 : mlp.class_count;
    if (mlp.output.out() != want_out) throw DataError("MLP output layer width disagrees with its class count");
    return mlp;
}

inline void save_model(const std::string& path, const ModelFile& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    const std::string bytes = encode_model(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_model(ss.str());
}

}  // namespace qimb
