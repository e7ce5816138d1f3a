#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "cfaug/corpus.hpp"
#include "cfaug/error.hpp"
#include "cfaug/hashing.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

// Bag-of-embeddings aspect classifier: mean-pooled sentence and aspect
// vectors concatenated, one tanh hidden layer, softmax over 3 classes.
struct ModelParams {
    int d = 0;  // embedding width
    int h = 0;  // hidden width
    std::vector<Vec> E;   // vocab_size x d
    std::vector<Vec> W1;  // 2d x h
    Vec b1;               // h
    std::vector<Vec> W2;  // h x 3
    Vec b2;               // 3

    size_t vocab_size() const { return E.size(); }

    bool operator==(const ModelParams&) const = default;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    // Plain gradient descent; the uniform(-0.1, 0.1) init leaves mean-pooled
    // activations tiny, so a rate this size is what escapes the initial
    // plateau (diverges around 5).
    double learning_rate = 2.0;
    std::uint64_t seed = 1;
    double l2 = 1e-5;
    int d = 64;
    int h = 64;

    bool operator==(const TrainConfig&) const = default;
};

// Embedded view of one encoded sample. The vectors are copies, so they
// can be perturbed freely (interpolation paths, finite differences).
struct EmbeddedInput {
    std::vector<Vec> sentence;
    std::vector<Vec> aspect;
    EncodedSample origin;
};

struct InputGradient {
    std::vector<Vec> sentence;
    std::vector<Vec> aspect;
};

inline EmbeddedInput embed(const ModelParams& params, const EncodedSample& enc) {
    size_t expect = static_cast<size_t>(enc.sentence_len) + 1 + enc.aspect_positions.size();
    if (enc.ids.size() != expect)
        throw std::invalid_argument("encoded sample has inconsistent layout");
    if (enc.sentence_len <= 0 || enc.aspect_positions.empty())
        throw std::invalid_argument("encoded sample needs a sentence and an aspect");
    EmbeddedInput in;
    in.origin = enc;
    for (int t = 0; t < enc.sentence_len; ++t) {
        int id = enc.ids[static_cast<size_t>(t)];
        if (id < 0 || static_cast<size_t>(id) >= params.E.size())
            throw std::invalid_argument("token id out of embedding range: " + std::to_string(id));
        in.sentence.push_back(params.E[static_cast<size_t>(id)]);
    }
    for (size_t k = 0; k < enc.aspect_positions.size(); ++k) {
        int id = enc.ids[static_cast<size_t>(enc.sentence_len) + 1 + k];
        if (id < 0 || static_cast<size_t>(id) >= params.E.size())
            throw std::invalid_argument("token id out of embedding range: " + std::to_string(id));
        in.aspect.push_back(params.E[static_cast<size_t>(id)]);
    }
    return in;
}

namespace detail {

struct Activations {
    Vec u;    // 2d pooled concat
    Vec hid;  // h, after tanh
    std::array<double, 3> probs{};
};

inline void check_shapes(const ModelParams& p, const EmbeddedInput& in) {
    if (in.sentence.empty() || in.aspect.empty())
        throw std::invalid_argument("forward: empty sentence or aspect");
    for (const Vec& v : in.sentence)
        if (static_cast<int>(v.size()) != p.d) throw std::invalid_argument("forward: sentence width mismatch");
    for (const Vec& v : in.aspect)
        if (static_cast<int>(v.size()) != p.d) throw std::invalid_argument("forward: aspect width mismatch");
    if (static_cast<int>(p.W1.size()) != 2 * p.d || static_cast<int>(p.b1.size()) != p.h ||
        static_cast<int>(p.W2.size()) != p.h || p.b2.size() != 3)
        throw std::invalid_argument("forward: parameter shape mismatch");
}

inline Activations run_forward(const ModelParams& p, const EmbeddedInput& in) {
    check_shapes(p, in);
    const size_t d = static_cast<size_t>(p.d);
    Activations act;
    act.u.assign(2 * d, 0.0);
    for (const Vec& v : in.sentence)
        for (size_t i = 0; i < d; ++i) act.u[i] += v[i];
    for (size_t i = 0; i < d; ++i) act.u[i] /= static_cast<double>(in.sentence.size());
    for (const Vec& v : in.aspect)
        for (size_t i = 0; i < d; ++i) act.u[d + i] += v[i];
    for (size_t i = 0; i < d; ++i) act.u[d + i] /= static_cast<double>(in.aspect.size());

    act.hid.assign(static_cast<size_t>(p.h), 0.0);
    for (size_t j = 0; j < act.hid.size(); ++j) {
        double z = p.b1[j];
        for (size_t i = 0; i < 2 * d; ++i) z += p.W1[i][j] * act.u[i];
        act.hid[j] = std::tanh(z);
    }
    std::array<double, 3> logits{};
    for (int k = 0; k < 3; ++k) {
        double z = p.b2[static_cast<size_t>(k)];
        for (size_t j = 0; j < act.hid.size(); ++j) z += p.W2[j][static_cast<size_t>(k)] * act.hid[j];
        logits[static_cast<size_t>(k)] = z;
    }
    double mx = std::max({logits[0], logits[1], logits[2]});
    double denom = 0.0;
    for (int k = 0; k < 3; ++k) denom += std::exp(logits[static_cast<size_t>(k)] - mx);
    for (int k = 0; k < 3; ++k) act.probs[static_cast<size_t>(k)] = std::exp(logits[static_cast<size_t>(k)] - mx) / denom;
    return act;
}

}  // namespace detail

inline std::array<double, 3> forward(const ModelParams& params, const EmbeddedInput& in) {
    return detail::run_forward(params, in).probs;
}

// Gradient of the class_index softmax probability with respect to every
// input vector. Mean pooling makes the per-position gradients equal
// within the sentence (scaled by 1/n) and within the aspect.
inline InputGradient grad_wrt_input(const ModelParams& params, const EmbeddedInput& in, int class_index) {
    if (class_index < 0 || class_index > 2)
        throw std::invalid_argument("grad_wrt_input: class index out of range");
    detail::Activations act = detail::run_forward(params, in);
    const size_t d = static_cast<size_t>(params.d);
    const auto& p = act.probs;
    std::array<double, 3> dz{};
    for (int c = 0; c < 3; ++c)
        dz[static_cast<size_t>(c)] =
            p[static_cast<size_t>(class_index)] * ((c == class_index ? 1.0 : 0.0) - p[static_cast<size_t>(c)]);
    Vec dt(act.hid.size());
    for (size_t j = 0; j < act.hid.size(); ++j) {
        double dh = 0.0;
        for (int c = 0; c < 3; ++c) dh += params.W2[j][static_cast<size_t>(c)] * dz[static_cast<size_t>(c)];
        dt[j] = (1.0 - act.hid[j] * act.hid[j]) * dh;
    }
    Vec du(2 * d, 0.0);
    for (size_t i = 0; i < 2 * d; ++i) {
        double g = 0.0;
        for (size_t j = 0; j < dt.size(); ++j) g += params.W1[i][j] * dt[j];
        du[i] = g;
    }
    InputGradient grad;
    Vec ds(d), da(d);
    for (size_t i = 0; i < d; ++i) ds[i] = du[i] / static_cast<double>(in.sentence.size());
    for (size_t i = 0; i < d; ++i) da[i] = du[d + i] / static_cast<double>(in.aspect.size());
    grad.sentence.assign(in.sentence.size(), ds);
    grad.aspect.assign(in.aspect.size(), da);
    return grad;
}

// Class-balanced cross entropy: each sample is weighted by
// 1 - count(label)/total over the supplied batch counts, averaged over
// the batch. Probabilities are clamped at 1e-12 before the log.
inline double balanced_ce(const std::vector<std::array<double, 3>>& probs, const std::vector<Polarity>& labels,
                          const std::array<int, 3>& counts) {
    if (probs.empty() || probs.size() != labels.size())
        throw std::invalid_argument("balanced_ce: batch is empty or misaligned");
    double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
    if (total <= 0.0) throw std::invalid_argument("balanced_ce: counts must sum to a positive total");
    double loss = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        size_t y = static_cast<size_t>(code(labels[i]));
        double w = 1.0 - static_cast<double>(counts[y]) / total;
        double p = std::max(probs[i][y], 1e-12);
        loss += w * -std::log(p);
    }
    return loss / static_cast<double>(probs.size());
}

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_history;  // per-epoch mean weighted loss
};

inline TrainResult train(const Dataset& ds, const Vocab& vocab, const TrainConfig& cfg) {
    if (ds.samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.d <= 0 || cfg.h <= 0 || cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.learning_rate <= 0.0)
        throw std::invalid_argument("train: bad training configuration");

    const size_t d = static_cast<size_t>(cfg.d);
    const size_t h = static_cast<size_t>(cfg.h);
    ModelParams p;
    p.d = cfg.d;
    p.h = cfg.h;
    Rng init = derive_rng(cfg.seed, "init");
    auto uniform_vec = [&](size_t n) {
        Vec v(n);
        for (double& x : v) x = init.real(-0.1, 0.1);
        return v;
    };
    p.E.reserve(vocab.size());
    for (size_t r = 0; r < vocab.size(); ++r) p.E.push_back(uniform_vec(d));
    for (size_t r = 0; r < 2 * d; ++r) p.W1.push_back(uniform_vec(h));
    p.b1 = uniform_vec(h);
    for (size_t r = 0; r < h; ++r) p.W2.push_back(uniform_vec(3));
    p.b2 = uniform_vec(3);

    std::vector<EncodedSample> encoded;
    encoded.reserve(ds.samples.size());
    for (const Sample& s : ds.samples) encoded.push_back(encode(s, vocab));

    TrainResult result;
    const size_t n = ds.samples.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    std::vector<Vec> dW1(2 * d, Vec(h));
    std::vector<Vec> dW2(h, Vec(3));
    Vec db1(h), db2(3);
    std::unordered_map<int, Vec> dE;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuf = derive_rng(cfg.seed, "shuffle", epoch);
        shuf.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
            size_t stop = std::min(n, start + static_cast<size_t>(cfg.batch_size));
            double batch = static_cast<double>(stop - start);
            std::array<int, 3> counts{};
            for (size_t b = start; b < stop; ++b)
                ++counts[static_cast<size_t>(code(ds.samples[order[b]].label))];
            double total = static_cast<double>(counts[0] + counts[1] + counts[2]);

            for (auto& row : dW1) std::fill(row.begin(), row.end(), 0.0);
            for (auto& row : dW2) std::fill(row.begin(), row.end(), 0.0);
            std::fill(db1.begin(), db1.end(), 0.0);
            std::fill(db2.begin(), db2.end(), 0.0);
            dE.clear();

            for (size_t b = start; b < stop; ++b) {
                const Sample& s = ds.samples[order[b]];
                const EncodedSample& enc = encoded[order[b]];
                EmbeddedInput in = embed(p, enc);
                detail::Activations act = detail::run_forward(p, in);
                size_t y = static_cast<size_t>(code(s.label));
                double w = 1.0 - static_cast<double>(counts[y]) / total;
                epoch_loss += w * -std::log(std::max(act.probs[y], 1e-12));

                std::array<double, 3> dz{};
                for (size_t c = 0; c < 3; ++c) dz[c] = w * (act.probs[c] - (c == y ? 1.0 : 0.0));
                for (size_t j = 0; j < h; ++j)
                    for (size_t c = 0; c < 3; ++c) dW2[j][c] += act.hid[j] * dz[c];
                for (size_t c = 0; c < 3; ++c) db2[c] += dz[c];
                Vec dt(h);
                for (size_t j = 0; j < h; ++j) {
                    double dh = 0.0;
                    for (size_t c = 0; c < 3; ++c) dh += p.W2[j][c] * dz[c];
                    dt[j] = (1.0 - act.hid[j] * act.hid[j]) * dh;
                }
                for (size_t i = 0; i < 2 * d; ++i) {
                    for (size_t j = 0; j < h; ++j) dW1[i][j] += act.u[i] * dt[j];
                }
                for (size_t j = 0; j < h; ++j) db1[j] += dt[j];
                Vec du(2 * d, 0.0);
                for (size_t i = 0; i < 2 * d; ++i) {
                    double g = 0.0;
                    for (size_t j = 0; j < h; ++j) g += p.W1[i][j] * dt[j];
                    du[i] = g;
                }
                double ns = static_cast<double>(in.sentence.size());
                double na = static_cast<double>(in.aspect.size());
                for (int t = 0; t < enc.sentence_len; ++t) {
                    Vec& row = dE.try_emplace(enc.ids[static_cast<size_t>(t)], Vec(d)).first->second;
                    for (size_t i = 0; i < d; ++i) row[i] += du[i] / ns;
                }
                for (size_t k = 0; k < enc.aspect_positions.size(); ++k) {
                    int id = enc.ids[static_cast<size_t>(enc.sentence_len) + 1 + k];
                    Vec& row = dE.try_emplace(id, Vec(d)).first->second;
                    for (size_t i = 0; i < d; ++i) row[i] += du[d + i] / na;
                }
            }

            // p <- p(1 - lr*l2) - lr*grad/B; biases are not decayed.
            double lr = cfg.learning_rate;
            double keep = 1.0 - lr * cfg.l2;
            for (auto& row : p.E)
                for (double& x : row) x *= keep;
            for (const auto& [id, g] : dE) {
                Vec& row = p.E[static_cast<size_t>(id)];
                for (size_t i = 0; i < d; ++i) row[i] -= lr * g[i] / batch;
            }
            for (size_t i = 0; i < 2 * d; ++i)
                for (size_t j = 0; j < h; ++j) p.W1[i][j] = p.W1[i][j] * keep - lr * dW1[i][j] / batch;
            for (size_t j = 0; j < h; ++j) db1[j] /= batch;
            for (size_t j = 0; j < h; ++j) p.b1[j] -= lr * db1[j];
            for (size_t j = 0; j < h; ++j)
                for (size_t c = 0; c < 3; ++c) p.W2[j][c] = p.W2[j][c] * keep - lr * dW2[j][c] / batch;
            for (size_t c = 0; c < 3; ++c) p.b2[c] -= lr * db2[c] / batch;
        }
        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss))
            throw Error("training diverged at epoch " + std::to_string(epoch) +
                        " (non-finite loss); lower the learning rate");
        result.loss_history.push_back(epoch_loss);
    }
    result.params = std::move(p);
    return result;
}

inline std::array<double, 3> predict(const ModelParams& params, const Vocab& vocab, const Sample& s) {
    return forward(params, embed(params, encode(s, vocab)));
}

// ---------------------------------------------------------------------------
// Checkpoint file: "CFAUG" magic, one version byte, u64 payload length,
// little-endian payload (vocab, dims, weights, train config, final loss),
// trailing CRC-32 of the payload.
// ---------------------------------------------------------------------------

struct Checkpoint {
    ModelParams params;
    Vocab vocab;
    TrainConfig config;
    double final_loss = 0.0;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}
inline void put_matrix(std::string& out, const std::vector<Vec>& m) {
    put_u32(out, static_cast<std::uint32_t>(m.size()));
    put_u32(out, m.empty() ? 0 : static_cast<std::uint32_t>(m[0].size()));
    for (const Vec& row : m)
        for (double x : row) put_f64(out, x);
}
inline void put_vec(std::string& out, const Vec& v) {
    put_u32(out, static_cast<std::uint32_t>(v.size()));
    for (double x : v) put_f64(out, x);
}

class ByteReader {
  public:
    ByteReader(const std::string& data, size_t pos, size_t end) : data_(data), pos_(pos), end_(end) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data_[pos_ + static_cast<size_t>(i)]);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data_[pos_ + static_cast<size_t>(i)]);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        std::uint32_t len = u32();
        need(len);
        std::string s = data_.substr(pos_, len);
        pos_ += len;
        return s;
    }
    std::vector<Vec> matrix() {
        std::uint32_t rows = u32(), cols = u32();
        std::vector<Vec> m(rows, Vec(cols));
        for (auto& row : m)
            for (double& x : row) x = f64();
        return m;
    }
    Vec vec() {
        std::uint32_t n = u32();
        Vec v(n);
        for (double& x : v) x = f64();
        return v;
    }

  private:
    void need(size_t n) {
        if (pos_ + n > end_) throw CheckpointTruncatedError("checkpoint payload ends unexpectedly");
    }
    const std::string& data_;
    size_t pos_;
    size_t end_;
};

}  // namespace detail

inline constexpr char kCheckpointMagic[] = "CFAUG";
inline constexpr unsigned char kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ModelParams& params, const Vocab& vocab,
                            const TrainConfig& config, double final_loss) {
    std::string payload;
    detail::put_u32(payload, static_cast<std::uint32_t>(vocab.size()));
    for (const std::string& t : vocab.tokens()) detail::put_str(payload, t);
    detail::put_u32(payload, Vocab::kPad);
    detail::put_u32(payload, Vocab::kSep);
    detail::put_u32(payload, Vocab::kMask);
    detail::put_u32(payload, Vocab::kUnk);
    detail::put_u32(payload, static_cast<std::uint32_t>(params.d));
    detail::put_u32(payload, static_cast<std::uint32_t>(params.h));
    detail::put_matrix(payload, params.E);
    detail::put_matrix(payload, params.W1);
    detail::put_vec(payload, params.b1);
    detail::put_matrix(payload, params.W2);
    detail::put_vec(payload, params.b2);
    detail::put_u32(payload, static_cast<std::uint32_t>(config.epochs));
    detail::put_u32(payload, static_cast<std::uint32_t>(config.batch_size));
    detail::put_f64(payload, config.learning_rate);
    detail::put_u64(payload, config.seed);
    detail::put_f64(payload, config.l2);
    detail::put_f64(payload, final_loss);

    std::string file;
    file += kCheckpointMagic;
    file.push_back(static_cast<char>(kCheckpointVersion));
    detail::put_u64(file, payload.size());
    file += payload;
    detail::put_u32(file, crc32(payload));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw Error("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const size_t magic_len = 5;
    if (data.size() < magic_len + 1 + 8) throw CheckpointTruncatedError("checkpoint too short: " + path);
    if (data.compare(0, magic_len, kCheckpointMagic) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    unsigned char version = static_cast<unsigned char>(data[magic_len]);
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) + " in " + path);

    detail::ByteReader header(data, magic_len + 1, data.size());
    std::uint64_t payload_len = header.u64();
    size_t payload_start = magic_len + 1 + 8;
    if (payload_start + payload_len + 4 > data.size())
        throw CheckpointTruncatedError("checkpoint truncated: " + path);
    std::string_view payload(data.data() + payload_start, payload_len);
    detail::ByteReader tail(data, payload_start + payload_len, data.size());
    std::uint32_t stored_crc = tail.u32();
    if (crc32(payload) != stored_crc) throw CheckpointChecksumError("checkpoint checksum mismatch: " + path);

    detail::ByteReader r(data, payload_start, payload_start + payload_len);
    Checkpoint ck;
    std::uint32_t vocab_count = r.u32();
    std::vector<std::string> tokens(vocab_count);
    for (auto& t : tokens) t = r.str();
    std::array<std::uint32_t, 4> specials{r.u32(), r.u32(), r.u32(), r.u32()};
    if (vocab_count < 4 || specials != std::array<std::uint32_t, 4>{0, 1, 2, 3} ||
        tokens[0] != "[PAD]" || tokens[1] != "[SEP]" || tokens[2] != "[MASK]" || tokens[3] != "[UNK]")
        throw CheckpointError("checkpoint vocab layout is invalid: " + path);
    for (size_t i = 4; i < tokens.size(); ++i) ck.vocab.add(tokens[i]);
    ck.params.d = static_cast<int>(r.u32());
    ck.params.h = static_cast<int>(r.u32());
    ck.params.E = r.matrix();
    ck.params.W1 = r.matrix();
    ck.params.b1 = r.vec();
    ck.params.W2 = r.matrix();
    ck.params.b2 = r.vec();
    ck.config.epochs = static_cast<int>(r.u32());
    ck.config.batch_size = static_cast<int>(r.u32());
    ck.config.learning_rate = r.f64();
    ck.config.seed = r.u64();
    ck.config.l2 = r.f64();
    ck.config.d = ck.params.d;
    ck.config.h = ck.params.h;
    ck.final_loss = r.f64();
    if (ck.params.E.size() != ck.vocab.size())
        throw CheckpointError("checkpoint embedding table does not match vocab: " + path);
    return ck;
}

}  // namespace cfaug
