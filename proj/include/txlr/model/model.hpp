#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "txlr/model/config.hpp"
#include "txlr/numerics/ops.hpp"
#include "txlr/numerics/parameter.hpp"

namespace txlr::model {

/// Cached per-layer hidden states from earlier segments of one session.
/// For the LSTM baseline the cache is the recurrent state instead.
template <typename T>
struct SegmentMemory {
    std::vector<Tensor<T>> layers;  // TXL: input of layer l, at most memory_len rows
    Tensor<T> lstm_h, lstm_c;       // LSTM: [1 x d_model], empty before the first token
    std::size_t tokens_consumed = 0;

    std::size_t length() const { return layers.empty() ? 0 : layers.front().rows(); }

    friend bool operator==(const SegmentMemory&, const SegmentMemory&) = default;
};

template <typename T>
struct ForwardOutput {
    Var<T> word_logits;                 // [T x vocab]; row t predicts token t+1
    std::optional<Var<T>> slot_logits;  // [T x n_slot_classes]; row t classifies token t
    SegmentMemory<T> new_memory;
    Var<T> hidden_last;                 // [T x d_model], before fusion/conditioning
};

/// Fusion gate act([hidden_t ; e] W + b), with e broadcast over time.
template <typename T>
Var<T> fuse(const Var<T>& hidden, const Var<T>& embedding, const Var<T>& weight, const Var<T>& bias,
            Activation activation) {
    if (weight.rows() != hidden.cols() + embedding.value().size()) {
        throw ShapeError("fuse: shape mismatch " + shape_str(hidden.shape()) + " + " + shape_str(embedding.shape()) +
                         " vs weight " + shape_str(weight.shape()));
    }
    auto joined = ops::concat_cols(hidden, ops::repeat_rows(embedding, hidden.rows()));
    auto pre = ops::add_bias(ops::matmul(joined, weight), bias);
    switch (activation) {
        case Activation::sigmoid: return ops::sigmoid(pre);
        case Activation::tanh: return ops::tanh(pre);
        case Activation::relu: return ops::relu(pre);
    }
    return ops::sigmoid(pre);
}

/// Sinusoidal embeddings for relative distances 0..count-1.
template <typename T>
Tensor<T> relative_position_table(std::size_t count, std::size_t d_model) {
    Tensor<T> out = Tensor<T>::matrix(count, d_model);
    const std::size_t half = d_model / 2;
    for (std::size_t pos = 0; pos < count; ++pos) {
        for (std::size_t k = 0; k < half; ++k) {
            const double inv_freq = 1.0 / std::pow(10000.0, (2.0 * static_cast<double>(k)) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) * inv_freq;
            out.at(pos, k) = static_cast<T>(std::sin(angle));
            out.at(pos, half + k) = static_cast<T>(std::cos(angle));
        }
    }
    return out;
}

/// Transformer-XL decoder (or LSTM baseline) with optional slot-detection head
/// and domain-embedding fusion. Scalar type T is float for training and
/// double for gradient checking.
template <typename T>
class LanguageModel {
public:
    LanguageModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
        config_.validate();
        build(seed);
    }

    const ModelConfig& config() const noexcept { return config_; }
    ParameterSet<T>& params() noexcept { return params_; }
    const ParameterSet<T>& params() const noexcept { return params_; }

    SegmentMemory<T> empty_memory() const {
        SegmentMemory<T> m;
        if (config_.arch == Arch::txl) m.layers.assign(config_.n_layers, Tensor<T>({0, config_.d_model}));
        return m;
    }

    /// One segment with memory carried in. Memory is treated as constant:
    /// nothing flows back into it.
    ForwardOutput<T> forward_segment(const std::vector<int>& tokens, const SegmentMemory<T>& memory,
                                     std::span<const T> domain_embedding, bool train, Rng& rng) const {
        std::vector<Var<T>> mem;
        if (config_.arch == Arch::txl) {
            check_memory(memory);
            for (const auto& layer : memory.layers) mem.push_back(constant(layer));
        } else {
            if (!memory.lstm_h.empty()) {
                mem.push_back(constant(memory.lstm_h));
                mem.push_back(constant(memory.lstm_c));
            }
        }
        auto out = forward_with_memory_vars(tokens, mem, domain_embedding, train, rng);
        out.new_memory.tokens_consumed = memory.tokens_consumed + tokens.size();
        return out;
    }

    /// Same as forward_segment, with memory supplied as graph nodes (which may
    /// require grad). The stop-gradient boundary is applied here.
    ForwardOutput<T> forward_with_memory_vars(const std::vector<int>& tokens, const std::vector<Var<T>>& memory,
                                              std::span<const T> domain_embedding, bool train, Rng& rng) const {
        if (tokens.empty()) throw UsageError("forward_segment: empty segment");
        if (tokens.size() > config_.segment_len) {
            throw UsageError("forward_segment: segment of " + std::to_string(tokens.size()) +
                             " tokens exceeds segment_len " + std::to_string(config_.segment_len));
        }
        for (int id : tokens) {
            if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
                throw UsageError("forward_segment: token id " + std::to_string(id) + " outside vocabulary of " +
                                 std::to_string(config_.vocab_size));
            }
        }
        std::optional<Var<T>> embedding;
        if (config_.fusion.enabled) {
            if (domain_embedding.empty()) throw UsageError("forward_segment: fusion is on but no domain embedding given");
            if (domain_embedding.size() != config_.fusion.d_embed) {
                throw ShapeError("forward_segment: domain embedding has " + std::to_string(domain_embedding.size()) +
                                 " dims, fusion expects " + std::to_string(config_.fusion.d_embed));
            }
            embedding = constant(normalized(domain_embedding));
        }

        std::vector<Var<T>> detached;
        for (const auto& m : memory) detached.push_back(ops::stop_gradient(m));

        ForwardOutput<T> out;
        out.hidden_last = config_.arch == Arch::txl ? txl_trunk(tokens, detached, train, rng, out.new_memory)
                                                    : lstm_trunk(tokens, detached, train, rng, out.new_memory);
        Var<T> word_in = out.hidden_last;
        if (config_.slot_head.enabled) out.slot_logits = slot_head(out.hidden_last, train, rng);
        if (embedding) {
            word_in = fuse(word_in, *embedding, p("fusion.w"), p("fusion.b"), config_.fusion.activation);
        }
        if (config_.slot_head.enabled && config_.slot_head.conditioning) {
            word_in = ops::add(word_in, ops::matmul(*out.slot_logits, p("slot.cond.w")));
        }
        out.word_logits = ops::add_bias(ops::matmul(word_in, p("out.w")), p("out.b"));
        return out;
    }

    /// Position-wise MLP: (mlp_layers - 1) relu hidden layers, linear output.
    Var<T> slot_head(const Var<T>& hidden, bool train, Rng& rng) const {
        if (!config_.slot_head.enabled) throw UsageError("slot_head: slot head is disabled");
        Var<T> h = hidden;
        const std::size_t n = config_.slot_head.mlp_layers;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const std::string base = "slot.mlp" + std::to_string(i);
            h = ops::relu(ops::add_bias(ops::matmul(h, p(base + ".w")), p(base + ".b")));
            h = ops::dropout(h, config_.dropout, train, rng);
        }
        const std::string last = "slot.mlp" + std::to_string(n - 1);
        return ops::add_bias(ops::matmul(h, p(last + ".w")), p(last + ".b"));
    }

    const Var<T>& p(const std::string& name) const { return params_.get(name).var; }

private:
    static Tensor<T> normalized(std::span<const T> v) {
        double norm = 0.0;
        for (T x : v) norm += static_cast<double>(x) * static_cast<double>(x);
        norm = std::sqrt(norm);
        Tensor<T> out({1, v.size()});
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = norm > 0.0 ? static_cast<T>(v[i] / norm) : v[i];
        return out;
    }

    void check_memory(const SegmentMemory<T>& memory) const {
        if (memory.layers.size() != config_.n_layers) {
            throw UsageError("forward_segment: memory has " + std::to_string(memory.layers.size()) +
                             " layers, model has " + std::to_string(config_.n_layers));
        }
        for (const auto& l : memory.layers) {
            if (l.rows() != memory.layers.front().rows() || (l.rows() > 0 && l.cols() != config_.d_model)) {
                throw ShapeError("forward_segment: inconsistent memory shape " + shape_str(l.shape()));
            }
        }
    }

    void add_matrix(const std::string& name, std::size_t rows, std::size_t cols, std::uint64_t seed,
                    double stddev = 0.02) {
        Rng rng("init/" + name, seed);
        Tensor<T> t = Tensor<T>::matrix(rows, cols);
        for (auto& v : t.values()) v = static_cast<T>(rng.truncated_normal(stddev));
        params_.add(name, std::move(t));
    }
    void add_filled(const std::string& name, Shape shape, T value) { params_.add(name, Tensor<T>(std::move(shape), value)); }

    // Initialisation draws from a generator keyed by parameter name, so the
    // shared trunk is identical whichever optional heads are enabled.
    void build(std::uint64_t seed) {
        const std::size_t d = config_.d_model, V = config_.vocab_size;
        add_matrix("embed.word", V, d, seed);
        if (config_.arch == Arch::txl) {
            add_filled("txl.bias_u", {1, d}, T{0});
            add_filled("txl.bias_v", {1, d}, T{0});
            for (std::size_t l = 0; l < config_.n_layers; ++l) {
                const std::string b = "txl.layer" + std::to_string(l) + ".";
                for (const char* w : {"attn.w_q", "attn.w_k", "attn.w_v", "attn.w_r", "attn.w_o"}) {
                    add_matrix(b + w, d, d, seed);
                }
                add_filled(b + "ln1.gain", {d}, T{1});
                add_filled(b + "ln1.bias", {d}, T{0});
                add_matrix(b + "ff.w1", d, config_.d_ff, seed);
                add_filled(b + "ff.b1", {config_.d_ff}, T{0});
                add_matrix(b + "ff.w2", config_.d_ff, d, seed);
                add_filled(b + "ff.b2", {d}, T{0});
                add_filled(b + "ln2.gain", {d}, T{1});
                add_filled(b + "ln2.bias", {d}, T{0});
            }
        } else {
            add_matrix("lstm.w_x", d, 4 * d, seed);
            add_matrix("lstm.w_h", d, 4 * d, seed);
            add_filled("lstm.b", {4 * d}, T{0});
        }
        if (config_.slot_head.enabled) {
            const std::size_t n = config_.slot_head.mlp_layers, K = config_.n_slot_classes;
            for (std::size_t i = 0; i < n; ++i) {
                const std::string b = "slot.mlp" + std::to_string(i);
                const std::size_t out = i + 1 == n ? K : d;
                add_matrix(b + ".w", d, out, seed);
                add_filled(b + ".b", {out}, T{0});
            }
            if (config_.slot_head.conditioning) add_filled("slot.cond.w", {K, d}, T{0});
        }
        if (config_.fusion.enabled) {
            const std::size_t fan_in = d + config_.fusion.d_embed;
            add_matrix("fusion.w", fan_in, d, seed, 1.0 / std::sqrt(static_cast<double>(fan_in)));
            add_filled("fusion.b", {d}, T{0});
        }
        add_matrix("out.w", d, V, seed);
        add_filled("out.b", {V}, T{0});
    }

    Var<T> txl_trunk(const std::vector<int>& tokens, const std::vector<Var<T>>& memory, bool train, Rng& rng,
                     SegmentMemory<T>& new_memory) const {
        const std::size_t d = config_.d_model, H = config_.n_heads, dh = d / H;
        const std::size_t seg = tokens.size();
        const std::size_t mem_len = memory.empty() ? 0 : memory.front().rows();
        const std::size_t klen = mem_len + seg;
        const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

        Var<T> x = ops::scale(ops::embedding_lookup(p("embed.word"), tokens), static_cast<T>(std::sqrt(static_cast<double>(d))));
        x = ops::dropout(x, config_.dropout, train, rng);
        const Var<T> rel = constant(relative_position_table<T>(klen, d));

        new_memory.layers.clear();
        for (std::size_t l = 0; l < config_.n_layers; ++l) {
            const std::string b = "txl.layer" + std::to_string(l) + ".";
            new_memory.layers.push_back(updated_memory(mem_len ? memory[l].value() : Tensor<T>({0, d}), x.value()));

            const Var<T> context = mem_len ? ops::concat_rows(memory[l], x) : x;
            const Var<T> q = ops::matmul(x, p(b + "attn.w_q"));
            const Var<T> k = ops::matmul(context, p(b + "attn.w_k"));
            const Var<T> v = ops::matmul(context, p(b + "attn.w_v"));
            const Var<T> r = ops::matmul(rel, p(b + "attn.w_r"));

            Var<T> heads;
            for (std::size_t h = 0; h < H; ++h) {
                const Var<T> qh = ops::slice_cols(q, h * dh, dh);
                const Var<T> kh = ops::slice_cols(k, h * dh, dh);
                const Var<T> vh = ops::slice_cols(v, h * dh, dh);
                const Var<T> rh = ops::slice_cols(r, h * dh, dh);
                const Var<T> content = ops::matmul(ops::add_bias(qh, ops::slice_cols(p("txl.bias_u"), h * dh, dh)), kh, false, true);
                const Var<T> by_distance =
                    ops::matmul(ops::add_bias(qh, ops::slice_cols(p("txl.bias_v"), h * dh, dh)), rh, false, true);
                const Var<T> position = ops::relative_gather(by_distance, mem_len);
                Var<T> scores = ops::scale(ops::add(content, position), inv_sqrt_dh);
                scores = ops::causal_mask(scores, mem_len);
                const Var<T> attn = ops::softmax(scores);
                const Var<T> oh = ops::matmul(attn, vh);
                heads = h == 0 ? oh : ops::concat_cols(heads, oh);
            }
            Var<T> a = ops::dropout(ops::matmul(heads, p(b + "attn.w_o")), config_.dropout, train, rng);
            x = ops::layer_norm(ops::add(x, a), p(b + "ln1.gain"), p(b + "ln1.bias"));

            Var<T> ff = ops::relu(ops::add_bias(ops::matmul(x, p(b + "ff.w1")), p(b + "ff.b1")));
            ff = ops::add_bias(ops::matmul(ff, p(b + "ff.w2")), p(b + "ff.b2"));
            ff = ops::dropout(ff, config_.dropout, train, rng);
            x = ops::layer_norm(ops::add(x, ff), p(b + "ln2.gain"), p(b + "ln2.bias"));
        }
        (void)klen;
        return x;
    }

    /// Last memory_len rows of [old ; fresh].
    Tensor<T> updated_memory(const Tensor<T>& old, const Tensor<T>& fresh) const {
        const std::size_t d = config_.d_model;
        const std::size_t total = old.rows() + fresh.rows();
        const std::size_t keep = std::min(config_.memory_len, total);
        Tensor<T> out({keep, d});
        const std::size_t skip = total - keep;
        for (std::size_t r = 0; r < keep; ++r) {
            const std::size_t src = skip + r;
            auto row = src < old.rows() ? old.row(src) : fresh.row(src - old.rows());
            std::copy(row.begin(), row.end(), out.row(r).begin());
        }
        return out;
    }

    Var<T> lstm_trunk(const std::vector<int>& tokens, const std::vector<Var<T>>& memory, bool train, Rng& rng,
                      SegmentMemory<T>& new_memory) const {
        const std::size_t d = config_.d_model;
        Var<T> x = ops::dropout(ops::embedding_lookup(p("embed.word"), tokens), config_.dropout, train, rng);
        const Var<T> xg = ops::add_bias(ops::matmul(x, p("lstm.w_x")), p("lstm.b"));
        Var<T> h = memory.empty() ? constant(Tensor<T>::matrix(1, d)) : memory[0];
        Var<T> c = memory.empty() ? constant(Tensor<T>::matrix(1, d)) : memory[1];
        std::vector<Var<T>> outputs;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const Var<T> g = ops::add(ops::slice_rows(xg, t, 1), ops::matmul(h, p("lstm.w_h")));
            const Var<T> i = ops::sigmoid(ops::slice_cols(g, 0, d));
            const Var<T> f = ops::sigmoid(ops::slice_cols(g, d, d));
            const Var<T> cand = ops::tanh(ops::slice_cols(g, 2 * d, d));
            const Var<T> o = ops::sigmoid(ops::slice_cols(g, 3 * d, d));
            c = ops::add(ops::mul(f, c), ops::mul(i, cand));
            h = ops::mul(o, ops::tanh(c));
            outputs.push_back(h);
        }
        new_memory.lstm_h = h.value();
        new_memory.lstm_c = c.value();
        return ops::dropout(ops::stack_rows(outputs), config_.dropout, train, rng);
    }

    ModelConfig config_;
    ParameterSet<T> params_;
};

/// Parameter count from the config alone.
inline std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t d = c.d_model, V = c.vocab_size;
    std::size_t n = V * d + d * V + V;
    if (c.arch == Arch::txl) {
        n += 2 * d;
        n += c.n_layers * (5 * d * d + 4 * d + d * c.d_ff + c.d_ff + c.d_ff * d + d);
    } else {
        n += 2 * d * 4 * d + 4 * d;
    }
    if (c.slot_head.enabled) {
        const std::size_t K = c.n_slot_classes, L = c.slot_head.mlp_layers;
        n += (L - 1) * (d * d + d) + d * K + K;
        if (c.slot_head.conditioning) n += K * d;
    }
    if (c.fusion.enabled) n += (d + c.fusion.d_embed) * d + d;
    return n;
}

}  // namespace txlr::model
