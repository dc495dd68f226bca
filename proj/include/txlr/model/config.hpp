#pragma once

#include <string>

#include "txlr/config/strict_json.hpp"
#include "txlr/numerics/rng.hpp"

namespace txlr::model {

enum class Arch { txl, lstm_baseline };
enum class Activation { sigmoid, tanh, relu };

inline std::string arch_name(Arch a) { return a == Arch::txl ? "txl" : "lstm"; }
inline Arch parse_arch(const std::string& s) {
    if (s == "txl") return Arch::txl;
    if (s == "lstm" || s == "lstm_baseline") return Arch::lstm_baseline;
    throw UsageError("unknown arch '" + s + "' (expected txl or lstm)");
}

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "sigmoid";
}
inline Activation parse_activation(const std::string& s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw UsageError("unknown activation '" + s + "' (expected sigmoid, tanh or relu)");
}

struct FusionConfig {
    bool enabled = false;
    std::size_t d_embed = 32;
    Activation activation = Activation::sigmoid;
};

struct SlotHeadConfig {
    bool enabled = false;
    std::size_t mlp_layers = 3;
    // Slot logits at step t feed the word prediction for step t+1.
    bool conditioning = true;
};

struct ModelConfig {
    Arch arch = Arch::txl;
    std::size_t n_layers = 4;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t segment_len = 25;
    std::size_t memory_len = 25;
    std::size_t vocab_size = 2000;
    std::size_t n_slot_classes = 2;
    double dropout = 0.3;
    FusionConfig fusion;
    SlotHeadConfig slot_head;
    // Carry memory across turns; false resets it at every turn boundary.
    bool contextual = true;
    // Inputs carry "<da> act </da>" prefixes on user turns.
    bool dialogue_acts = false;

    void validate() const {
        auto fail = [](const std::string& m) { throw UsageError("model config: " + m); };
        if (d_model == 0) fail("d_model must be > 0");
        if (arch == Arch::txl) {
            if (n_heads == 0 || d_model % n_heads != 0) {
                fail("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                     std::to_string(n_heads) + ")");
            }
            if (d_model % 2 != 0) fail("d_model must be even for sinusoidal relative positions");
            if (n_layers == 0) fail("n_layers must be >= 1");
            if (d_ff == 0) fail("d_ff must be > 0");
        }
        if (segment_len < 1) fail("segment_len must be >= 1");
        if (vocab_size < 8) fail("vocab_size must cover the reserved tokens");
        if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
        if (slot_head.enabled && n_slot_classes < 2) fail("n_slot_classes must be >= 2");
        if (slot_head.enabled && slot_head.mlp_layers < 1) fail("slot_head.mlp_layers must be >= 1");
        if (fusion.enabled && fusion.d_embed == 0) fail("fusion.d_embed must be > 0");
    }

    /// Full-size model: 4 x 512, 4 heads, 768-dim domain embedding.
    static ModelConfig full_size() {
        ModelConfig c;
        c.d_model = 512;
        c.d_ff = 2048;
        c.vocab_size = 25000;
        c.fusion.d_embed = 768;
        return c;
    }
};

inline config::json model_config_to_json(const ModelConfig& c) {
    return {{"arch", arch_name(c.arch)},
            {"n_layers", c.n_layers},
            {"d_model", c.d_model},
            {"n_heads", c.n_heads},
            {"d_ff", c.d_ff},
            {"segment_len", c.segment_len},
            {"memory_len", c.memory_len},
            {"vocab_size", c.vocab_size},
            {"n_slot_classes", c.n_slot_classes},
            {"dropout", c.dropout},
            {"contextual", c.contextual},
            {"dialogue_acts", c.dialogue_acts},
            {"fusion",
             {{"enabled", c.fusion.enabled},
              {"d_embed", c.fusion.d_embed},
              {"activation", activation_name(c.fusion.activation)}}},
            {"slot_head",
             {{"enabled", c.slot_head.enabled},
              {"mlp_layers", c.slot_head.mlp_layers},
              {"conditioning", c.slot_head.conditioning}}}};
}

inline ModelConfig model_config_from_json(const config::json& j, ModelConfig c, const std::string& where) {
    config::StrictObject o(j, where);
    if (o.has("arch")) c.arch = parse_arch(o.get<std::string>("arch"));
    o.opt("n_layers", c.n_layers);
    o.opt("d_model", c.d_model);
    o.opt("n_heads", c.n_heads);
    o.opt("d_ff", c.d_ff);
    o.opt("segment_len", c.segment_len);
    o.opt("memory_len", c.memory_len);
    o.opt("vocab_size", c.vocab_size);
    o.opt("n_slot_classes", c.n_slot_classes);
    o.opt("dropout", c.dropout);
    o.opt("contextual", c.contextual);
    o.opt("dialogue_acts", c.dialogue_acts);
    if (o.has("fusion")) {
        config::StrictObject f(o.raw("fusion"), o.path("fusion"));
        f.opt("enabled", c.fusion.enabled);
        f.opt("d_embed", c.fusion.d_embed);
        if (f.has("activation")) c.fusion.activation = parse_activation(f.get<std::string>("activation"));
        f.finish();
    }
    if (o.has("slot_head")) {
        config::StrictObject s(o.raw("slot_head"), o.path("slot_head"));
        s.opt("enabled", c.slot_head.enabled);
        s.opt("mlp_layers", c.slot_head.mlp_layers);
        s.opt("conditioning", c.slot_head.conditioning);
        s.finish();
    }
    o.finish();
    return c;
}

inline std::uint64_t fingerprint(const ModelConfig& c) { return fnv1a64(model_config_to_json(c).dump()); }

}  // namespace txlr::model
