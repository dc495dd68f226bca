#pragma once

#include <string>
#include <vector>

#include "txlr/corpus/synthetic.hpp"
#include "txlr/corpus/vocab.hpp"
#include "txlr/model/model.hpp"
#include "txlr/training/data.hpp"

namespace txlr::test {

inline model::ModelConfig tiny_config(model::Arch arch = model::Arch::txl) {
    model::ModelConfig c;
    c.arch = arch;
    c.n_layers = 2;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    c.segment_len = 6;
    c.memory_len = 6;
    c.vocab_size = 40;
    c.dropout = 0.0;
    c.fusion.d_embed = 8;
    return c;
}

inline std::vector<int> random_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
    std::vector<int> out(n);
    for (auto& t : out) t = static_cast<int>(rng.uniform_index(vocab));
    return out;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

inline corpus::Turn turn(corpus::Actor actor, std::string text, std::string act,
                         std::vector<corpus::SlotSpan> spans = {}) {
    corpus::Turn t;
    t.actor = actor;
    t.text = std::move(text);
    t.dialogue_act = std::move(act);
    t.slot_spans = std::move(spans);
    return t;
}

// The six-turn retail snippet used across the suites.
inline corpus::Conversation sample_conversation() {
    using corpus::Actor;
    corpus::Conversation c;
    c.id = "sample";
    c.domain = "retail";
    c.turns = {turn(Actor::bot, "how can i help you today", "general-welcome"),
               turn(Actor::user, "i want to check my order", "inform-intent"),
               turn(Actor::bot, "what is your order number", "request"),
               turn(Actor::user, "my order number is abcdef", "inform", {{4, 5, "item"}}),
               turn(Actor::bot, "your order arrives tomorrow", "inform"),
               turn(Actor::user, "thanks", "thank-you")};
    return c;
}

inline corpus::CorpusHeader sample_header() {
    corpus::CorpusHeader h;
    h.dialogue_acts = corpus::acts::all;
    h.slot_tags = {"item"};
    return h;
}

inline corpus::SynthConfig small_synth(std::size_t conversations) {
    auto c = corpus::default_synth_config();
    c.num_conversations = conversations;
    return c;
}

}  // namespace txlr::test
