#pragma once

#include <string>
#include <vector>

#include "txlr/corpus/session.hpp"
#include "txlr/model/config.hpp"
#include "txlr/model/scoring.hpp"

namespace txlr::training {

struct DataOptions {
    corpus::SessionOptions session;
    // Also predict the actor token that opens the next turn, i.e. the end of
    // the current turn. Applies after user turns always, after bot turns
    // only when bot words are in the loss.
    bool loss_on_turn_end = true;
};

/// A session ready for training or evaluation.
struct PreparedSession {
    std::string id;
    std::string domain;
    corpus::TokenizedSession session;
    std::vector<bool> lm_mask;    // target positions trained on
    std::vector<bool> user_mask;  // user word positions; validation PPL
};

inline PreparedSession prepare_session(const corpus::Conversation& conv, const corpus::Vocabulary& vocab,
                                       const model::ModelConfig& mc, const DataOptions& opts,
                                       const corpus::SlotScheme& slots) {
    PreparedSession p;
    p.id = conv.id;
    p.domain = conv.domain;
    p.session = corpus::assemble_session(corpus::augment_dialogue_acts(conv, mc.dialogue_acts), vocab, opts.session, slots);
    const auto& s = p.session;
    p.lm_mask = s.loss_mask;
    p.user_mask.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) p.user_mask[i] = s.kinds[i] == corpus::PositionKind::user_word;
    if (opts.loss_on_turn_end) {
        for (std::size_t k = 1; k < s.turn_boundaries.size(); ++k) {
            const bool prev_user = s.turn_actors[k - 1] == corpus::Actor::user;
            if (prev_user || opts.session.loss_on_bot) p.lm_mask[s.turn_boundaries[k]] = true;
        }
    }
    return p;
}

inline std::vector<PreparedSession> prepare_sessions(const std::vector<corpus::Conversation>& convs,
                                                     const corpus::Vocabulary& vocab, const model::ModelConfig& mc,
                                                     const DataOptions& opts, const corpus::SlotScheme& slots) {
    std::vector<PreparedSession> out;
    out.reserve(convs.size());
    for (const auto& c : convs) out.push_back(prepare_session(c, vocab, mc, opts, slots));
    return out;
}

/// Inputs tokens[start, start+len), targets one position later. `reset`
/// marks the first chunk of a range, where memory starts empty.
struct Chunk {
    std::size_t start = 0;
    std::size_t len = 0;
    bool reset = false;
};

inline std::vector<Chunk> session_chunks(const corpus::TokenizedSession& s, std::size_t segment_len, bool contextual) {
    std::vector<Chunk> out;
    for (const auto& range : model::sequence_ranges(s.size(), s.turn_boundaries, contextual)) {
        for (std::size_t pos = range.start; pos + 1 < range.stop; pos += segment_len) {
            out.push_back({pos, std::min(segment_len, range.stop - 1 - pos), pos == range.start});
        }
    }
    return out;
}

}  // namespace txlr::training
