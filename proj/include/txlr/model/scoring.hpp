#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "txlr/corpus/session.hpp"
#include "txlr/model/model.hpp"

namespace txlr::model {

/// Inputs are tokens[start, stop-1), targets tokens[start+1, stop). Memory is
/// empty at the start of every range.
struct SequenceRange {
    std::size_t start = 0;
    std::size_t stop = 0;
};

/// Contextual models see one range per session. Context-reset models get one
/// range per turn, extended by the next turn's actor token so the end of a
/// turn is still predicted from inside that turn.
inline std::vector<SequenceRange> sequence_ranges(std::size_t n, const std::vector<std::size_t>& turn_boundaries,
                                                  bool contextual) {
    std::vector<SequenceRange> out;
    if (n == 0) return out;
    if (contextual || turn_boundaries.empty()) {
        out.push_back({0, n});
        return out;
    }
    for (std::size_t k = 0; k < turn_boundaries.size(); ++k) {
        const std::size_t begin = turn_boundaries[k];
        const std::size_t end = k + 1 < turn_boundaries.size() ? turn_boundaries[k + 1] + 1 : n;
        out.push_back({begin, end});
    }
    return out;
}

inline constexpr double kUnscored = std::numeric_limits<double>::quiet_NaN();

struct SessionScores {
    std::vector<double> logprob;  // logprob[i] = log p(token_i | history); NaN for i = 0 / range starts
    std::vector<int> slot_pred;   // argmax slot class per position (0 when no slot head)
};

template <typename T>
SessionScores run_session(const LanguageModel<T>& model, const std::vector<int>& tokens,
                          const std::vector<std::size_t>& turn_boundaries, std::span<const T> embedding) {
    const auto& cfg = model.config();
    SessionScores out{std::vector<double>(tokens.size(), kUnscored), std::vector<int>(tokens.size(), 0)};
    Rng unused("eval", 0);
    for (const auto& range : sequence_ranges(tokens.size(), turn_boundaries, cfg.contextual)) {
        auto memory = model.empty_memory();
        for (std::size_t pos = range.start; pos + 1 < range.stop; pos += cfg.segment_len) {
            const std::size_t len = std::min(cfg.segment_len, range.stop - 1 - pos);
            std::vector<int> chunk(tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(pos + len));
            auto fwd = model.forward_segment(chunk, memory, embedding, false, unused);
            auto lsm = ops::log_softmax(fwd.word_logits);
            for (std::size_t r = 0; r < len; ++r) {
                out.logprob[pos + r + 1] = static_cast<double>(lsm.value().at(r, static_cast<std::size_t>(tokens[pos + r + 1])));
                if (fwd.slot_logits) {
                    const auto row = fwd.slot_logits->value().row(r);
                    out.slot_pred[pos + r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
                }
            }
            memory = std::move(fwd.new_memory);
        }
        // The final input position of a session has no target but still gets a slot prediction.
        if (range.stop == tokens.size() && model.config().slot_head.enabled) {
            const std::size_t last = range.stop - 1;
            auto fwd = model.forward_segment({tokens[last]}, memory, embedding, false, unused);
            const auto row = fwd.slot_logits->value().row(0);
            out.slot_pred[last] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        }
    }
    return out;
}

struct ScoreResult {
    std::vector<double> token_logprob;
    double total = 0.0;
    std::size_t count = 0;
};

/// Sum of log p(w_i | history) over positions where `mask` is true.
template <typename T>
ScoreResult score_sequence(const LanguageModel<T>& model, const corpus::TokenizedSession& session,
                           std::span<const T> embedding, const std::vector<bool>* mask = nullptr) {
    const auto& m = mask ? *mask : session.loss_mask;
    auto scores = run_session(model, session.token_ids, session.turn_boundaries, embedding);
    ScoreResult r;
    r.token_logprob = std::move(scores.logprob);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i] || std::isnan(r.token_logprob[i])) continue;
        r.total += r.token_logprob[i];
        ++r.count;
    }
    return r;
}

/// Log-probabilities of tokens[1..] given `memory` and the tokens before them.
/// Memory is not modified.
template <typename T>
std::vector<double> score_continuation(const LanguageModel<T>& model, const SegmentMemory<T>& memory,
                                       const std::vector<int>& tokens, std::span<const T> embedding) {
    std::vector<double> lp(tokens.size(), kUnscored);
    if (tokens.size() < 2) return lp;
    const std::size_t L = model.config().segment_len;
    Rng unused("eval", 0);
    SegmentMemory<T> mem = memory;
    for (std::size_t pos = 0; pos + 1 < tokens.size(); pos += L) {
        const std::size_t len = std::min(L, tokens.size() - 1 - pos);
        std::vector<int> chunk(tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                               tokens.begin() + static_cast<std::ptrdiff_t>(pos + len));
        auto fwd = model.forward_segment(chunk, mem, embedding, false, unused);
        auto lsm = ops::log_softmax(fwd.word_logits);
        for (std::size_t r = 0; r < len; ++r)
            lp[pos + r + 1] = static_cast<double>(lsm.value().at(r, static_cast<std::size_t>(tokens[pos + r + 1])));
        mem = std::move(fwd.new_memory);
    }
    return lp;
}

/// Forced forward pass over `tokens`; returns the memory after them.
template <typename T>
SegmentMemory<T> advance_memory(const LanguageModel<T>& model, SegmentMemory<T> memory, const std::vector<int>& tokens,
                                std::span<const T> embedding) {
    const std::size_t L = model.config().segment_len;
    Rng unused("eval", 0);
    for (std::size_t pos = 0; pos < tokens.size(); pos += L) {
        const std::size_t len = std::min(L, tokens.size() - pos);
        std::vector<int> chunk(tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                               tokens.begin() + static_cast<std::ptrdiff_t>(pos + len));
        memory = model.forward_segment(chunk, memory, embedding, false, unused).new_memory;
    }
    return memory;
}

}  // namespace txlr::model
