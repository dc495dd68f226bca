#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "txlr/model/scoring.hpp"
#include "txlr/training/trainer.hpp"

namespace txlr::eval {

enum class MaskPolicy { user_words, loss_mask, all_words };

inline MaskPolicy parse_mask_policy(const std::string& s) {
    if (s == "user-words") return MaskPolicy::user_words;
    if (s == "loss-mask") return MaskPolicy::loss_mask;
    if (s == "all-words") return MaskPolicy::all_words;
    throw UsageError("unknown mask policy '" + s + "' (expected user-words, loss-mask or all-words)");
}

inline std::vector<bool> policy_mask(const corpus::TokenizedSession& s, MaskPolicy policy) {
    std::vector<bool> m(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto k = s.kinds[i];
        switch (policy) {
            case MaskPolicy::user_words: m[i] = k == corpus::PositionKind::user_word; break;
            case MaskPolicy::loss_mask: m[i] = s.loss_mask[i]; break;
            case MaskPolicy::all_words:
                m[i] = k == corpus::PositionKind::user_word || k == corpus::PositionKind::bot_word;
                break;
        }
    }
    return m;
}

struct Perplexity {
    double ppl = 0.0;
    double mean_nll = 0.0;
    std::size_t tokens = 0;
};

/// exp(mean NLL) over the policy's positions, dropout off. `domain_override`
/// replaces each session's domain when looking up fusion embeddings.
template <typename T>
Perplexity perplexity(const model::LanguageModel<T>& model, const std::vector<training::PreparedSession>& sessions,
                      const embedding::EmbeddingTable* embeddings, MaskPolicy policy = MaskPolicy::user_words,
                      const std::string& domain_override = "") {
    double nll = 0.0;
    std::size_t count = 0;
    for (const auto& ps : sessions) {
        const auto emb = training::session_embedding<T>(model.config(), embeddings,
                                                        domain_override.empty() ? ps.domain : domain_override);
        const auto mask = policy_mask(ps.session, policy);
        const auto r = model::score_sequence(model, ps.session, std::span<const T>(emb), &mask);
        nll -= r.total;
        count += r.count;
    }
    if (count == 0) throw DataError("perplexity: no positions to score");
    return {std::exp(nll / static_cast<double>(count)), nll / static_cast<double>(count), count};
}

}  // namespace txlr::eval
