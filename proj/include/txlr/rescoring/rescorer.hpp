#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "txlr/corpus/vocab.hpp"
#include "txlr/embedding/provider.hpp"
#include "txlr/model/scoring.hpp"
#include "txlr/rescoring/nbest.hpp"

namespace txlr::rescoring {

enum class CommitPolicy { rescored_top, first_pass_top };

inline CommitPolicy parse_commit_policy(const std::string& s) {
    if (s == "rescored") return CommitPolicy::rescored_top;
    if (s == "first-pass") return CommitPolicy::first_pass_top;
    throw UsageError("unknown commit policy '" + s + "' (expected rescored or first-pass)");
}
inline const char* commit_policy_name(CommitPolicy p) {
    return p == CommitPolicy::rescored_top ? "rescored" : "first-pass";
}

struct RescoreOptions {
    double acoustic_scale = 1.0;
    double lm_scale = 1.0;
    // Divide the LM log-probability by the number of scored tokens.
    bool length_normalize = false;
    CommitPolicy commit = CommitPolicy::rescored_top;
};

inline config::json rescore_options_to_json(const RescoreOptions& o) {
    return {{"acoustic_scale", o.acoustic_scale},
            {"lm_scale", o.lm_scale},
            {"length_normalize", o.length_normalize},
            {"commit", commit_policy_name(o.commit)}};
}

inline RescoreOptions rescore_options_from_json(const config::json& j, RescoreOptions o, const std::string& where) {
    config::StrictObject s(j, where);
    s.opt("acoustic_scale", o.acoustic_scale);
    s.opt("lm_scale", o.lm_scale);
    s.opt("length_normalize", o.length_normalize);
    if (s.has("commit")) o.commit = parse_commit_policy(s.get<std::string>("commit"));
    s.finish();
    return o;
}

template <typename T>
struct SessionState {
    std::string conversation_id;
    std::string domain;
    model::SegmentMemory<T> memory;
    std::vector<T> embedding;
    std::size_t turns_consumed = 0;
};

struct ScoredHypothesis {
    Hypothesis hypothesis;
    double lm_logprob = 0.0;
    double combined_score = 0.0;
    std::size_t new_rank = 0;
    std::size_t lm_tokens = 0;
};

struct TurnResult {
    std::vector<ScoredHypothesis> ranked;
    std::vector<std::string> warnings;
};

/// Session-stateful n-best rescoring with a trained model.
template <typename T>
class Rescorer {
public:
    Rescorer(const model::LanguageModel<T>& model, const corpus::Vocabulary& vocab,
             const embedding::EmbeddingTable* embeddings = nullptr)
        : model_(model), vocab_(vocab), embeddings_(embeddings) {}

    SessionState<T> open_session(const std::string& conversation_id, const std::string& domain) const {
        SessionState<T> s;
        s.conversation_id = conversation_id;
        s.domain = domain;
        s.memory = model_.empty_memory();
        if (model_.config().fusion.enabled) {
            if (!embeddings_ || !embeddings_->contains(domain)) {
                throw DataError("open_session: no domain embedding for '" + domain + "' (conversation " +
                                conversation_id + ")");
            }
            s.embedding = embeddings_->normalized<T>(domain);
        }
        return s;
    }

    /// Token ids of one turn as the model saw them in training: the actor
    /// token, the dialogue-act prefix for user turns of DA models, the words.
    std::vector<int> encode_turn(const std::string& text, corpus::Actor actor,
                                 const std::optional<std::string>& dialogue_act, std::size_t* prefix_len = nullptr) const {
        std::vector<int> ids{corpus::Vocabulary::actor_token(actor)};
        if (actor == corpus::Actor::user && model_.config().dialogue_acts && dialogue_act) {
            ids.push_back(corpus::Vocabulary::kDaOpen);
            ids.push_back(vocab_.encode(*dialogue_act));
            ids.push_back(corpus::Vocabulary::kDaClose);
        }
        if (prefix_len) *prefix_len = ids.size();
        for (const auto& w : corpus::tokenize(text)) ids.push_back(vocab_.encode(w));
        return ids;
    }

    /// Scores every hypothesis against the current memory. The state is not
    /// modified. The LM score covers the words and the end of the turn (the
    /// next actor token), never the actor or dialogue-act prefix.
    TurnResult rescore_turn(const SessionState<T>& state, const NBestList& nbest, const RescoreOptions& opts) const {
        check_turn(state, nbest.conversation_id, nbest.turn_index, nbest.utterance_id);
        validate_nbest(nbest, "rescore_turn");
        TurnResult out;
        const auto& memory = model_.config().contextual ? state.memory : empty_;
        for (const auto& h : nbest.hypotheses) {
            std::size_t prefix = 0;
            auto ids = encode_turn(h.text, corpus::Actor::user, nbest.dialogue_act, &prefix);
            if (ids.size() == prefix) {
                out.warnings.push_back("utterance " + nbest.utterance_id + ": empty hypothesis at first-pass rank " +
                                       std::to_string(h.first_pass_rank) + " scored on end of turn only");
            }
            ids.push_back(corpus::Vocabulary::kTurnBot);
            const auto lp = model::score_continuation(model_, memory, ids, std::span<const T>(state.embedding));
            ScoredHypothesis s;
            s.hypothesis = h;
            for (std::size_t i = prefix; i < ids.size(); ++i) s.lm_logprob += lp[i];
            s.lm_tokens = ids.size() - prefix;
            const double lm = opts.length_normalize ? s.lm_logprob / static_cast<double>(s.lm_tokens) : s.lm_logprob;
            s.combined_score = opts.acoustic_scale * h.acoustic_score + opts.lm_scale * lm;
            out.ranked.push_back(std::move(s));
        }
        std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const auto& a, const auto& b) {
            if (a.combined_score != b.combined_score) return a.combined_score > b.combined_score;
            return a.hypothesis.first_pass_rank < b.hypothesis.first_pass_rank;
        });
        for (std::size_t i = 0; i < out.ranked.size(); ++i) out.ranked[i].new_rank = i;
        return out;
    }

    /// Forced pass over a committed turn; the only way memory changes.
    /// Context-reset models keep an empty memory across turns.
    void advance_session(SessionState<T>& state, const std::string& text, corpus::Actor actor,
                         const std::optional<std::string>& dialogue_act = std::nullopt) const {
        if (model_.config().contextual) {
            state.memory = model::advance_memory(model_, std::move(state.memory), encode_turn(text, actor, dialogue_act),
                                                 std::span<const T>(state.embedding));
        }
        ++state.turns_consumed;
    }

private:
    void check_turn(const SessionState<T>& state, const std::string& conv, std::size_t turn,
                    const std::string& what) const {
        if (conv != state.conversation_id) {
            throw DataError(what + ": belongs to conversation '" + conv + "', session is '" + state.conversation_id + "'");
        }
        if (turn != state.turns_consumed) {
            throw DataError(what + ": turn index " + std::to_string(turn) + " out of order (expected " +
                            std::to_string(state.turns_consumed) + ")");
        }
    }

    const model::LanguageModel<T>& model_;
    const corpus::Vocabulary& vocab_;
    const embedding::EmbeddingTable* embeddings_;
    model::SegmentMemory<T> empty_ = model_.empty_memory();
};

struct StreamResult {
    std::vector<Record> output;               // records with hypotheses in new-rank order
    std::vector<TurnResult> turns;            // one per user record, in order
    std::vector<std::string> warnings;
};

/// Streams records in file order, one session per conversation, and returns
/// the rescored user turns. Bot turns are forced into memory.
template <typename T>
StreamResult rescore_stream(const Rescorer<T>& rescorer, const std::vector<Record>& records,
                               const RescoreOptions& opts) {
    StreamResult res;
    std::optional<SessionState<T>> state;
    std::set<std::string> finished;
    for (const auto& rec : records) {
        const std::string& conv = conversation_of(rec);
        if (!state || state->conversation_id != conv) {
            if (state) finished.insert(state->conversation_id);
            if (finished.contains(conv)) {
                throw DataError("conversation '" + conv + "' is interleaved with another conversation");
            }
            state = rescorer.open_session(conv, domain_of(rec));
        }
        if (const auto* bot = std::get_if<BotTurn>(&rec)) {
            if (bot->turn_index != state->turns_consumed) {
                throw DataError("bot turn " + std::to_string(bot->turn_index) + " of '" + conv +
                                "' out of order (expected " + std::to_string(state->turns_consumed) + ")");
            }
            rescorer.advance_session(*state, bot->text, corpus::Actor::bot);
            res.output.push_back(rec);
            continue;
        }
        const auto& nb = std::get<NBestList>(rec);
        auto turn = rescorer.rescore_turn(*state, nb, opts);
        for (auto& w : turn.warnings) res.warnings.push_back(w);
        const auto& chosen = opts.commit == CommitPolicy::rescored_top ? turn.ranked.front().hypothesis.text
                                                                       : nb.hypotheses.front().text;
        rescorer.advance_session(*state, chosen, corpus::Actor::user, nb.dialogue_act);
        NBestList reranked = nb;
        reranked.hypotheses.clear();
        for (const auto& s : turn.ranked) reranked.hypotheses.push_back(s.hypothesis);
        res.output.push_back(std::move(reranked));
        res.turns.push_back(std::move(turn));
    }
    return res;
}

/// Output record for a rescored list, hypotheses in new-rank order.
inline config::json rescored_to_json(const NBestList& nb, const TurnResult& turn) {
    auto j = record_to_json(nb);
    config::json hyps = config::json::array();
    for (const auto& s : turn.ranked) {
        hyps.push_back({{"text", s.hypothesis.text},
                        {"acoustic_score", s.hypothesis.acoustic_score},
                        {"first_pass_rank", s.hypothesis.first_pass_rank},
                        {"lm_logprob", s.lm_logprob},
                        {"combined_score", s.combined_score},
                        {"new_rank", s.new_rank}});
    }
    j["hypotheses"] = hyps;
    return j;
}

}  // namespace txlr::rescoring
