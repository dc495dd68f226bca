#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "txlr/corpus/types.hpp"

namespace txlr::corpus {

namespace reserved {
inline constexpr const char* unk = "<unk>";
inline constexpr const char* bos = "<s>";
inline constexpr const char* eos = "</s>";
inline constexpr const char* da_open = "<da>";
inline constexpr const char* da_close = "</da>";
inline constexpr const char* turn_user = "<user>";
inline constexpr const char* turn_bot = "<bot>";
inline constexpr std::array<const char*, 7> all = {unk, bos, eos, da_open, da_close, turn_user, turn_bot};
}  // namespace reserved

/// Dense bidirectional token <-> id map. Reserved tokens occupy ids 0..6 in
/// the order of reserved::all.
class Vocabulary {
public:
    static constexpr int kUnk = 0, kBos = 1, kEos = 2, kDaOpen = 3, kDaClose = 4, kTurnUser = 5, kTurnBot = 6;

    Vocabulary() : Vocabulary(std::vector<std::string>(reserved::all.begin(), reserved::all.end())) {}

    /// Rebuilds from a stored token list; the reserved block must lead.
    explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        for (std::size_t i = 0; i < reserved::all.size(); ++i) {
            if (i >= tokens_.size() || tokens_[i] != reserved::all[i]) {
                throw DataError("vocabulary: reserved token '" + std::string(reserved::all[i]) + "' missing at id " +
                                std::to_string(i));
            }
        }
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
                throw DataError("vocabulary: duplicate token '" + tokens_[i] + "'");
            }
        }
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    bool contains(const std::string& token) const { return ids_.contains(token); }

    int encode(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    const std::string& decode(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    static int actor_token(Actor a) { return a == Actor::user ? kTurnUser : kTurnBot; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

/// Reserved tokens, then dialogue-act labels (sorted), then corpus words by
/// descending count with lexicographic tie-break, truncated to max_size.
inline Vocabulary build_vocab(const std::vector<Conversation>& convs, std::size_t max_size,
                              const std::vector<std::string>& extra_acts = {}) {
    std::set<std::string> acts(extra_acts.begin(), extra_acts.end());
    for (const auto& c : convs)
        for (const auto& t : c.turns) acts.insert(t.dialogue_act);

    const std::size_t fixed = reserved::all.size() + acts.size();
    if (max_size <= fixed) {
        throw UsageError("build_vocab: max_size " + std::to_string(max_size) + " must exceed the " +
                         std::to_string(fixed) + " reserved and dialogue-act tokens");
    }

    std::vector<std::string> tokens(reserved::all.begin(), reserved::all.end());
    tokens.insert(tokens.end(), acts.begin(), acts.end());
    std::set<std::string> taken(tokens.begin(), tokens.end());

    std::map<std::string, std::size_t> counts;
    for (const auto& c : convs)
        for (const auto& t : c.turns)
            for (auto& w : tokenize(t.text))
                if (!taken.contains(w)) ++counts[w];

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [w, n] : ranked) {
        if (tokens.size() >= max_size) break;
        tokens.push_back(w);
    }
    return Vocabulary(std::move(tokens));
}

}  // namespace txlr::corpus
