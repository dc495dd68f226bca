#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "txlr/error.hpp"

namespace txlr::corpus {

enum class Actor { user, bot };

inline const char* actor_name(Actor a) { return a == Actor::user ? "user" : "bot"; }

inline Actor parse_actor(std::string_view s) {
    if (s == "user") return Actor::user;
    if (s == "bot") return Actor::bot;
    throw DataError("unknown actor '" + std::string(s) + "' (expected user or bot)");
}

/// Half-open token range [start, end) on the whitespace-tokenized turn text.
struct SlotSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string tag;

    friend bool operator==(const SlotSpan&, const SlotSpan&) = default;
};

struct Turn {
    Actor actor = Actor::user;
    std::string text;
    std::string dialogue_act;
    std::vector<SlotSpan> slot_spans;
    // Leading tokens inserted by dialogue-act augmentation; not serialized.
    std::size_t prefix_tokens = 0;

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct Conversation {
    std::string id;
    std::string domain;
    std::vector<Turn> turns;

    friend bool operator==(const Conversation&, const Conversation&) = default;
};

/// Declared label sets from the corpus header line.
struct CorpusHeader {
    int version = 1;
    std::vector<std::string> dialogue_acts;
    std::vector<std::string> slot_tags;

    friend bool operator==(const CorpusHeader&, const CorpusHeader&) = default;
};

struct Corpus {
    CorpusHeader header;
    std::vector<Conversation> conversations;
};

/// Lowercase, then split on ASCII whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

/// Checks Turn/Conversation invariants; `where` prefixes the error message.
inline void validate_conversation(const Conversation& conv, const CorpusHeader& header, const std::string& where) {
    if (conv.id.empty()) throw DataError(where + ": field 'id': must be non-empty");
    bool has_user = false;
    for (std::size_t t = 0; t < conv.turns.size(); ++t) {
        const Turn& turn = conv.turns[t];
        const std::string tw = where + ": turn " + std::to_string(t);
        has_user = has_user || turn.actor == Actor::user;
        if (std::find(header.dialogue_acts.begin(), header.dialogue_acts.end(), turn.dialogue_act) ==
            header.dialogue_acts.end()) {
            throw DataError(tw + ": field 'dialogue_act': unknown act '" + turn.dialogue_act + "'; declared set is {" +
                            join(header.dialogue_acts, ", ") + "}");
        }
        const std::size_t ntok = tokenize(turn.text).size();
        std::vector<SlotSpan> spans = turn.slot_spans;
        std::sort(spans.begin(), spans.end(), [](const SlotSpan& a, const SlotSpan& b) { return a.start < b.start; });
        for (std::size_t i = 0; i < spans.size(); ++i) {
            const auto& s = spans[i];
            if (s.start >= s.end || s.end > ntok) {
                throw DataError(tw + ": field 'slot_spans': span [" + std::to_string(s.start) + ", " +
                                std::to_string(s.end) + ") outside " + std::to_string(ntok) + " tokens");
            }
            if (i > 0 && spans[i - 1].end > s.start) {
                throw DataError(tw + ": field 'slot_spans': overlapping spans at token " + std::to_string(s.start));
            }
            if (std::find(header.slot_tags.begin(), header.slot_tags.end(), s.tag) == header.slot_tags.end()) {
                throw DataError(tw + ": field 'slot_spans': unknown slot tag '" + s.tag + "'; declared set is {" +
                                join(header.slot_tags, ", ") + "}");
            }
        }
    }
    if (!has_user) throw DataError(where + ": field 'turns': conversation has no user turn");
}

}  // namespace txlr::corpus
