#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "txlr/corpus/types.hpp"
#include "txlr/corpus/vocab.hpp"

namespace txlr::corpus {

/// Prefixes every user turn with "<da> act </da>" and shifts its slot spans.
/// Bot turns are untouched. Disabled -> identity.
inline Conversation augment_dialogue_acts(const Conversation& conv, bool enabled) {
    if (!enabled) return conv;
    Conversation out = conv;
    for (auto& turn : out.turns) {
        if (turn.actor != Actor::user) continue;
        turn.text = std::string(reserved::da_open) + " " + turn.dialogue_act + " " + reserved::da_close +
                    (turn.text.empty() ? "" : " " + turn.text);
        for (auto& s : turn.slot_spans) {
            s.start += 3;
            s.end += 3;
        }
        turn.prefix_tokens += 3;
    }
    return out;
}

/// Maps slot tags onto class ids. Class 0 is always "not a slot".
class SlotScheme {
public:
    SlotScheme() = default;  // binary
    explicit SlotScheme(std::vector<std::string> tags, bool per_tag) : tags_(std::move(tags)), per_tag_(per_tag) {}

    static SlotScheme binary() { return SlotScheme(); }

    std::size_t num_classes() const noexcept { return per_tag_ ? tags_.size() + 1 : 2; }
    bool per_tag() const noexcept { return per_tag_; }
    const std::vector<std::string>& tags() const noexcept { return tags_; }

    int class_of(const std::string& tag) const {
        if (!per_tag_) return 1;
        auto it = std::find(tags_.begin(), tags_.end(), tag);
        if (it == tags_.end()) throw DataError("slot tag '" + tag + "' not in slot scheme");
        return static_cast<int>(it - tags_.begin()) + 1;
    }

private:
    std::vector<std::string> tags_;
    bool per_tag_ = false;
};

enum class PositionKind : unsigned char { control, da_prefix, user_word, bot_word };

struct SessionOptions {
    bool loss_on_bot = true;
    bool loss_on_da_prefix = false;
};

struct TokenizedSession {
    std::vector<int> token_ids;
    std::vector<int> slot_labels;
    std::vector<bool> loss_mask;
    std::vector<PositionKind> kinds;
    std::vector<std::size_t> turn_boundaries;  // index of each turn's actor token
    std::vector<Actor> turn_actors;
    std::size_t unk_count = 0;

    std::size_t size() const noexcept { return token_ids.size(); }
};

/// Concatenates all turns in order; each turn is preceded by its actor token.
inline TokenizedSession assemble_session(const Conversation& conv, const Vocabulary& vocab,
                                         const SessionOptions& opts = {}, const SlotScheme& slots = {}) {
    TokenizedSession s;
    for (const auto& turn : conv.turns) {
        s.turn_boundaries.push_back(s.token_ids.size());
        s.turn_actors.push_back(turn.actor);
        s.token_ids.push_back(Vocabulary::actor_token(turn.actor));
        s.slot_labels.push_back(0);
        s.loss_mask.push_back(false);
        s.kinds.push_back(PositionKind::control);

        const auto words = tokenize(turn.text);
        const std::size_t base = s.token_ids.size();
        for (std::size_t i = 0; i < words.size(); ++i) {
            int id = vocab.encode(words[i]);
            if (id == Vocabulary::kUnk) ++s.unk_count;
            s.token_ids.push_back(id);
            s.slot_labels.push_back(0);
            if (i < turn.prefix_tokens) {
                s.kinds.push_back(PositionKind::da_prefix);
                s.loss_mask.push_back(opts.loss_on_da_prefix);
            } else if (turn.actor == Actor::user) {
                s.kinds.push_back(PositionKind::user_word);
                s.loss_mask.push_back(true);
            } else {
                s.kinds.push_back(PositionKind::bot_word);
                s.loss_mask.push_back(opts.loss_on_bot);
            }
        }
        for (const auto& span : turn.slot_spans) {
            const int cls = slots.class_of(span.tag);
            for (std::size_t p = span.start; p < span.end && p < words.size(); ++p) {
                if (s.kinds[base + p] != PositionKind::da_prefix) s.slot_labels[base + p] = cls;
            }
        }
    }
    return s;
}

/// One single-turn conversation per turn: the context-reset view of a session.
inline std::vector<Conversation> split_turns(const Conversation& conv) {
    std::vector<Conversation> out;
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        out.push_back({conv.id + "#" + std::to_string(i), conv.domain, {conv.turns[i]}});
    }
    return out;
}

}  // namespace txlr::corpus
