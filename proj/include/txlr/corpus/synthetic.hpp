#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "txlr/config/strict_json.hpp"
#include "txlr/corpus/types.hpp"
#include "txlr/numerics/rng.hpp"

namespace txlr::corpus {

/// A group of slot entities that the bot asks about with one context phrase.
/// Entities only ever follow a bot request mentioning their context.
struct Category {
    std::string context;
    std::string tag;
    std::vector<std::string> entities;
};

struct DomainSpec {
    std::string name;
    double weight = 1.0;
    std::vector<std::string> intents;
    std::vector<Category> categories;
};

/// Desk-scale stand-in for a task-oriented dialogue corpus. Each conversation
/// follows: welcome, intent, then cycles of (request, inform, confirm,
/// affirm|negate), and closes with (req-more, thank-you).
struct SynthConfig {
    std::size_t num_conversations = 1000;
    std::size_t avg_turns = 5;
    double generic_intent_prob = 0.6;
    std::vector<DomainSpec> domains;
    std::vector<std::string> generic_intents;
    std::map<std::string, std::vector<std::string>> templates;
    std::vector<std::pair<std::string, std::string>> confusables;
};

namespace acts {
inline constexpr const char* welcome = "general-welcome";
inline constexpr const char* intent = "inform-intent";
inline constexpr const char* request = "request";
inline constexpr const char* inform = "inform";
inline constexpr const char* confirm = "confirm";
inline constexpr const char* affirm = "affirm";
inline constexpr const char* negate = "negate";
inline constexpr const char* req_more = "req-more";
inline constexpr const char* thank_you = "thank-you";
inline const std::vector<std::string> all = {welcome, intent, request, inform, confirm,
                                             affirm,  negate, req_more, thank_you};
}  // namespace acts

inline SynthConfig default_synth_config() {
    SynthConfig c;
    c.domains = {
        {"retail",
         1.0,
         {"i want to buy some cleaning supplies", "i need to restock my household items"},
         {{"laundry detergent", "item", {"pods", "powder", "sheets", "gel"}},
          {"kitchen cleaner", "item", {"pads", "wipes", "spray", "scrubber"}},
          {"value pack", "item", {"socks", "towels", "batteries", "razors"}}}},
        {"fastfood",
         1.0,
         {"i want to order some food", "i am hungry and want to order dinner"},
         {{"pizza topping", "item", {"peppers", "olives", "onions", "pineapple"}},
          {"drink", "item", {"pepsi", "lemonade", "coffee", "tea"}},
          {"value pack", "item", {"shakes", "tacos", "nuggets", "wings"}}}},
    };
    c.generic_intents = {"i want to place an order", "i need some help with an order"};
    c.templates = {
        {acts::welcome, {"how can i help you today", "hi what can i do for you"}},
        {acts::request, {"what kind of {context} would you like", "which {context} do you want"}},
        {acts::inform, {"i would like the {entity}", "the {entity} please", "let me get the {entity}"}},
        {acts::confirm, {"should i add the {entity} to your cart", "do you want the {entity} in your cart"}},
        {acts::affirm, {"please keep it", "keep it"}},
        {acts::negate, {"please drop it", "drop it"}},
        {acts::req_more, {"do you need anything else", "anything else for you today"}},
        {acts::thank_you, {"no that is all thanks", "thanks that is all"}},
    };
    // Within-domain pairs are resolved by the bot's context phrase; pairs in
    // the shared "value pack" category only by the domain; keep/drop only by
    // the user's dialogue act.
    c.confusables = {{"pods", "pads"},       {"powder", "wipes"},   {"sheets", "spray"},  {"gel", "scrubber"},
                     {"peppers", "pepsi"},   {"olives", "lemonade"}, {"onions", "coffee"}, {"pineapple", "tea"},
                     {"socks", "shakes"},    {"towels", "tacos"},   {"batteries", "nuggets"}, {"razors", "wings"},
                     {"keep", "drop"}};
    return c;
}

inline config::json synth_config_to_json(const SynthConfig& c) {
    config::json domains = config::json::array();
    for (const auto& d : c.domains) {
        config::json cats = config::json::array();
        for (const auto& cat : d.categories)
            cats.push_back({{"context", cat.context}, {"tag", cat.tag}, {"entities", cat.entities}});
        domains.push_back({{"name", d.name}, {"weight", d.weight}, {"intents", d.intents}, {"categories", cats}});
    }
    config::json pairs = config::json::array();
    for (const auto& [a, b] : c.confusables) pairs.push_back({a, b});
    return {{"num_conversations", c.num_conversations},
            {"avg_turns", c.avg_turns},
            {"generic_intent_prob", c.generic_intent_prob},
            {"domains", domains},
            {"generic_intents", c.generic_intents},
            {"templates", c.templates},
            {"confusables", pairs}};
}

/// Overlays `j` onto `base`; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const config::json& j, SynthConfig base, const std::string& where) {
    config::StrictObject o(j, where);
    o.opt("num_conversations", base.num_conversations);
    o.opt("avg_turns", base.avg_turns);
    o.opt("generic_intent_prob", base.generic_intent_prob);
    o.opt("generic_intents", base.generic_intents);
    o.opt("templates", base.templates);
    if (o.has("domains")) {
        base.domains.clear();
        for (const auto& dj : o.raw("domains")) {
            config::StrictObject d(dj, o.path("domains"));
            DomainSpec spec;
            spec.name = d.get<std::string>("name");
            d.opt("weight", spec.weight);
            d.opt("intents", spec.intents);
            if (d.has("categories")) {
                for (const auto& cj : d.raw("categories")) {
                    config::StrictObject cat(cj, d.path("categories"));
                    spec.categories.push_back({cat.get<std::string>("context"), cat.get<std::string>("tag"),
                                               cat.get<std::vector<std::string>>("entities")});
                    cat.finish();
                }
            }
            d.finish();
            base.domains.push_back(std::move(spec));
        }
    }
    if (o.has("confusables")) {
        base.confusables.clear();
        for (const auto& p : o.raw("confusables")) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
                throw UsageError(o.path("confusables") + ": each entry must be a pair of words");
            }
            base.confusables.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
        }
    }
    o.finish();
    return base;
}

inline void validate_synth_config(const SynthConfig& c) {
    if (c.domains.size() < 2) throw UsageError("synthetic config: need at least 2 domains");
    for (const auto& d : c.domains) {
        std::size_t n = 0;
        for (const auto& cat : d.categories) n += cat.entities.size();
        if (n == 0) throw UsageError("synthetic config: domain '" + d.name + "' has an empty slot-entity catalog");
        if (d.weight <= 0.0) throw UsageError("synthetic config: domain '" + d.name + "' weight must be > 0");
    }
    for (const auto& act : acts::all) {
        if (act == acts::intent) continue;
        auto it = c.templates.find(act);
        if (it == c.templates.end() || it->second.empty()) {
            throw UsageError("synthetic config: no templates for dialogue act '" + act + "'");
        }
    }
    if (c.avg_turns < 4) throw UsageError("synthetic config: avg_turns must be >= 4");
    if (c.generic_intent_prob < 0.0 || c.generic_intent_prob > 1.0) {
        throw UsageError("synthetic config: generic_intent_prob must lie in [0, 1]");
    }
}

/// Entity word -> context phrase for every catalog entry (first wins).
inline std::map<std::string, std::set<std::string>> entity_contexts(const SynthConfig& c) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& d : c.domains)
        for (const auto& cat : d.categories)
            for (const auto& e : cat.entities) out[e].insert(cat.context);
    return out;
}

namespace detail {

inline const std::string& pick(const std::vector<std::string>& xs, Rng& rng) { return xs[rng.uniform_index(xs.size())]; }

/// Expands "{context}" / "{entity}" placeholders; the entity becomes a slot span.
inline Turn render(Actor actor, const std::string& act, const std::string& tmpl, const std::string& context,
                   const std::string& entity, const std::string& tag) {
    Turn t;
    t.actor = actor;
    t.dialogue_act = act;
    std::vector<std::string> out;
    for (const auto& tok : tokenize(tmpl)) {
        if (tok == "{context}") {
            for (auto& w : tokenize(context)) out.push_back(w);
        } else if (tok == "{entity}") {
            auto words = tokenize(entity);
            t.slot_spans.push_back({out.size(), out.size() + words.size(), tag});
            for (auto& w : words) out.push_back(w);
        } else {
            out.push_back(tok);
        }
    }
    t.text = join(out);
    return t;
}

}  // namespace detail

inline CorpusHeader synth_header(const SynthConfig& c) {
    CorpusHeader h;
    h.dialogue_acts = acts::all;
    std::set<std::string> tags;
    for (const auto& d : c.domains)
        for (const auto& cat : d.categories) tags.insert(cat.tag);
    h.slot_tags.assign(tags.begin(), tags.end());
    return h;
}

inline Corpus generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
    validate_synth_config(config);
    Rng rng("synthetic", seed);
    Corpus corpus;
    corpus.header = synth_header(config);

    double total_weight = 0.0;
    for (const auto& d : config.domains) total_weight += d.weight;

    const std::size_t avg = config.avg_turns;
    const std::size_t radius = std::min<std::size_t>(2, avg - 4);
    const auto& T = config.templates;

    for (std::size_t n = 0; n < config.num_conversations; ++n) {
        double u = rng.uniform() * total_weight;
        std::size_t di = 0;
        while (di + 1 < config.domains.size() && u >= config.domains[di].weight) u -= config.domains[di++].weight;
        const DomainSpec& dom = config.domains[di];

        Conversation conv;
        char id[32];
        std::snprintf(id, sizeof id, "conv-%06zu", n);
        conv.id = id;
        conv.domain = dom.name;

        const std::size_t length = avg - radius + rng.uniform_index(2 * radius + 1);
        const std::size_t body = length - 2;

        conv.turns.push_back(detail::render(Actor::bot, acts::welcome, detail::pick(T.at(acts::welcome), rng), "", "", ""));
        if (conv.turns.size() < body) {
            const bool generic = dom.intents.empty() || rng.bernoulli(config.generic_intent_prob);
            const std::string& text = detail::pick(generic ? config.generic_intents : dom.intents, rng);
            conv.turns.push_back(detail::render(Actor::user, acts::intent, text, "", "", ""));
        }
        std::vector<const Category*> cats;
        for (const auto& cat : dom.categories)
            if (!cat.entities.empty()) cats.push_back(&cat);
        while (conv.turns.size() < body) {
            const Category& cat = *cats[rng.uniform_index(cats.size())];
            const std::string& entity = detail::pick(cat.entities, rng);
            const bool keep = rng.bernoulli(0.5);
            std::vector<Turn> cycle = {
                detail::render(Actor::bot, acts::request, detail::pick(T.at(acts::request), rng), cat.context, "", ""),
                detail::render(Actor::user, acts::inform, detail::pick(T.at(acts::inform), rng), "", entity, cat.tag),
                detail::render(Actor::bot, acts::confirm, detail::pick(T.at(acts::confirm), rng), "", entity, cat.tag),
                detail::render(Actor::user, keep ? acts::affirm : acts::negate,
                               detail::pick(T.at(keep ? acts::affirm : acts::negate), rng), "", "", ""),
            };
            for (auto& t : cycle) {
                if (conv.turns.size() >= body) break;
                conv.turns.push_back(std::move(t));
            }
        }
        conv.turns.push_back(detail::render(Actor::bot, acts::req_more, detail::pick(T.at(acts::req_more), rng), "", "", ""));
        conv.turns.push_back(detail::render(Actor::user, acts::thank_you, detail::pick(T.at(acts::thank_you), rng), "", "", ""));
        corpus.conversations.push_back(std::move(conv));
    }
    return corpus;
}

}  // namespace txlr::corpus
