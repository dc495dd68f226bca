#pragma once

// N-best file format: JSON Lines, one record per turn, in conversation order.
//
// User turn (an n-best list; hypotheses in first-pass order, best first):
//   {"utterance_id": "conv-000001/3", "conversation_id": "conv-000001", "turn_index": 3,
//    "domain": "retail", "dialogue_act": "inform", "reference": "the pods please",
//    "hypotheses": [{"text": "the pads please", "acoustic_score": -1.2}, ...]}
// "domain", "dialogue_act" and "reference" are optional. first_pass_rank is the
// position in "hypotheses".
//
// Bot turn (forced into the session memory, never rescored):
//   {"conversation_id": "conv-000001", "turn_index": 2, "actor": "bot", "text": "which drink do you want"}
//
// Rescored output keeps the same records; hypotheses are reordered by new
// rank and gain "first_pass_rank", "lm_logprob", "combined_score", "new_rank".

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "txlr/config/strict_json.hpp"
#include "txlr/corpus/types.hpp"

namespace txlr::rescoring {

inline constexpr std::size_t kMaxHypotheses = 50;

struct Hypothesis {
    std::string text;
    double acoustic_score = 0.0;
    std::size_t first_pass_rank = 0;
};

struct NBestList {
    std::string utterance_id;
    std::string conversation_id;
    std::size_t turn_index = 0;
    std::string domain;
    std::vector<Hypothesis> hypotheses;
    std::optional<std::string> dialogue_act;
    std::optional<std::string> reference;
};

struct BotTurn {
    std::string conversation_id;
    std::size_t turn_index = 0;
    std::string domain;
    std::string text;
};

using Record = std::variant<NBestList, BotTurn>;

inline const std::string& conversation_of(const Record& r) {
    return std::visit([](const auto& x) -> const std::string& { return x.conversation_id; }, r);
}
inline std::size_t turn_of(const Record& r) {
    return std::visit([](const auto& x) { return x.turn_index; }, r);
}
inline const std::string& domain_of(const Record& r) {
    return std::visit([](const auto& x) -> const std::string& { return x.domain; }, r);
}

inline void validate_nbest(const NBestList& n, const std::string& where) {
    if (n.hypotheses.empty() || n.hypotheses.size() > kMaxHypotheses) {
        throw DataError(where + ": n-best list '" + n.utterance_id + "' has " + std::to_string(n.hypotheses.size()) +
                        " hypotheses (allowed 1.." + std::to_string(kMaxHypotheses) + ")");
    }
    for (std::size_t i = 0; i < n.hypotheses.size(); ++i) {
        if (n.hypotheses[i].first_pass_rank != i) {
            throw DataError(where + ": n-best list '" + n.utterance_id + "' has non-dense first-pass ranks");
        }
    }
}

inline config::json record_to_json(const Record& rec) {
    if (const auto* b = std::get_if<BotTurn>(&rec)) {
        config::json j = {{"conversation_id", b->conversation_id}, {"turn_index", b->turn_index}, {"actor", "bot"},
                          {"text", b->text}};
        if (!b->domain.empty()) j["domain"] = b->domain;
        return j;
    }
    const auto& n = std::get<NBestList>(rec);
    config::json hyps = config::json::array();
    for (const auto& h : n.hypotheses) hyps.push_back({{"text", h.text}, {"acoustic_score", h.acoustic_score}});
    config::json j = {{"utterance_id", n.utterance_id},
                      {"conversation_id", n.conversation_id},
                      {"turn_index", n.turn_index},
                      {"hypotheses", hyps}};
    if (!n.domain.empty()) j["domain"] = n.domain;
    if (n.dialogue_act) j["dialogue_act"] = *n.dialogue_act;
    if (n.reference) j["reference"] = *n.reference;
    return j;
}

inline Record record_from_json(const config::json& j, const std::string& where) {
    config::StrictObject o(j, where);
    const std::string actor = o.has("actor") ? o.get<std::string>("actor") : "user";
    if (actor == "bot") {
        BotTurn b;
        b.conversation_id = o.get<std::string>("conversation_id");
        b.turn_index = o.get<std::size_t>("turn_index");
        b.text = o.get<std::string>("text");
        o.opt("domain", b.domain);
        o.finish();
        return b;
    }
    if (actor != "user") throw DataError(where + ": unknown actor '" + actor + "'");
    NBestList n;
    n.utterance_id = o.get<std::string>("utterance_id");
    n.conversation_id = o.get<std::string>("conversation_id");
    n.turn_index = o.get<std::size_t>("turn_index");
    o.opt("domain", n.domain);
    if (o.has("dialogue_act")) n.dialogue_act = o.get<std::string>("dialogue_act");
    if (o.has("reference")) n.reference = o.get<std::string>("reference");
    const auto& hyps = o.raw("hypotheses");
    if (!hyps.is_array()) throw DataError(where + ": 'hypotheses' must be an array");
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        config::StrictObject h(hyps[i], where + ".hypotheses[" + std::to_string(i) + "]");
        Hypothesis hyp;
        hyp.text = h.get<std::string>("text");
        hyp.acoustic_score = h.get<double>("acoustic_score");
        hyp.first_pass_rank = i;
        // Fields added by a previous rescoring pass are tolerated and dropped.
        for (const char* k : {"lm_logprob", "combined_score", "new_rank", "first_pass_rank"}) h.allow(k);
        h.finish();
        n.hypotheses.push_back(std::move(hyp));
    }
    o.finish();
    validate_nbest(n, where);
    return n;
}

inline std::vector<Record> parse_nbest_stream(std::istream& in, const std::string& source) {
    std::vector<Record> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        config::json j;
        try {
            j = config::json::parse(line);
        } catch (const config::json::parse_error& e) {
            throw DataError(where + ": invalid JSON (" + e.what() + ")");
        }
        try {
            out.push_back(record_from_json(j, where));
        } catch (const UsageError& e) {
            throw DataError(e.what());
        } catch (const config::json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<Record> load_nbest_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open n-best file '" + path + "'");
    return parse_nbest_stream(in, path);
}

}  // namespace txlr::rescoring
