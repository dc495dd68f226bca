#pragma once

// Corpus file: JSON Lines. The first non-empty line is the header
//   {"format":"txlr-corpus","version":1,"dialogue_acts":[...],"slot_tags":[...]}
// and every following line is one conversation
//   {"id":"c1","domain":"retail","turns":[{"actor":"user","text":"...",
//     "dialogue_act":"inform","slot_spans":[[start,end,"tag"],...]}, ...]}
// Slot spans are half-open token ranges over the whitespace-tokenized text.
// The canonical form is what write_corpus emits: compact JSON, keys sorted.

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "txlr/corpus/types.hpp"

namespace txlr::corpus {

using json = nlohmann::json;

inline constexpr const char* kCorpusFormat = "txlr-corpus";

namespace detail {

template <typename V>
V field(const json& obj, const char* name, const std::string& where) {
    if (!obj.is_object() || !obj.contains(name)) throw DataError(where + ": missing field '" + name + "'");
    try {
        return obj.at(name).get<V>();
    } catch (const json::exception&) {
        throw DataError(where + ": field '" + name + "' has the wrong type");
    }
}

}  // namespace detail

inline json header_to_json(const CorpusHeader& h) {
    return json{{"format", kCorpusFormat}, {"version", h.version}, {"dialogue_acts", h.dialogue_acts},
                {"slot_tags", h.slot_tags}};
}

inline json conversation_to_json(const Conversation& c) {
    json turns = json::array();
    for (const auto& t : c.turns) {
        json spans = json::array();
        for (const auto& s : t.slot_spans) spans.push_back(json::array({s.start, s.end, s.tag}));
        turns.push_back(json{{"actor", actor_name(t.actor)},
                             {"text", t.text},
                             {"dialogue_act", t.dialogue_act},
                             {"slot_spans", std::move(spans)}});
    }
    return json{{"id", c.id}, {"domain", c.domain}, {"turns", std::move(turns)}};
}

inline CorpusHeader header_from_json(const json& j, const std::string& where) {
    if (detail::field<std::string>(j, "format", where) != kCorpusFormat) {
        throw DataError(where + ": field 'format': expected '" + std::string(kCorpusFormat) + "'");
    }
    CorpusHeader h;
    h.version = detail::field<int>(j, "version", where);
    if (h.version != 1) throw DataError(where + ": field 'version': unsupported version " + std::to_string(h.version));
    h.dialogue_acts = detail::field<std::vector<std::string>>(j, "dialogue_acts", where);
    h.slot_tags = detail::field<std::vector<std::string>>(j, "slot_tags", where);
    return h;
}

inline Conversation conversation_from_json(const json& j, const std::string& where) {
    Conversation c;
    c.id = detail::field<std::string>(j, "id", where);
    c.domain = detail::field<std::string>(j, "domain", where);
    const json turns = detail::field<json>(j, "turns", where);
    if (!turns.is_array()) throw DataError(where + ": field 'turns' must be an array");
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const std::string tw = where + ": turn " + std::to_string(i);
        Turn t;
        try {
            t.actor = parse_actor(detail::field<std::string>(turns[i], "actor", tw));
        } catch (const DataError& e) {
            throw DataError(tw + ": field 'actor': " + e.what());
        }
        t.text = detail::field<std::string>(turns[i], "text", tw);
        t.dialogue_act = detail::field<std::string>(turns[i], "dialogue_act", tw);
        const json spans = turns[i].value("slot_spans", json::array());
        if (!spans.is_array()) throw DataError(tw + ": field 'slot_spans' must be an array");
        for (const auto& s : spans) {
            if (!s.is_array() || s.size() != 3 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned() ||
                !s[2].is_string()) {
                throw DataError(tw + ": field 'slot_spans': each span must be [start, end, tag]");
            }
            t.slot_spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::string>()});
        }
        c.turns.push_back(std::move(t));
    }
    return c;
}

inline Corpus parse_corpus_stream(std::istream& in, const std::string& source) {
    Corpus corpus;
    bool have_header = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(where + ": malformed JSON record: " + e.what());
        }
        if (!have_header) {
            corpus.header = header_from_json(j, where);
            have_header = true;
            continue;
        }
        Conversation c = conversation_from_json(j, where);
        validate_conversation(c, corpus.header, where);
        corpus.conversations.push_back(std::move(c));
    }
    return corpus;
}

inline Corpus parse_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file '" + path + "'");
    return parse_corpus_stream(in, path);
}

inline std::string serialize_corpus(const Corpus& corpus) {
    std::ostringstream os;
    os << header_to_json(corpus.header).dump() << '\n';
    for (const auto& c : corpus.conversations) os << conversation_to_json(c).dump() << '\n';
    return os.str();
}

inline void write_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << serialize_corpus(corpus);
}

}  // namespace txlr::corpus
