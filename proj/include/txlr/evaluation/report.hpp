#pragma once

// Transcript files are JSON Lines. Accepted records:
//   {"utterance_id": "...", "text": "..."}                 plain transcript
//   an n-best record (see rescoring/nbest.hpp)             reference: its "reference";
//                                                          hypothesis: its first hypothesis
//   {"actor": "bot", ...}                                  skipped

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "txlr/config/strict_json.hpp"
#include "txlr/evaluation/metrics.hpp"

namespace txlr::eval {

struct Transcripts {
    std::vector<std::string> ids;  // file order
    std::map<std::string, std::string> text;
};

enum class TranscriptRole { reference, hypothesis };

inline Transcripts parse_transcripts(std::istream& in, const std::string& source, TranscriptRole role) {
    Transcripts t;
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
        if (!j.is_object()) throw DataError(where + ": expected an object");
        if (j.value("actor", std::string("user")) == "bot") continue;
        if (!j.contains("utterance_id") || !j["utterance_id"].is_string()) {
            throw DataError(where + ": missing field 'utterance_id'");
        }
        const std::string id = j["utterance_id"];
        std::string text;
        if (j.contains("hypotheses")) {
            if (role == TranscriptRole::reference) {
                if (!j.contains("reference") || !j["reference"].is_string()) {
                    throw DataError(where + ": n-best record '" + id + "' has no 'reference'");
                }
                text = j["reference"];
            } else {
                const auto& h = j["hypotheses"];
                if (!h.is_array() || h.empty() || !h[0].contains("text")) {
                    throw DataError(where + ": n-best record '" + id + "' has no hypotheses");
                }
                text = h[0]["text"];
            }
        } else {
            if (!j.contains("text") || !j["text"].is_string()) throw DataError(where + ": missing field 'text'");
            text = j["text"];
        }
        if (t.text.contains(id)) throw DataError(where + ": duplicate utterance id '" + id + "'");
        t.ids.push_back(id);
        t.text[id] = text;
    }
    return t;
}

inline Transcripts load_transcripts(const std::string& path, TranscriptRole role) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open transcript file '" + path + "'");
    return parse_transcripts(in, path, role);
}

/// Scores of one system against the references.
struct SystemScores {
    CorpusErrors word;
    CorpusErrors content;
};

inline void check_ids(const Transcripts& ref, const Transcripts& hyp, const std::string& hyp_name) {
    std::vector<std::string> missing, extra;
    for (const auto& id : ref.ids)
        if (!hyp.text.contains(id)) missing.push_back(id);
    for (const auto& id : hyp.ids)
        if (!ref.text.contains(id)) extra.push_back(id);
    if (missing.empty() && extra.empty()) return;
    auto list = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size() && i < 20; ++i) s += (i ? ", " : "") + v[i];
        if (v.size() > 20) s += ", ... (" + std::to_string(v.size()) + " total)";
        return s;
    };
    std::string msg = "utterance ids differ between reference and " + hyp_name + ":";
    if (!missing.empty()) msg += " missing from hypotheses [" + list(missing) + "]";
    if (!extra.empty()) msg += " not in reference [" + list(extra) + "]";
    throw DataError(msg);
}

inline SystemScores score_system(const Transcripts& ref, const Transcripts& hyp, const StopwordSet& stop,
                                 const std::string& hyp_name = "hypotheses") {
    check_ids(ref, hyp, hyp_name);
    SystemScores s;
    for (const auto& id : ref.ids) {
        const auto r = corpus::tokenize(ref.text.at(id));
        const auto h = corpus::tokenize(hyp.text.at(id));
        if (r.empty()) {
            s.word.add(id, std::nullopt, 0);
        } else {
            s.word.add(id, wer(r, h), r.size());
        }
        s.content.add(id, cwer(r, h, stop), content_words(r, stop).size());
    }
    return s;
}

inline config::json errors_to_json(const CorpusErrors& e) {
    return {{"rate", e.rate()},     {"errors", e.errors},     {"ref_words", e.ref_words},
            {"utterances", e.utterances}, {"excluded", e.excluded}, {"per_utterance", e.per_utterance}};
}

inline config::json stopwords_to_json(const StopwordSet& stop) {
    return {{"name", stop.name()}, {"size", stop.size()}, {"hash", stop.hash()}};
}

inline config::json system_report(const SystemScores& s, const StopwordSet& stop) {
    return {{"wer", errors_to_json(s.word)}, {"cwer", errors_to_json(s.content)}, {"stopwords", stopwords_to_json(stop)}};
}

static inline config::json finite_or_null(double v) { return std::isfinite(v) ? config::json(v) : config::json(nullptr); }

/// Relative reductions of `system` versus `baseline` plus the matched-pairs
/// test on per-utterance content-word errors.
struct Comparison {
    double werr = 0.0;
    double cwerr = 0.0;
    MpssweResult test;
};

inline Comparison compare_systems(const SystemScores& baseline, const SystemScores& system) {
    Comparison c;
    c.werr = relative_reduction(baseline.word.rate(), system.word.rate());
    c.cwerr = relative_reduction(baseline.content.rate(), system.content.rate());
    c.test = mpsswe(baseline.content.per_utterance, system.content.per_utterance);
    return c;
}

inline config::json comparison_report(const SystemScores& baseline, const SystemScores& system, const Comparison& c,
                                      const StopwordSet& stop) {
    return {{"baseline", system_report(baseline, stop)},
            {"system", system_report(system, stop)},
            {"relative_reduction", {{"wer", finite_or_null(c.werr)}, {"cwer", finite_or_null(c.cwerr)}}},
            {"mpsswe",
             {{"z", finite_or_null(c.test.z)},
              {"p_value", c.test.p_value},
              {"degenerate", c.test.degenerate},
              {"segments", c.test.n},
              {"errors", "content words per utterance"}}}};
}

}  // namespace txlr::eval
