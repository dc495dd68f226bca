#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "txlr/corpus/types.hpp"
#include "txlr/numerics/rng.hpp"

namespace txlr::eval {

enum class EditOp : unsigned char { match, sub, del, ins };

inline const char* edit_op_name(EditOp op) {
    switch (op) {
        case EditOp::match: return "match";
        case EditOp::sub: return "sub";
        case EditOp::del: return "del";
        case EditOp::ins: return "ins";
    }
    return "?";
}

/// Edit script turning the reference into the hypothesis, in reference order.
struct Alignment {
    std::vector<EditOp> ops;
    std::size_t matches = 0, subs = 0, dels = 0, ins = 0;

    std::size_t errors() const noexcept { return subs + dels + ins; }
};

/// Unit-cost Levenshtein alignment. On backtrace, ties prefer
/// match, then substitution, then deletion, then insertion.
inline Alignment align(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<std::size_t> d((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
        }
    }

    Alignment a;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        const std::size_t cur = at(i, j);
        if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && at(i - 1, j - 1) == cur) {
            a.ops.push_back(EditOp::match);
            ++a.matches, --i, --j;
        } else if (i > 0 && j > 0 && at(i - 1, j - 1) + 1 == cur) {
            a.ops.push_back(EditOp::sub);
            ++a.subs, --i, --j;
        } else if (i > 0 && at(i - 1, j) + 1 == cur) {
            a.ops.push_back(EditOp::del);
            ++a.dels, --i;
        } else {
            a.ops.push_back(EditOp::ins);
            ++a.ins, --j;
        }
    }
    std::reverse(a.ops.begin(), a.ops.end());
    return a;
}

struct WerResult {
    double rate = 0.0;
    Alignment alignment;
};

inline WerResult wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    if (ref.empty()) throw DataError("wer: empty reference");
    WerResult r;
    r.alignment = align(ref, hyp);
    r.rate = static_cast<double>(r.alignment.errors()) / static_cast<double>(ref.size());
    return r;
}

/// Stop-word inventory with a content hash so reports name the list used.
class StopwordSet {
public:
    StopwordSet() = default;
    explicit StopwordSet(std::set<std::string> words, std::string name = "custom")
        : words_(std::move(words)), name_(std::move(name)) {}

    bool contains(const std::string& w) const { return words_.contains(w); }
    std::size_t size() const noexcept { return words_.size(); }
    const std::string& name() const noexcept { return name_; }
    const std::set<std::string>& words() const noexcept { return words_; }

    /// FNV-1a 64 over the sorted words joined by newlines, as 16 hex digits.
    std::string hash() const {
        std::string joined;
        for (const auto& w : words_) joined += w + "\n";
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(joined)));
        return buf;
    }

private:
    std::set<std::string> words_;
    std::string name_ = "custom";
};

/// English function words: articles, conjunctions, prepositions, pronouns,
/// auxiliaries and a few discourse fillers.
inline StopwordSet default_stopwords() {
    return StopwordSet(
        {"a",    "an",   "the",   "and",  "or",    "but",  "if",    "so",   "of",   "to",    "in",   "on",
         "at",   "for",  "with",  "from", "by",    "about", "into", "up",   "i",    "me",    "my",   "we",
         "us",   "our",  "you",   "your", "he",    "she",  "it",    "its",  "they", "them",  "this", "that",
         "these", "those", "is",  "am",   "are",   "was",  "were",  "be",   "been", "do",    "does", "did",
         "have", "has",  "had",   "will", "would", "can",  "could", "should", "shall", "may", "might", "must",
         "some", "any",  "what",  "which", "please", "there", "here", "not", "no",  "yes", "as",   "than"},
        "default");
}

/// One word per line; blank lines and lines starting with '#' are skipped.
inline StopwordSet load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stop-word file '" + path + "'");
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        auto toks = corpus::tokenize(line);
        if (toks.empty() || toks.front().starts_with('#')) continue;
        for (auto& t : toks) words.insert(t);
    }
    return StopwordSet(std::move(words), path);
}

inline std::vector<std::string> content_words(const std::vector<std::string>& tokens, const StopwordSet& stop) {
    std::vector<std::string> out;
    for (const auto& t : tokens)
        if (!stop.contains(t)) out.push_back(t);
    return out;
}

/// WER over content words; stop words leave both sides before alignment.
/// Returns nothing when the reference has no content words.
inline std::optional<WerResult> cwer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                                     const StopwordSet& stop) {
    auto r = content_words(ref, stop);
    if (r.empty()) return std::nullopt;
    return wer(r, content_words(hyp, stop));
}

/// Micro-averaged error rate over a set of utterances.
struct CorpusErrors {
    std::size_t errors = 0;
    std::size_t ref_words = 0;
    std::size_t utterances = 0;
    std::size_t excluded = 0;                 // empty reference after filtering
    std::vector<std::size_t> per_utterance;  // errors per scored utterance, input order
    std::vector<std::string> scored_ids;     // ids of the scored utterances

    double rate() const { return ref_words == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(ref_words); }

    void add(const std::string& id, const std::optional<WerResult>& r, std::size_t ref_len) {
        ++utterances;
        if (!r) {
            ++excluded;
            return;
        }
        errors += r->alignment.errors();
        ref_words += ref_len;
        per_utterance.push_back(r->alignment.errors());
        scored_ids.push_back(id);
    }
};

struct SlotScores {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

inline SlotScores slot_scores_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    SlotScores s{0.0, 0.0, 0.0, tp, fp, fn};
    if (tp + fp + fn == 0) {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    s.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    s.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

/// Token-level micro P/R/F1 over the non-zero classes at masked positions.
/// With no gold and no predicted slots the scores are all 1.
inline SlotScores slot_f1(const std::vector<int>& predicted, const std::vector<int>& gold,
                          const std::vector<bool>& mask) {
    if (predicted.size() != gold.size() || gold.size() != mask.size()) {
        throw UsageError("slot_f1: sequences of different lengths (" + std::to_string(predicted.size()) + ", " +
                         std::to_string(gold.size()) + ", " + std::to_string(mask.size()) + ")");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (!mask[i]) continue;
        const int p = predicted[i], g = gold[i];
        if (p != 0 && p == g) ++tp;
        if (p != 0 && p != g) ++fp;
        if (g != 0 && p != g) ++fn;
    }
    return slot_scores_from_counts(tp, fp, fn);
}

struct MpssweResult {
    double z = 0.0;
    double p_value = 1.0;
    bool degenerate = false;
    std::size_t n = 0;
    double mean_difference = 0.0;
};

/// Matched-pairs test on per-segment error differences d_i = a_i - b_i.
/// Z = mean(d) sqrt(n) / s_d with the n-1 sample deviation; two-tailed normal p.
/// All-zero differences give p = 1 flagged degenerate; constant non-zero
/// differences give an infinite Z, p = 0, also flagged.
inline MpssweResult mpsswe(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw UsageError("mpsswe: paired lists differ in length (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    const std::size_t n = a.size();
    if (n < 2) throw UsageError("mpsswe: need at least 2 segments, got " + std::to_string(n));
    MpssweResult r;
    r.n = n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    r.mean_difference = mean;
    if (sd == 0.0) {
        r.degenerate = true;
        if (mean == 0.0) return r;
        r.z = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
        return r;
    }
    r.z = mean * std::sqrt(static_cast<double>(n)) / sd;
    r.p_value = std::erfc(std::abs(r.z) / std::sqrt(2.0));
    return r;
}

inline MpssweResult mpsswe(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    return mpsswe(std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end()));
}

/// (base - sys) / base; NaN when the baseline is zero and the system is not.
inline double relative_reduction(double base, double sys) {
    if (base == 0.0) return sys == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return (base - sys) / base;
}

}  // namespace txlr::eval
