#pragma once

// Embedding file format, text, UTF-8:
//
//   txlr-embeddings 1 <dim> <count>
//   <domain> <v_1> <v_2> ... <v_dim>
//   ... (count records)
//
// Fields are separated by single spaces; values are decimal floating point.
// Domain tags contain no whitespace. Lines starting with '#' are comments.
// A file with no lines at all is an empty table.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "txlr/corpus/types.hpp"
#include "txlr/corpus/vocab.hpp"
#include "txlr/numerics/rng.hpp"

namespace txlr::embedding {

struct DomainEmbedding {
    std::string domain;
    std::vector<double> vector;
    std::string source;
};

inline std::vector<double> l2_normalize(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
    return v;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw UsageError("cosine: dimension mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
    return ab / std::sqrt(aa * bb);
}

/// Domain tag -> embedding, all of one dimension.
class EmbeddingTable {
public:
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    bool contains(const std::string& domain) const { return entries_.contains(domain); }

    void insert(DomainEmbedding e) {
        if (e.vector.empty()) throw DataError("embedding for domain '" + e.domain + "' is empty");
        for (double x : e.vector) {
            if (!std::isfinite(x)) throw DataError("embedding for domain '" + e.domain + "' has a non-finite entry");
        }
        if (!entries_.empty() && e.vector.size() != dim_) {
            throw DataError("embedding for domain '" + e.domain + "' has " + std::to_string(e.vector.size()) +
                            " dims, table has " + std::to_string(dim_));
        }
        dim_ = e.vector.size();
        entries_[e.domain] = std::move(e);
    }

    const DomainEmbedding& at(const std::string& domain) const {
        auto it = entries_.find(domain);
        if (it == entries_.end()) throw DataError("no embedding for domain '" + domain + "'");
        return it->second;
    }

    /// L2-normalized vector in the model's scalar type.
    template <typename T>
    std::vector<T> normalized(const std::string& domain) const {
        auto v = l2_normalize(at(domain).vector);
        return std::vector<T>(v.begin(), v.end());
    }

    const std::map<std::string, DomainEmbedding>& entries() const noexcept { return entries_; }

private:
    std::map<std::string, DomainEmbedding> entries_;
    std::size_t dim_ = 0;
};

inline EmbeddingTable parse_embeddings(std::istream& in, const std::string& source) {
    EmbeddingTable table;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0, count = 0;
    bool have_header = false;
    auto fail = [&](const std::string& m) { throw DataError(source + ":" + std::to_string(lineno) + ": " + m); };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        if (!have_header) {
            std::string magic;
            int version = 0;
            if (!(ls >> magic >> version >> dim >> count) || magic != "txlr-embeddings") {
                fail("expected header 'txlr-embeddings 1 <dim> <count>'");
            }
            if (version != 1) fail("unsupported embedding file version " + std::to_string(version));
            have_header = true;
            continue;
        }
        DomainEmbedding e;
        e.source = source;
        ls >> e.domain;
        std::string tok;
        while (ls >> tok) {
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') fail("bad number '" + tok + "'");
            if (!std::isfinite(v)) fail("non-finite value in embedding for domain '" + e.domain + "'");
            e.vector.push_back(v);
        }
        if (e.vector.size() != dim) {
            fail("embedding for domain '" + e.domain + "' has " + std::to_string(e.vector.size()) +
                 " values, header declares " + std::to_string(dim));
        }
        if (table.contains(e.domain)) fail("duplicate domain '" + e.domain + "'");
        table.insert(std::move(e));
    }
    if (have_header && table.size() != count) {
        throw DataError(source + ": header declares " + std::to_string(count) + " embeddings, found " +
                        std::to_string(table.size()));
    }
    return table;
}

inline EmbeddingTable load_embedding_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file '" + path + "'");
    return parse_embeddings(in, path);
}

inline std::string serialize_embeddings(const EmbeddingTable& table) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "txlr-embeddings 1 " << table.dim() << ' ' << table.size() << '\n';
    for (const auto& [domain, e] : table.entries()) {
        os << domain;
        for (double v : e.vector) os << ' ' << v;
        os << '\n';
    }
    return os.str();
}

inline void write_embedding_file(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << serialize_embeddings(table);
}

enum class PseudoTokens { all, slots };

inline const char* pseudo_tokens_name(PseudoTokens m) { return m == PseudoTokens::all ? "all" : "slots"; }
inline PseudoTokens parse_pseudo_tokens(const std::string& s) {
    if (s == "all") return PseudoTokens::all;
    if (s == "slots") return PseudoTokens::slots;
    throw UsageError("unknown pseudo-embedding token set '" + s + "' (expected all or slots)");
}

/// Random-projection bag of words: the mean of a seeded Gaussian vector per
/// token occurrence, L2-normalized. `slots` averages only tokens inside slot
/// spans (the domain's catalog words); `all` averages every non-control token.
inline DomainEmbedding pseudo_embedding(const std::vector<corpus::Conversation>& convs, const std::string& domain,
                                        std::size_t d_embed, std::uint64_t seed,
                                        PseudoTokens mode = PseudoTokens::slots) {
    if (d_embed == 0) throw UsageError("pseudo_embedding: d_embed must be > 0");
    if (convs.empty()) throw DataError("pseudo_embedding: empty corpus for domain '" + domain + "'");
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    auto take = [&](const std::string& w) {
        if (std::find(corpus::reserved::all.begin(), corpus::reserved::all.end(), w) != corpus::reserved::all.end()) return;
        ++counts[w];
        ++total;
    };
    for (const auto& c : convs) {
        for (const auto& t : c.turns) {
            const auto words = corpus::tokenize(t.text);
            if (mode == PseudoTokens::all) {
                for (const auto& w : words) take(w);
                continue;
            }
            for (const auto& span : t.slot_spans)
                for (std::size_t i = span.start; i < span.end && i < words.size(); ++i) take(words[i]);
        }
    }
    if (total == 0) {
        throw DataError("pseudo_embedding: no " + std::string(mode == PseudoTokens::slots ? "slot " : "") +
                        "tokens for domain '" + domain + "'");
    }

    std::vector<double> sum(d_embed, 0.0);
    for (const auto& [w, n] : counts) {
        Rng rng("pseudo/" + w, seed);
        for (std::size_t k = 0; k < d_embed; ++k) sum[k] += static_cast<double>(n) * rng.normal();
    }
    for (double& x : sum) x /= static_cast<double>(total);
    return {domain, l2_normalize(std::move(sum)),
            "pseudo:" + std::string(pseudo_tokens_name(mode)) + ":seed=" + std::to_string(seed)};
}

/// One pseudo embedding per domain tag found in `convs`.
inline EmbeddingTable pseudo_embeddings(const std::vector<corpus::Conversation>& convs, std::size_t d_embed,
                                        std::uint64_t seed, PseudoTokens mode = PseudoTokens::slots) {
    std::map<std::string, std::vector<corpus::Conversation>> by_domain;
    for (const auto& c : convs) by_domain[c.domain].push_back(c);
    EmbeddingTable table;
    for (const auto& [domain, cs] : by_domain) table.insert(pseudo_embedding(cs, domain, d_embed, seed, mode));
    return table;
}

}  // namespace txlr::embedding
