#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "txlr/corpus/types.hpp"
#include "txlr/evaluation/metrics.hpp"
#include "txlr/evaluation/report.hpp"
#include "txlr/numerics/rng.hpp"

using namespace txlr;
using namespace txlr::eval;

namespace {

std::vector<std::string> w(const std::string& s) { return corpus::tokenize(s); }

// Plain recursive edit distance with memo.
std::size_t distance_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t i,
                            std::size_t j, std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = distance_oracle(a, b, i + 1, j + 1, memo) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, distance_oracle(a, b, i + 1, j, memo) + 1);
    best = std::min(best, distance_oracle(a, b, i, j + 1, memo) + 1);
    return memo[key] = best;
}

std::size_t distance_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    return distance_oracle(a, b, 0, 0, memo);
}

std::vector<std::string> random_words(Rng& rng, std::size_t max_len) {
    static const std::vector<std::string> pool{"the", "pods", "pads", "add", "tide", "to", "cart", "a", "my", "order"};
    std::vector<std::string> out(rng.uniform_index(max_len + 1));
    for (auto& x : out) x = pool[rng.uniform_index(pool.size())];
    return out;
}

}  // namespace

TEST(Wer, KnownExamples) {
    EXPECT_NEAR(wer(w("add tide pods"), w("add tide pause")).rate, 1.0 / 3.0, 1e-12);
    EXPECT_EQ(wer(w("add tide pods"), w("add tide pods")).rate, 0.0);
    EXPECT_EQ(wer(w("a b c"), {}).rate, 1.0);
    EXPECT_EQ(wer(w("a"), w("x y z")).rate, 3.0);
    EXPECT_THROW(wer({}, w("a")), DataError);
}

TEST(Wer, AlignmentOpsAreConsistent) {
    Rng rng("wer", 1);
    for (int i = 0; i < 300; ++i) {
        auto ref = random_words(rng, 8);
        if (ref.empty()) ref.push_back("x");
        const auto hyp = random_words(rng, 8);
        const auto a = align(ref, hyp);
        EXPECT_EQ(a.errors(), distance_oracle(ref, hyp));
        EXPECT_EQ(a.matches + a.subs + a.dels, ref.size());
        EXPECT_EQ(a.matches + a.subs + a.ins, hyp.size());
        EXPECT_EQ(a.ops.size(), a.matches + a.subs + a.dels + a.ins);
        // replay the script
        std::size_t r = 0, h = 0;
        for (auto op : a.ops) {
            if (op == EditOp::match) {
                EXPECT_EQ(ref[r], hyp[h]);
            } else if (op == EditOp::sub) {
                EXPECT_NE(ref[r], hyp[h]);
            }
            if (op != EditOp::ins) ++r;
            if (op != EditOp::del) ++h;
        }
        EXPECT_EQ(r, ref.size());
        EXPECT_EQ(h, hyp.size());
        // swapping sides swaps insertions and deletions
        const auto b = align(hyp, ref);
        EXPECT_EQ(b.errors(), a.errors());
        EXPECT_EQ(b.subs + b.ins + b.dels, a.subs + a.ins + a.dels);
    }
}

TEST(Cwer, StopwordsLeaveBeforeAlignment) {
    const auto stop = default_stopwords();
    EXPECT_EQ(cwer(w("add the tide pods"), w("add a tide pods"), stop)->rate, 0.0);
    EXPECT_NEAR(cwer(w("add the tide pods"), w("add the tide pads"), stop)->rate, 1.0 / 3.0, 1e-12);
    EXPECT_FALSE(cwer(w("i am the"), w("anything"), stop).has_value());
    EXPECT_EQ(content_words(w("i want the pods"), stop), w("want pods"));
}

TEST(Cwer, EmptyStopwordSetEqualsWer) {
    Rng rng("cwer", 2);
    const StopwordSet none;
    for (int i = 0; i < 100; ++i) {
        auto ref = random_words(rng, 10);
        if (ref.empty()) ref.push_back("x");
        const auto hyp = random_words(rng, 10);
        const auto c = cwer(ref, hyp, none);
        ASSERT_TRUE(c);
        EXPECT_EQ(c->rate, wer(ref, hyp).rate);
    }
}

TEST(Stopwords, HashIsStableAndContentSensitive) {
    EXPECT_EQ(default_stopwords().hash(), default_stopwords().hash());
    EXPECT_EQ(default_stopwords().hash().size(), 16u);
    EXPECT_NE(StopwordSet({"a"}).hash(), StopwordSet({"b"}).hash());
    EXPECT_EQ(StopwordSet({"a", "b"}, "x").hash(), StopwordSet({"b", "a"}, "y").hash());
}

TEST(CorpusErrors, MicroAverage) {
    const std::vector<std::pair<std::string, std::string>> pairs{
        {"add tide pods", "add tide pause"}, {"a b", "a b"}, {"one two three four", "one three four"},
        {"x", "y z"}, {"hello there", ""}};
    CorpusErrors e;
    std::size_t errors = 0, words = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto r = w(pairs[i].first), h = w(pairs[i].second);
        e.add(std::to_string(i), wer(r, h), r.size());
        errors += distance_oracle(r, h);
        words += r.size();
    }
    EXPECT_EQ(errors, 1u + 0 + 1 + 2 + 2);
    EXPECT_EQ(e.errors, errors);
    EXPECT_EQ(e.ref_words, words);
    EXPECT_NEAR(e.rate(), 6.0 / 12.0, 1e-12);
    EXPECT_EQ(e.per_utterance, (std::vector<std::size_t>{1, 0, 1, 2, 2}));
}

TEST(Mpsswe, WorkedExample) {
    std::vector<double> a, b;
    for (int rep = 0; rep < 10; ++rep) {
        for (double d : {1.0, 1.0, 1.0, 1.0, -1.0}) {
            a.push_back(d > 0 ? 2.0 : 0.0);
            b.push_back(d > 0 ? 1.0 : 1.0);
        }
    }
    const auto r = mpsswe(a, b);
    EXPECT_EQ(r.n, 50u);
    EXPECT_NEAR(r.mean_difference, 0.6, 1e-12);
    const double sd = std::sqrt(32.0 / 49.0);
    EXPECT_NEAR(r.z, 0.6 * std::sqrt(50.0) / sd, 1e-12);
    EXPECT_NEAR(r.z, 5.25, 0.01);
    EXPECT_LT(r.p_value, 0.001);
    EXPECT_FALSE(r.degenerate);
}

TEST(Mpsswe, AntisymmetricAndScaleInvariant) {
    Rng rng("mp", 3);
    for (int i = 0; i < 50; ++i) {
        const std::size_t n = 2 + rng.uniform_index(40);
        std::vector<double> a(n), b(n), a3(n), b3(n);
        for (std::size_t k = 0; k < n; ++k) {
            a[k] = static_cast<double>(rng.uniform_index(4));
            b[k] = static_cast<double>(rng.uniform_index(4));
            a3[k] = 3 * a[k];
            b3[k] = 3 * b[k];
        }
        const auto ab = mpsswe(a, b), ba = mpsswe(b, a);
        EXPECT_EQ(ab.z, -ba.z);
        EXPECT_EQ(ab.p_value, ba.p_value);
        EXPECT_GE(ab.p_value, 0.0);
        EXPECT_LE(ab.p_value, 1.0);
        const auto scaled = mpsswe(a3, b3);
        if (std::isfinite(ab.z)) {
            EXPECT_NEAR(scaled.z, ab.z, 1e-9 * std::max(1.0, std::abs(ab.z)));
        }
    }
}

TEST(Mpsswe, DegenerateCases) {
    const auto same = mpsswe(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3});
    EXPECT_TRUE(same.degenerate);
    EXPECT_EQ(same.p_value, 1.0);
    EXPECT_EQ(same.z, 0.0);
    const auto shifted = mpsswe(std::vector<double>{2, 3, 4}, std::vector<double>{1, 2, 3});
    EXPECT_TRUE(shifted.degenerate);
    EXPECT_EQ(shifted.p_value, 0.0);
    EXPECT_GT(shifted.z, 0.0);
    EXPECT_THROW(mpsswe(std::vector<double>{1}, std::vector<double>{1}), UsageError);
    EXPECT_THROW(mpsswe(std::vector<double>{1, 2}, std::vector<double>{1}), UsageError);
}

TEST(SlotF1, MatchesBruteForceSetCounting) {
    Rng rng("slot", 4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(30);
        const int classes = 2 + static_cast<int>(rng.uniform_index(3));
        std::vector<int> pred(n), gold(n);
        std::vector<bool> mask(n);
        std::set<std::pair<std::size_t, int>> ps, gs;
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes)));
            gold[i] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes)));
            mask[i] = rng.bernoulli(0.8);
            if (!mask[i]) continue;
            if (pred[i]) ps.insert({i, pred[i]});
            if (gold[i]) gs.insert({i, gold[i]});
        }
        std::size_t tp = 0;
        for (const auto& x : ps) tp += gs.count(x);
        const double p = ps.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(ps.size());
        const double r = gs.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(gs.size());
        double f = p + r == 0.0 ? 0.0 : 2 * p * r / (p + r);
        if (ps.empty() && gs.empty()) f = 1.0;
        EXPECT_NEAR(slot_f1(pred, gold, mask).f1, f, 1e-12);
    }
}

TEST(SlotF1, Extremes) {
    const std::vector<bool> all(4, true);
    EXPECT_EQ(slot_f1({0, 1, 1, 0}, {0, 1, 1, 0}, all).f1, 1.0);
    EXPECT_EQ(slot_f1({1, 0, 0, 1}, {0, 1, 1, 0}, all).f1, 0.0);
    EXPECT_EQ(slot_f1({0, 0, 0, 0}, {0, 1, 1, 0}, all).f1, 0.0);
    EXPECT_EQ(slot_f1({0, 0, 0, 0}, {0, 0, 0, 0}, all).f1, 1.0);
    EXPECT_THROW(slot_f1({0}, {0, 1}, all), UsageError);
}

TEST(RelativeReduction, Values) {
    EXPECT_NEAR(relative_reduction(0.2, 0.15), 0.25, 1e-12);
    EXPECT_EQ(relative_reduction(0.0, 0.0), 0.0);
    EXPECT_TRUE(std::isnan(relative_reduction(0.0, 0.1)));
}

TEST(Transcripts, IdsMustMatch) {
    std::istringstream r("{\"utterance_id\":\"u1\",\"text\":\"add tide pods\"}\n{\"utterance_id\":\"u2\",\"text\":\"the\"}\n");
    std::istringstream h("{\"utterance_id\":\"u1\",\"text\":\"add tide pause\"}\n");
    const auto ref = parse_transcripts(r, "ref", TranscriptRole::reference);
    const auto hyp = parse_transcripts(h, "hyp", TranscriptRole::hypothesis);
    try {
        score_system(ref, hyp, default_stopwords());
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("u2"), std::string::npos);
    }
}

TEST(Transcripts, ScoresWordsAndContentWords) {
    std::istringstream r("{\"utterance_id\":\"u1\",\"text\":\"add tide pods\"}\n{\"actor\":\"bot\",\"text\":\"x\"}\n"
                         "{\"utterance_id\":\"u2\",\"text\":\"the\"}\n");
    std::istringstream h(
        "{\"utterance_id\":\"u2\",\"text\":\"a\"}\n"
        "{\"utterance_id\":\"u1\",\"hypotheses\":[{\"text\":\"add tide pause\",\"acoustic_score\":0}]}\n");
    const auto s = score_system(parse_transcripts(r, "ref", TranscriptRole::reference),
                                parse_transcripts(h, "hyp", TranscriptRole::hypothesis), default_stopwords());
    EXPECT_EQ(s.word.errors, 2u);
    EXPECT_EQ(s.word.ref_words, 4u);
    EXPECT_EQ(s.content.excluded, 1u);
    EXPECT_NEAR(s.content.rate(), 1.0 / 3.0, 1e-12);
}
