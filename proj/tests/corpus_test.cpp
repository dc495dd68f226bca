#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "support.hpp"
#include "txlr/corpus/io.hpp"
#include "txlr/corpus/session.hpp"

using namespace txlr;
using namespace txlr::corpus;

namespace {

Corpus parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus_stream(in, "mem");
}

std::string header_line() { return header_to_json(test::sample_header()).dump() + "\n"; }

}  // namespace

TEST(CorpusIo, SnippetParsesInDialogueOrder) {
    Corpus c{test::sample_header(), {test::sample_conversation()}};
    const auto back = parse_text(serialize_corpus(c));
    ASSERT_EQ(back.conversations.size(), 1u);
    const std::vector<std::pair<Actor, std::string>> want = {
        {Actor::bot, "general-welcome"}, {Actor::user, "inform-intent"}, {Actor::bot, "request"},
        {Actor::user, "inform"},         {Actor::bot, "inform"},         {Actor::user, "thank-you"}};
    const auto& turns = back.conversations[0].turns;
    ASSERT_EQ(turns.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(turns[i].actor, want[i].first);
        EXPECT_EQ(turns[i].dialogue_act, want[i].second);
    }
}

TEST(CorpusIo, EmptyFileIsEmptyCorpus) { EXPECT_TRUE(parse_text("").conversations.empty()); }

TEST(CorpusIo, RoundTripOfGeneratedCorpusIsCanonical) {
    const auto corpus = generate_synthetic(test::small_synth(40), 3);
    const std::string text = serialize_corpus(corpus);
    const auto back = parse_text(text);
    EXPECT_EQ(back.header, corpus.header);
    EXPECT_EQ(back.conversations, corpus.conversations);
    EXPECT_EQ(serialize_corpus(back), text);
}

TEST(CorpusIo, OverlappingSpansFailAtTheirLine) {
    auto conv = test::sample_conversation();
    conv.turns[3].slot_spans = {{1, 3, "item"}, {2, 4, "item"}};
    const std::string text = header_line() + conversation_to_json(test::sample_conversation()).dump() + "\n" +
                             conversation_to_json(conv).dump() + "\n";
    try {
        parse_text(text);
        FAIL() << "expected a data error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("mem:3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("slot_spans"), std::string::npos) << e.what();
    }
}

TEST(CorpusIo, UnknownActListsDeclaredSet) {
    auto conv = test::sample_conversation();
    conv.turns[1].dialogue_act = "chit-chat";
    try {
        parse_text(header_line() + conversation_to_json(conv).dump() + "\n");
        FAIL() << "expected a data error";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("chit-chat"), std::string::npos);
        EXPECT_NE(msg.find("inform-intent"), std::string::npos);
    }
}

TEST(CorpusIo, MalformedRecordNamesLineAndField) {
    try {
        parse_text(header_line() + R"({"id": "x", "domain": "retail"})" + "\n");
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("mem:2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("turns"), std::string::npos) << msg;
    }
    EXPECT_THROW(parse_text(header_line() + "{not json\n"), DataError);
}

TEST(CorpusIo, ConversationWithoutUserTurnIsRejected) {
    auto conv = test::sample_conversation();
    conv.turns = {conv.turns[0]};
    EXPECT_THROW(parse_text(header_line() + conversation_to_json(conv).dump() + "\n"), DataError);
}

TEST(Augment, PrefixesUserTurnsWithThreeTokens) {
    const auto conv = test::sample_conversation();
    const auto aug = augment_dialogue_acts(conv, true);
    EXPECT_EQ(aug.turns[3].text, "<da> inform </da> my order number is abcdef");
    EXPECT_EQ(aug.turns[3].slot_spans[0], (SlotSpan{7, 8, "item"}));
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const auto before = tokenize(conv.turns[i].text).size();
        const auto after = tokenize(aug.turns[i].text).size();
        EXPECT_EQ(after, before + (conv.turns[i].actor == Actor::user ? 3u : 0u));
    }
}

TEST(Augment, SpanShiftsByThree) {
    Conversation c{"c", "retail", {test::turn(Actor::user, "a b c", "inform", {{1, 2, "item"}})}};
    EXPECT_EQ(augment_dialogue_acts(c, true).turns[0].slot_spans[0], (SlotSpan{4, 5, "item"}));
}

TEST(Augment, DisabledIsIdentity) {
    const auto conv = test::sample_conversation();
    EXPECT_EQ(augment_dialogue_acts(conv, false), conv);
}

TEST(Session, TwoTurnExample) {
    Conversation c{"c", "d", {test::turn(Actor::bot, "hello", "general-welcome"), test::turn(Actor::user, "hi", "inform")}};
    const auto vocab = build_vocab({c}, 50);
    for (bool on_bot : {false, true}) {
        SessionOptions opts;
        opts.loss_on_bot = on_bot;
        const auto s = assemble_session(c, vocab, opts);
        EXPECT_EQ(s.token_ids, (std::vector<int>{Vocabulary::kTurnBot, vocab.encode("hello"), Vocabulary::kTurnUser,
                                                 vocab.encode("hi")}));
        EXPECT_EQ(s.loss_mask, (std::vector<bool>{false, on_bot, false, true}));
    }
}

TEST(Session, SnippetHasSixBoundariesAndLengthIdentity) {
    const auto conv = test::sample_conversation();
    const auto vocab = build_vocab({conv}, 100);
    const auto s = assemble_session(conv, vocab);
    EXPECT_EQ(s.turn_boundaries.size(), 6u);
    std::size_t words = 0;
    for (const auto& t : conv.turns) words += tokenize(t.text).size();
    EXPECT_EQ(s.size(), words + conv.turns.size());
    EXPECT_EQ(s.slot_labels.size(), s.size());
    EXPECT_EQ(s.loss_mask.size(), s.size());
}

TEST(Session, EmptyUserTextEmitsOnlyControlToken) {
    Conversation c{"c", "d", {test::turn(Actor::user, "", "inform")}};
    const auto s = assemble_session(c, build_vocab({c}, 20));
    EXPECT_EQ(s.token_ids, std::vector<int>{Vocabulary::kTurnUser});
    EXPECT_EQ(s.loss_mask, std::vector<bool>{false});
}

TEST(Session, UnknownWordsAreCounted) {
    const auto conv = test::sample_conversation();
    Vocabulary reserved_only;
    const auto s = assemble_session(conv, reserved_only);
    std::size_t words = 0;
    for (const auto& t : conv.turns) words += tokenize(t.text).size();
    EXPECT_EQ(s.unk_count, words);
}

TEST(Session, SlotLabelsSurviveThePipeline) {
    const auto corpus = generate_synthetic(test::small_synth(30), 5);
    const auto vocab = build_vocab(corpus.conversations, 500, corpus.header.dialogue_acts);
    for (bool da : {false, true}) {
        for (const auto& conv : corpus.conversations) {
            const auto aug = augment_dialogue_acts(conv, da);
            const auto s = assemble_session(aug, vocab);
            std::size_t marked = 0;
            for (std::size_t t = 0; t < aug.turns.size(); ++t) {
                const auto words = tokenize(aug.turns[t].text);
                const std::size_t base = s.turn_boundaries[t] + 1;
                for (const auto& span : aug.turns[t].slot_spans) {
                    for (std::size_t p = span.start; p < span.end; ++p) {
                        EXPECT_NE(s.slot_labels[base + p], 0);
                        EXPECT_EQ(s.token_ids[base + p], vocab.encode(words[p]));
                        ++marked;
                    }
                }
            }
            std::size_t nonzero = 0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s.kinds[i] == PositionKind::control) {
                    EXPECT_EQ(s.slot_labels[i], 0);
                }
                nonzero += s.slot_labels[i] != 0;
            }
            EXPECT_EQ(nonzero, marked);
        }
    }
}

TEST(Session, PerTagClassesFollowTagOrder) {
    SlotScheme scheme({"drink", "item"}, true);
    EXPECT_EQ(scheme.num_classes(), 3u);
    EXPECT_EQ(scheme.class_of("drink"), 1);
    EXPECT_EQ(scheme.class_of("item"), 2);
    EXPECT_THROW(scheme.class_of("size"), DataError);
    EXPECT_EQ(SlotScheme::binary().class_of("anything"), 1);
}

TEST(Vocab, FrequencyThenLexicographicOrder) {
    Conversation c{"c", "d", {test::turn(Actor::user, "b a a c b d", "inform")}};
    const auto v = build_vocab({c}, 20);
    const std::size_t base = reserved::all.size() + 1;
    EXPECT_EQ(v.decode(static_cast<int>(base)), "a");
    EXPECT_EQ(v.decode(static_cast<int>(base + 1)), "b");
    EXPECT_EQ(v.decode(static_cast<int>(base + 2)), "c");
    EXPECT_EQ(v.decode(static_cast<int>(base + 3)), "d");
}

TEST(Vocab, ReservedFirstThenActsAndDenseIds) {
    const auto corpus = generate_synthetic(test::small_synth(20), 1);
    const auto v = build_vocab(corpus.conversations, 2000);
    for (std::size_t i = 0; i < reserved::all.size(); ++i) EXPECT_EQ(v.decode(static_cast<int>(i)), reserved::all[i]);
    EXPECT_TRUE(v.contains("inform"));
    EXPECT_TRUE(v.contains("request"));
    for (std::size_t id = 0; id < v.size(); ++id) EXPECT_EQ(v.encode(v.decode(static_cast<int>(id))), static_cast<int>(id));
}

TEST(Vocab, TruncatesAndRejectsTooSmall) {
    const auto corpus = generate_synthetic(test::small_synth(20), 1);
    EXPECT_EQ(build_vocab(corpus.conversations, 30).size(), 30u);
    EXPECT_THROW(build_vocab(corpus.conversations, 10), UsageError);
}

TEST(Vocab, PureFunctionOfTokenMultiset) {
    auto corpus = generate_synthetic(test::small_synth(30), 2);
    const auto a = build_vocab(corpus.conversations, 200);
    std::reverse(corpus.conversations.begin(), corpus.conversations.end());
    for (auto& c : corpus.conversations) std::reverse(c.turns.begin(), c.turns.end());
    EXPECT_EQ(build_vocab(corpus.conversations, 200), a);
}

TEST(Synthetic, DeterministicGivenSeed) {
    const auto cfg = test::small_synth(50);
    EXPECT_EQ(serialize_corpus(generate_synthetic(cfg, 9)), serialize_corpus(generate_synthetic(cfg, 9)));
    EXPECT_NE(serialize_corpus(generate_synthetic(cfg, 9)), serialize_corpus(generate_synthetic(cfg, 10)));
}

TEST(Synthetic, DomainsAreRoughlyBalanced) {
    const auto corpus = generate_synthetic(test::small_synth(400), 4);
    std::map<std::string, int> counts;
    for (const auto& c : corpus.conversations) ++counts[c.domain];
    ASSERT_EQ(counts.size(), 2u);
    for (const auto& [d, n] : counts) EXPECT_NEAR(n, 200, 40) << d;
}

TEST(Synthetic, EntitiesOnlyFollowTheirContextPhrase) {
    const auto cfg = test::small_synth(200);
    const auto contexts = entity_contexts(cfg);
    const auto corpus = generate_synthetic(cfg, 6);
    std::size_t checked = 0;
    for (const auto& conv : corpus.conversations) {
        for (std::size_t t = 0; t < conv.turns.size(); ++t) {
            for (const auto& span : conv.turns[t].slot_spans) {
                if (conv.turns[t].actor != Actor::user) continue;
                const auto entity = tokenize(conv.turns[t].text)[span.start];
                ASSERT_GT(t, 0u);
                const std::string prev = conv.turns[t - 1].text;
                bool found = false;
                for (const auto& ctx : contexts.at(entity)) found = found || prev.find(ctx) != std::string::npos;
                EXPECT_TRUE(found) << entity << " after '" << prev << "'";
                ++checked;
            }
        }
    }
    EXPECT_GT(checked, 50u);
}

TEST(Synthetic, AverageTurnsAndValidity) {
    auto cfg = test::small_synth(300);
    cfg.avg_turns = 8;
    const auto corpus = generate_synthetic(cfg, 2);
    double total = 0;
    for (const auto& c : corpus.conversations) {
        validate_conversation(c, corpus.header, c.id);
        total += static_cast<double>(c.turns.size());
    }
    EXPECT_NEAR(total / 300.0, 8.0, 0.3);
}

TEST(Synthetic, EmptyCatalogIsRejected) {
    auto cfg = test::small_synth(10);
    cfg.domains[0].categories.clear();
    EXPECT_THROW(generate_synthetic(cfg, 1), UsageError);
}

TEST(Synthetic, NeverEmitsUnknownToken) {
    const auto corpus = generate_synthetic(test::small_synth(100), 8);
    for (const auto& c : corpus.conversations)
        for (const auto& t : c.turns)
            for (const auto& w : tokenize(t.text)) EXPECT_NE(w, reserved::unk);
}
