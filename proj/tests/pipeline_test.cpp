#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "txlr/pipeline/bundle.hpp"
#include "txlr/pipeline/commands.hpp"
#include "txlr/pipeline/run_config.hpp"

using namespace txlr;
using namespace txlr::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("txlr-pipeline-test-" + name);
    fs::remove_all(p);
    return p;
}

RunConfig tiny_run() {
    RunConfig c = from_json(config::json::parse(R"({
        "seed": 3, "precision": 64,
        "corpus": {"synthetic": {"num_conversations": 40}},
        "model": {"n_layers": 1, "d_model": 16, "n_heads": 2, "d_ff": 32, "segment_len": 6, "memory_len": 6},
        "training": {"max_steps": 3, "eval_every": 3, "batch_size": 2}
    })"), {});
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(RunConfig, UnknownKeysAreRejectedWithTheirPath) {
    try {
        from_json(config::json::parse(R"({"model": {"d_modle": 8}})"), {});
        FAIL();
    } catch (const UsageError& e) {
        EXPECT_NE(std::string(e.what()).find("d_modle"), std::string::npos) << e.what();
    }
    EXPECT_THROW(from_json(config::json::parse(R"({"bogus": 1})"), {}), UsageError);
    EXPECT_THROW(from_json(config::json::parse(R"({"training": {"seed": 4}})"), {}), UsageError);
}

TEST(RunConfig, SeedDrivesTrainingSeedAndRoundTrips) {
    const auto c = from_json(config::json::parse(R"({"seed": 42, "training": {"learning_rate": 0.01}})"), {});
    EXPECT_EQ(c.training.seed, 42u);
    EXPECT_EQ(c.training.learning_rate, 0.01);
    const auto again = from_json(to_json(c), {});
    EXPECT_EQ(to_json(again), to_json(c));
}

TEST(RunConfig, ValidationCatchesBadValues) {
    RunConfig c;
    c.precision = 16;
    EXPECT_THROW(validate(c), UsageError);
    c = {};
    c.corpus.train_fraction = 0.95;
    c.corpus.valid_fraction = 0.1;
    EXPECT_THROW(validate(c), UsageError);
    c = {};
    c.embeddings.source = EmbeddingSource::file;
    EXPECT_THROW(validate(c), UsageError);
    EXPECT_THROW(validate(from_json(config::json::parse(R"({"training": {"learning_rate": 0}})"), {})), UsageError);
}

TEST(Split, DeterministicDisjointAndBalanced) {
    const auto corpus = corpus::generate_synthetic(test::small_synth(200), 1);
    const auto a = split_corpus(corpus.conversations, 0.8, 0.1, 5);
    const auto b = split_corpus(corpus.conversations, 0.8, 0.1, 5);
    EXPECT_EQ(a.train.size(), 160u);
    EXPECT_EQ(a.valid.size(), 20u);
    EXPECT_EQ(a.test.size(), 20u);
    std::set<std::string> ids;
    for (const auto* part : {&a.train, &a.valid, &a.test}) {
        std::set<std::string> domains;
        for (const auto& c : *part) {
            EXPECT_TRUE(ids.insert(c.id).second);
            domains.insert(c.domain);
        }
        EXPECT_EQ(domains.size(), 2u);
    }
    for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].id, b.test[i].id);
    const auto other = split_corpus(corpus.conversations, 0.8, 0.1, 6);
    bool differs = false;
    for (std::size_t i = 0; i < a.test.size(); ++i) differs = differs || a.test[i].id != other.test[i].id;
    EXPECT_TRUE(differs);
}

TEST(Bundle, TrainedCheckpointRoundTrips) {
    const auto cfg = tiny_run();
    const auto corpus_dir = scratch("corpus"), out = scratch("model");
    cmd_generate(cfg, corpus_dir, false);
    EXPECT_THROW(cmd_generate(cfg, corpus_dir, false), UsageError);
    const auto outcome = cmd_train(cfg, corpus_dir, out, false);
    EXPECT_EQ(outcome.steps, 3u);
    for (const char* f : {"model.ckpt", "state.bin", "metrics.jsonl", "train.log"}) EXPECT_TRUE(fs::exists(out / f)) << f;

    auto a = load_model<double>((out / "model.ckpt").string());
    auto b = load_model<float>((out / "model.ckpt").string());
    EXPECT_EQ(a.meta.best_step, outcome.best_step);
    EXPECT_EQ(a.meta.config.vocab_size, a.meta.vocab.size());
    const auto& pa = a.model.params().all();
    const auto& pb = b.model.params().all();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const auto va = pa[i].var.value().values();
        const auto vb = pb[i].var.value().values();
        for (std::size_t k = 0; k < va.size(); ++k) EXPECT_EQ(static_cast<float>(va[k]), vb[k]);
    }

    // Saving the loaded model reproduces the file byte for byte.
    save_model((out / "again.ckpt").string(), a.model, a.meta);
    EXPECT_EQ(slurp(out / "again.ckpt"), slurp(out / "model.ckpt"));

    // A second run with the same config writes identical artifacts.
    const auto out2 = scratch("model2");
    cmd_train(cfg, corpus_dir, out2, false);
    EXPECT_EQ(slurp(out2 / "model.ckpt"), slurp(out / "model.ckpt"));
    EXPECT_EQ(slurp(out2 / "metrics.jsonl"), slurp(out / "metrics.jsonl"));
    fs::remove_all(corpus_dir);
    fs::remove_all(out);
    fs::remove_all(out2);
}

TEST(Bundle, CorruptCheckpointsAreDataErrors) {
    const auto dir = scratch("corrupt");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    }
    EXPECT_THROW(load_model<float>((dir / "junk.ckpt").string()), DataError);
    EXPECT_THROW(load_model<float>((dir / "missing.ckpt").string()), DataError);

    model::LanguageModel<float> m(test::tiny_config(), 1);
    ModelMeta meta{m.config(), corpus::build_vocab({test::sample_conversation()}, 100), {}, std::nullopt, 0, 0.0};
    meta.config.vocab_size = meta.vocab.size();
    model::LanguageModel<float> good(meta.config, 1);
    save_model((dir / "good.ckpt").string(), good, meta);
    auto bytes = slurp(dir / "good.ckpt");
    bytes.resize(bytes.size() - 7);
    {
        std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes;
    }
    EXPECT_NO_THROW(load_model<float>((dir / "good.ckpt").string()));
    EXPECT_THROW(load_model<float>((dir / "short.ckpt").string()), DataError);
    fs::remove_all(dir);
}

TEST(Train, FusionWithoutEmbeddingSourceFailsBeforeWriting) {
    auto cfg = tiny_run();
    cfg.model.fusion.enabled = true;
    const auto corpus_dir = scratch("corpus-fusion"), out = scratch("model-fusion");
    cmd_generate(cfg, corpus_dir, false);
    EXPECT_THROW(cmd_train(cfg, corpus_dir, out, false), UsageError);
    EXPECT_FALSE(fs::exists(out));
    cfg.embeddings.source = EmbeddingSource::pseudo;
    EXPECT_NO_THROW(cmd_train(cfg, corpus_dir, out, false));
    EXPECT_TRUE(fs::exists(out / "embeddings.txt"));
    auto loaded = load_model<float>((out / "model.ckpt").string());
    ASSERT_TRUE(loaded.meta.embeddings);
    EXPECT_EQ(loaded.meta.embeddings->size(), 2u);
    fs::remove_all(corpus_dir);
    fs::remove_all(out);
}
