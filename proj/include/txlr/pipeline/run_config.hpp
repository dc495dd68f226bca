#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "txlr/config/strict_json.hpp"
#include "txlr/corpus/synthetic.hpp"
#include "txlr/embedding/provider.hpp"
#include "txlr/model/config.hpp"
#include "txlr/rescoring/benchmark.hpp"
#include "txlr/rescoring/rescorer.hpp"
#include "txlr/training/trainer.hpp"

namespace txlr::pipeline {

struct CorpusSection {
    corpus::SynthConfig synthetic = corpus::default_synth_config();
    double train_fraction = 0.8;
    double valid_fraction = 0.1;
    std::size_t vocab_size = 2000;
    // "binary" or "per-tag" slot classes.
    std::string slot_classes = "binary";
};

enum class EmbeddingSource { none, pseudo, file };

struct EmbeddingSection {
    EmbeddingSource source = EmbeddingSource::none;
    std::string path;
    embedding::PseudoTokens pseudo_tokens = embedding::PseudoTokens::slots;
};

struct EvaluationSection {
    std::string stopwords;  // empty: built-in list
    std::string mask = "user-words";
};

struct RunConfig {
    std::uint64_t seed = 1;
    // Scalar width for training: 32 or 64.
    int precision = 32;
    CorpusSection corpus;
    model::ModelConfig model;
    training::TrainingConfig training;
    rescoring::RescoreOptions rescoring;
    rescoring::BenchmarkConfig benchmark;
    EvaluationSection evaluation;
    EmbeddingSection embeddings;

    RunConfig() { training.seed = seed; }
};

inline const char* embedding_source_name(EmbeddingSource s) {
    switch (s) {
        case EmbeddingSource::none: return "none";
        case EmbeddingSource::pseudo: return "pseudo";
        case EmbeddingSource::file: return "file";
    }
    return "none";
}

inline EmbeddingSource parse_embedding_source(const std::string& s) {
    if (s == "none") return EmbeddingSource::none;
    if (s == "pseudo") return EmbeddingSource::pseudo;
    if (s == "file") return EmbeddingSource::file;
    throw UsageError("unknown embedding source '" + s + "' (expected none, pseudo or file)");
}

inline void validate(const RunConfig& c) {
    if (c.precision != 32 && c.precision != 64) throw UsageError("precision must be 32 or 64");
    const auto& k = c.corpus;
    if (!(k.train_fraction > 0.0) || !(k.valid_fraction >= 0.0) || k.train_fraction + k.valid_fraction > 1.0) {
        throw UsageError("corpus: train_fraction + valid_fraction must lie in (0, 1]");
    }
    if (k.slot_classes != "binary" && k.slot_classes != "per-tag") {
        throw UsageError("corpus.slot_classes must be 'binary' or 'per-tag'");
    }
    corpus::validate_synth_config(k.synthetic);
    c.model.validate();
    c.training.validate();
    if (c.embeddings.source == EmbeddingSource::file && c.embeddings.path.empty()) {
        throw UsageError("embeddings.source is 'file' but embeddings.path is empty");
    }
}

/// training.seed is not configurable on its own; it always follows `seed`.
inline config::json to_json(const RunConfig& c) {
    auto train = training::training_config_to_json(c.training);
    train.erase("seed");
    auto rescore = rescoring::rescore_options_to_json(c.rescoring);
    rescore["benchmark"] = rescoring::benchmark_config_to_json(c.benchmark);
    return {{"seed", c.seed},
            {"precision", c.precision},
            {"corpus",
             {{"synthetic", corpus::synth_config_to_json(c.corpus.synthetic)},
              {"train_fraction", c.corpus.train_fraction},
              {"valid_fraction", c.corpus.valid_fraction},
              {"vocab_size", c.corpus.vocab_size},
              {"slot_classes", c.corpus.slot_classes}}},
            {"model", model::model_config_to_json(c.model)},
            {"training", train},
            {"rescoring", rescore},
            {"evaluation", {{"stopwords", c.evaluation.stopwords}, {"mask", c.evaluation.mask}}},
            {"embeddings",
             {{"source", embedding_source_name(c.embeddings.source)},
              {"path", c.embeddings.path},
              {"pseudo_tokens", embedding::pseudo_tokens_name(c.embeddings.pseudo_tokens)}}}};
}

/// Overlays `j` onto `base`. Every key is checked; unknown keys are errors.
inline RunConfig from_json(const config::json& j, RunConfig c, const std::string& where = "config") {
    config::StrictObject o(j, where);
    o.opt("seed", c.seed);
    o.opt("precision", c.precision);
    if (o.has("corpus")) {
        config::StrictObject k(o.raw("corpus"), o.path("corpus"));
        if (k.has("synthetic")) {
            c.corpus.synthetic = corpus::synth_config_from_json(k.raw("synthetic"), c.corpus.synthetic, k.path("synthetic"));
        }
        k.opt("train_fraction", c.corpus.train_fraction);
        k.opt("valid_fraction", c.corpus.valid_fraction);
        k.opt("vocab_size", c.corpus.vocab_size);
        k.opt("slot_classes", c.corpus.slot_classes);
        k.finish();
    }
    if (o.has("model")) c.model = model::model_config_from_json(o.raw("model"), c.model, o.path("model"));
    if (o.has("training")) {
        const auto& t = o.raw("training");
        if (t.is_object() && t.contains("seed")) throw UsageError(o.path("training") + ".seed: set the top-level 'seed' instead");
        c.training = training::training_config_from_json(t, c.training, o.path("training"));
    }
    if (o.has("rescoring")) {
        auto r = o.raw("rescoring");
        if (r.is_object() && r.contains("benchmark")) {
            c.benchmark = rescoring::benchmark_config_from_json(r["benchmark"], c.benchmark, o.path("rescoring") + ".benchmark");
            r.erase("benchmark");
        }
        c.rescoring = rescoring::rescore_options_from_json(r, c.rescoring, o.path("rescoring"));
    }
    if (o.has("evaluation")) {
        config::StrictObject e(o.raw("evaluation"), o.path("evaluation"));
        e.opt("stopwords", c.evaluation.stopwords);
        e.opt("mask", c.evaluation.mask);
        e.finish();
    }
    if (o.has("embeddings")) {
        config::StrictObject e(o.raw("embeddings"), o.path("embeddings"));
        if (e.has("source")) c.embeddings.source = parse_embedding_source(e.get<std::string>("source"));
        e.opt("path", c.embeddings.path);
        if (e.has("pseudo_tokens")) {
            c.embeddings.pseudo_tokens = embedding::parse_pseudo_tokens(e.get<std::string>("pseudo_tokens"));
        }
        e.finish();
    }
    o.finish();
    c.training.seed = c.seed;
    return c;
}

inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    config::json j;
    try {
        j = config::json::parse(ss.str());
    } catch (const config::json::parse_error& e) {
        throw UsageError("config file '" + path + "': invalid JSON (" + e.what() + ")");
    }
    return from_json(j, std::move(base), path);
}

/// Per-tag classes follow the tag list declared in the corpus header.
inline corpus::SlotScheme slot_scheme_for(const RunConfig& c, const corpus::CorpusHeader& header) {
    if (c.corpus.slot_classes == "binary") return corpus::SlotScheme::binary();
    return corpus::SlotScheme(header.slot_tags, true);
}

}  // namespace txlr::pipeline
