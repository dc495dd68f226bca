#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "txlr/corpus/io.hpp"
#include "txlr/evaluation/perplexity.hpp"
#include "txlr/evaluation/report.hpp"
#include "txlr/pipeline/bundle.hpp"
#include "txlr/pipeline/run_config.hpp"

namespace txlr::pipeline {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline void write_jsonl(const fs::path& path, const std::vector<config::json>& records) {
    std::string text;
    for (const auto& r : records) text += r.dump() + "\n";
    write_text(path, text);
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
inline void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw UsageError("output path '" + dir.string() + "' is not a directory");
        if (!fs::is_empty(dir) && !force) {
            throw UsageError("output directory '" + dir.string() + "' is not empty (use --force to overwrite)");
        }
    } else {
        fs::create_directories(dir);
    }
}

inline void echo_config(const fs::path& dir, const RunConfig& cfg) {
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
}


struct Splits {
    std::vector<corpus::Conversation> train, valid, test;
};

/// Seeded shuffle of conversation indices, cut by the configured fractions.
/// Each split keeps corpus order.
inline Splits split_corpus(const std::vector<corpus::Conversation>& convs, double train_fraction, double valid_fraction,
                           std::uint64_t seed) {
    std::vector<std::size_t> idx(convs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng("split", seed);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    const auto n = static_cast<double>(convs.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    const auto n_valid = std::min(convs.size() - n_train, static_cast<std::size_t>(std::llround(valid_fraction * n)));
    auto take = [&](std::size_t from, std::size_t to) {
        std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(from), idx.begin() + static_cast<std::ptrdiff_t>(to));
        std::sort(part.begin(), part.end());
        std::vector<corpus::Conversation> out;
        for (auto i : part) out.push_back(convs[i]);
        return out;
    };
    return {take(0, n_train), take(n_train, n_train + n_valid), take(n_train + n_valid, convs.size())};
}

inline void cmd_generate(const RunConfig& cfg, const fs::path& out_dir, bool force) {
    validate(cfg);
    prepare_output_dir(out_dir, force);
    const auto corpus = corpus::generate_synthetic(cfg.corpus.synthetic, cfg.seed);
    const auto splits = split_corpus(corpus.conversations, cfg.corpus.train_fraction, cfg.corpus.valid_fraction, cfg.seed);
    corpus::write_corpus((out_dir / "train.jsonl").string(), {corpus.header, splits.train});
    corpus::write_corpus((out_dir / "valid.jsonl").string(), {corpus.header, splits.valid});
    corpus::write_corpus((out_dir / "test.jsonl").string(), {corpus.header, splits.test});
    echo_config(out_dir, cfg);
}


using Progress = std::function<void(const std::string&)>;

/// Domain embeddings for a fusion model, from the configured source.
inline std::optional<embedding::EmbeddingTable> resolve_embeddings(const RunConfig& cfg,
                                                                   const std::vector<corpus::Conversation>& train) {
    if (!cfg.model.fusion.enabled) return std::nullopt;
    embedding::EmbeddingTable table;
    switch (cfg.embeddings.source) {
        case EmbeddingSource::none:
            throw UsageError("fusion is on but no embeddings were configured (use --embeddings FILE or --pseudo-embeddings)");
        case EmbeddingSource::pseudo:
            table = embedding::pseudo_embeddings(train, cfg.model.fusion.d_embed, cfg.seed, cfg.embeddings.pseudo_tokens);
            break;
        case EmbeddingSource::file: table = embedding::load_embedding_file(cfg.embeddings.path); break;
    }
    if (table.empty()) throw DataError("fusion is on but the embedding source provided no domains");
    if (table.dim() != cfg.model.fusion.d_embed) {
        throw DataError("embeddings have " + std::to_string(table.dim()) + " dims, model.fusion.d_embed is " +
                        std::to_string(cfg.model.fusion.d_embed));
    }
    return table;
}

struct TrainOutcome {
    double best_ppl = 0.0;
    std::size_t best_step = 0;
    std::size_t steps = 0;
};

template <typename T>
TrainOutcome train_with(const RunConfig& cfg, const corpus::Corpus& train, const corpus::Corpus& valid,
                        const fs::path& out_dir, const std::optional<fs::path>& resume, const Progress& progress) {
    const auto slots = slot_scheme_for(cfg, train.header);
    const auto vocab = corpus::build_vocab(train.conversations, cfg.corpus.vocab_size, train.header.dialogue_acts);
    model::ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    mc.n_slot_classes = slots.num_classes();
    const auto embeddings = resolve_embeddings(cfg, train.conversations);
    const embedding::EmbeddingTable* table = embeddings ? &*embeddings : nullptr;

    model::LanguageModel<T> model(mc, cfg.seed);
    const auto data = cfg.training.data_options();
    training::Trainer<T> trainer(model, training::prepare_sessions(train.conversations, vocab, mc, data, slots),
                                 training::prepare_sessions(valid.conversations, vocab, mc, data, slots), cfg.training,
                                 table);
    if (resume) {
        auto r = BinaryReader::from_file(resume->string());
        trainer.load_state(r);
    }

    std::ofstream sidecar(out_dir / "train.log", resume ? std::ios::app : std::ios::trunc);
    trainer.run([&](const config::json& rec) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
        sidecar << stamp << " " << rec.dump() << "\n";
        sidecar.flush();
        if (progress) progress(rec.dump());
    });

    BinaryWriter state;
    trainer.save_state(state);
    state.write_file((out_dir / "state.bin").string());
    write_jsonl(out_dir / "metrics.jsonl", trainer.log());

    trainer.restore_best();
    ModelMeta meta{mc, vocab, slots, embeddings, trainer.best_step(), trainer.best_ppl()};
    save_model((out_dir / "model.ckpt").string(), model, meta);
    if (embeddings) embedding::write_embedding_file(*embeddings, (out_dir / "embeddings.txt").string());
    return {trainer.best_ppl(), trainer.best_step(), trainer.step_count()};
}

inline TrainOutcome cmd_train(const RunConfig& cfg, const fs::path& corpus_dir, const fs::path& out_dir, bool force,
                              const std::optional<fs::path>& resume = std::nullopt, const Progress& progress = {}) {
    validate(cfg);
    const auto train = corpus::parse_corpus((corpus_dir / "train.jsonl").string());
    const auto valid = corpus::parse_corpus((corpus_dir / "valid.jsonl").string());
    if (train.conversations.empty()) throw DataError("'" + (corpus_dir / "train.jsonl").string() + "' has no conversations");
    if (cfg.model.fusion.enabled && cfg.embeddings.source == EmbeddingSource::none) (void)resolve_embeddings(cfg, {});
    // A resumed run writes into its own directory again.
    prepare_output_dir(out_dir, force || resume.has_value());
    echo_config(out_dir, cfg);
    return cfg.precision == 64 ? train_with<double>(cfg, train, valid, out_dir, resume, progress)
                               : train_with<float>(cfg, train, valid, out_dir, resume, progress);
}


inline std::uint32_t checkpoint_width(const std::string& path) {
    auto r = BinaryReader::from_file(path);
    return read_checkpoint_header(r).scalar_width;
}

struct RescoreSummary {
    std::size_t user_turns = 0;
    std::size_t changed_top = 0;
    std::vector<std::string> warnings;
};

template <typename T>
RescoreSummary rescore_with(const std::string& checkpoint, const std::vector<rescoring::Record>& records,
                            const rescoring::RescoreOptions& opts, const std::optional<std::string>& embeddings_path,
                            const fs::path& out_file) {
    auto loaded = load_model<T>(checkpoint);
    std::optional<embedding::EmbeddingTable> table = loaded.meta.embeddings;
    if (embeddings_path) table = embedding::load_embedding_file(*embeddings_path);
    rescoring::Rescorer<T> rescorer(loaded.model, loaded.meta.vocab, table ? &*table : nullptr);
    const auto res = rescoring::rescore_stream(rescorer, records, opts);

    RescoreSummary summary;
    summary.warnings = res.warnings;
    std::string text;
    std::size_t k = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (const auto* nb = std::get_if<rescoring::NBestList>(&records[i])) {
            const auto& turn = res.turns[k++];
            text += rescoring::rescored_to_json(*nb, turn).dump() + "\n";
            ++summary.user_turns;
            if (turn.ranked.front().hypothesis.first_pass_rank != 0) ++summary.changed_top;
        } else {
            text += rescoring::record_to_json(records[i]).dump() + "\n";
        }
    }
    write_text(out_file, text);
    return summary;
}

inline RescoreSummary cmd_rescore(const std::string& checkpoint, const std::string& nbest_file, const fs::path& out_file,
                                  const rescoring::RescoreOptions& opts,
                                  const std::optional<std::string>& embeddings_path = std::nullopt) {
    const auto records = rescoring::load_nbest_file(nbest_file);
    return checkpoint_width(checkpoint) == 8 ? rescore_with<double>(checkpoint, records, opts, embeddings_path, out_file)
                                             : rescore_with<float>(checkpoint, records, opts, embeddings_path, out_file);
}


inline eval::StopwordSet stopwords_for(const RunConfig& cfg) {
    return cfg.evaluation.stopwords.empty() ? eval::default_stopwords() : eval::load_stopwords(cfg.evaluation.stopwords);
}

/// Single system: WER/CWER report. With `compare`, `hypotheses` is the
/// baseline and `compare` the system under test.
inline config::json cmd_evaluate_transcripts(const RunConfig& cfg, const std::string& reference,
                                             const std::string& hypotheses, const std::optional<std::string>& compare) {
    const auto stop = stopwords_for(cfg);
    const auto ref = eval::load_transcripts(reference, eval::TranscriptRole::reference);
    const auto base = eval::score_system(ref, eval::load_transcripts(hypotheses, eval::TranscriptRole::hypothesis), stop,
                                         "'" + hypotheses + "'");
    if (!compare) {
        auto j = eval::system_report(base, stop);
        j["hypotheses"] = hypotheses;
        return j;
    }
    const auto sys = eval::score_system(ref, eval::load_transcripts(*compare, eval::TranscriptRole::hypothesis), stop,
                                        "'" + *compare + "'");
    auto j = eval::comparison_report(base, sys, eval::compare_systems(base, sys), stop);
    j["baseline"]["hypotheses"] = hypotheses;
    j["system"]["hypotheses"] = *compare;
    return j;
}

template <typename T>
config::json evaluate_lm_with(const RunConfig& cfg, const std::string& checkpoint, const std::string& corpus_file,
                              const std::string& domain_override) {
    auto loaded = load_model<T>(checkpoint);
    const auto& meta = loaded.meta;
    const auto corpus = corpus::parse_corpus(corpus_file);
    training::DataOptions data = cfg.training.data_options();
    const auto sessions = training::prepare_sessions(corpus.conversations, meta.vocab, meta.config, data, meta.slots);
    const auto* table = meta.embeddings ? &*meta.embeddings : nullptr;
    const auto policy = eval::parse_mask_policy(cfg.evaluation.mask);
    const auto ppl = eval::perplexity(loaded.model, sessions, table, policy, domain_override);
    config::json j = {{"checkpoint", checkpoint}, {"corpus", corpus_file}, {"mask", cfg.evaluation.mask},
                      {"ppl", ppl.ppl},          {"mean_nll", ppl.mean_nll}, {"tokens", ppl.tokens}};
    if (!domain_override.empty()) j["domain_embedding"] = domain_override;
    if (meta.config.slot_head.enabled) {
        const auto e = training::evaluate_sessions(loaded.model, sessions, table, 0, domain_override);
        if (e.slots) {
            j["slot"] = {{"precision", e.slots->precision}, {"recall", e.slots->recall}, {"f1", e.slots->f1},
                         {"tp", e.slots->tp},               {"fp", e.slots->fp},         {"fn", e.slots->fn}};
        }
    }
    return j;
}

inline config::json cmd_evaluate_lm(const RunConfig& cfg, const std::string& checkpoint, const std::string& corpus_file,
                                    const std::string& domain_override = "") {
    return checkpoint_width(checkpoint) == 8 ? evaluate_lm_with<double>(cfg, checkpoint, corpus_file, domain_override)
                                             : evaluate_lm_with<float>(cfg, checkpoint, corpus_file, domain_override);
}


inline embedding::EmbeddingTable cmd_embed(const RunConfig& cfg, const std::string& corpus_file, const fs::path& out_file,
                                           std::size_t dim) {
    const auto corpus = corpus::parse_corpus(corpus_file);
    auto table = embedding::pseudo_embeddings(corpus.conversations, dim, cfg.seed, cfg.embeddings.pseudo_tokens);
    embedding::write_embedding_file(table, out_file.string());
    return table;
}

inline std::size_t cmd_make_nbest(const RunConfig& cfg, const std::string& corpus_file, const fs::path& out_file) {
    const auto corpus = corpus::parse_corpus(corpus_file);
    const auto records = rescoring::make_nbest_benchmark(corpus.conversations, cfg.corpus.synthetic, cfg.benchmark, cfg.seed);
    std::string text;
    std::size_t lists = 0;
    for (const auto& r : records) {
        text += rescoring::record_to_json(r).dump() + "\n";
        lists += std::holds_alternative<rescoring::NBestList>(r) ? 1 : 0;
    }
    write_text(out_file, text);
    return lists;
}

}  // namespace txlr::pipeline
