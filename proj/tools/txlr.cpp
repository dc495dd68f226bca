#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "txlr/pipeline/commands.hpp"

namespace {

using namespace txlr;
using pipeline::RunConfig;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
};

// "a.b.c=value" -> {"a": {"b": {"c": value}}}; value is parsed as JSON and
// falls back to a plain string.
config::json parse_set(const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key.path=value, got '" + expr + "'");
    const std::string path = expr.substr(0, eq), raw = expr.substr(eq + 1);
    config::json value = config::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    std::vector<std::string> keys;
    std::size_t start = 0;
    for (std::size_t dot; (dot = path.find('.', start)) != std::string::npos; start = dot + 1)
        keys.push_back(path.substr(start, dot - start));
    keys.push_back(path.substr(start));
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) value = config::json{{*it, value}};
    return value;
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg;
    std::string path = c.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("TXLR_CONFIG"); env && *env) path = env;
    }
    if (!path.empty()) cfg = pipeline::load_run_config(path, cfg);
    for (const auto& s : c.sets) cfg = pipeline::from_json(parse_set(s), cfg, "--set");
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.training.seed = *c.seed;
    }
    return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "Run config (JSON); defaults to $TXLR_CONFIG");
    cmd->add_option("--seed", c.seed, "Seed for every stochastic step");
    cmd->add_option("--set", c.sets, "Override one config field, e.g. --set training.max_steps=200");
}

void print_json(const config::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        pipeline::write_text(out, j.dump(2) + "\n");
    }
}

int fail(ErrorCategory category, const std::string& message) {
    std::cerr << "error[" << category_name(category) << "]: " << message << "\n";
    switch (category) {
        case ErrorCategory::usage: return 1;
        case ErrorCategory::data: return 2;
        case ErrorCategory::numeric: return 3;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"txlr: contextual Transformer-XL language models for n-best rescoring of dialogue ASR"};
    app.require_subcommand(1);
    Common common;
    std::function<void()> action;

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic corpus split into train/valid/test");
    std::string gen_out;
    bool gen_force = false;
    std::optional<std::size_t> gen_conversations;
    add_common(gen, common);
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--conversations", gen_conversations, "Number of conversations");
    gen->add_flag("--force", gen_force, "Overwrite a non-empty output directory");
    gen->callback([&] {
        action = [&] {
            auto cfg = resolve_config(common);
            if (gen_conversations) cfg.corpus.synthetic.num_conversations = *gen_conversations;
            pipeline::cmd_generate(cfg, gen_out, gen_force);
            std::cerr << "wrote " << gen_out << "/{train,valid,test}.jsonl\n";
        };
    });

    // train
    auto* tr = app.add_subcommand("train", "Train a language model and keep the best checkpoint by validation PPL");
    std::string tr_corpus, tr_out, tr_arch, tr_embeddings, tr_resume, tr_activation;
    bool tr_force = false, tr_da = false, tr_sd = false, tr_fusion = false, tr_ctx = false, tr_nonctx = false,
         tr_pseudo = false, tr_quiet = false;
    std::optional<std::size_t> tr_steps;
    std::optional<double> tr_lr;
    std::optional<int> tr_precision;
    add_common(tr, common);
    tr->add_option("--corpus", tr_corpus, "Corpus directory with train.jsonl and valid.jsonl")->required();
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_flag("--force", tr_force, "Overwrite a non-empty output directory");
    tr->add_flag("--da", tr_da, "Prefix user turns with dialogue-act tags");
    tr->add_flag("--joint-sd", tr_sd, "Add the slot-detection head and loss");
    tr->add_flag("--fusion", tr_fusion, "Fuse a domain embedding before the word head");
    tr->add_option("--arch", tr_arch, "txl or lstm")->check(CLI::IsMember({"txl", "lstm"}));
    auto* ctx = tr->add_flag("--contextual", tr_ctx, "Carry memory across turns");
    auto* nonctx = tr->add_flag("--non-contextual", tr_nonctx, "Reset memory at every turn");
    ctx->excludes(nonctx);
    auto* emb_file = tr->add_option("--embeddings", tr_embeddings, "Domain embedding file for --fusion");
    auto* emb_pseudo = tr->add_flag("--pseudo-embeddings", tr_pseudo, "Derive domain embeddings from the training corpus");
    emb_file->excludes(emb_pseudo);
    tr->add_option("--fusion-activation", tr_activation, "sigmoid, tanh or relu")
        ->check(CLI::IsMember({"sigmoid", "tanh", "relu"}));
    tr->add_option("--steps", tr_steps, "Training steps");
    tr->add_option("--lr", tr_lr, "Learning rate");
    tr->add_option("--precision", tr_precision, "32 or 64")->check(CLI::IsMember({32, 64}));
    tr->add_option("--resume", tr_resume, "Continue from a state.bin written by an earlier run");
    tr->add_flag("--quiet", tr_quiet, "Do not print metric records");
    tr->callback([&] {
        action = [&] {
            auto cfg = resolve_config(common);
            if (tr_da) cfg.model.dialogue_acts = true;
            if (tr_sd) cfg.model.slot_head.enabled = true;
            if (tr_fusion) cfg.model.fusion.enabled = true;
            if (!tr_arch.empty()) cfg.model.arch = model::parse_arch(tr_arch);
            if (tr_ctx) cfg.model.contextual = true;
            if (tr_nonctx) cfg.model.contextual = false;
            if (!tr_embeddings.empty()) {
                cfg.embeddings.source = pipeline::EmbeddingSource::file;
                cfg.embeddings.path = tr_embeddings;
            }
            if (tr_pseudo) cfg.embeddings.source = pipeline::EmbeddingSource::pseudo;
            if (!tr_activation.empty()) cfg.model.fusion.activation = model::parse_activation(tr_activation);
            if (tr_steps) cfg.training.max_steps = *tr_steps;
            if (tr_lr) cfg.training.learning_rate = *tr_lr;
            if (tr_precision) cfg.precision = *tr_precision;
            std::optional<std::filesystem::path> resume;
            if (!tr_resume.empty()) resume = tr_resume;
            pipeline::Progress progress;
            if (!tr_quiet) progress = [](const std::string& line) { std::cerr << line << "\n"; };
            const auto r = pipeline::cmd_train(cfg, tr_corpus, tr_out, tr_force, resume, progress);
            std::cerr << "best validation ppl " << r.best_ppl << " at step " << r.best_step << "; wrote " << tr_out
                      << "/model.ckpt\n";
        };
    });

    // rescore
    auto* rs = app.add_subcommand("rescore", "Rerank n-best lists with a trained model");
    std::string rs_ckpt, rs_nbest, rs_out, rs_commit, rs_embeddings;
    std::optional<double> rs_ac, rs_lm;
    bool rs_norm = false;
    add_common(rs, common);
    rs->add_option("--checkpoint", rs_ckpt, "model.ckpt from train")->required();
    rs->add_option("--nbest", rs_nbest, "N-best JSONL file")->required();
    rs->add_option("--out", rs_out, "Output JSONL file")->required();
    rs->add_option("--acoustic-scale", rs_ac, "Weight on acoustic scores");
    rs->add_option("--lm-scale", rs_lm, "Weight on LM log-probabilities");
    rs->add_flag("--length-normalize", rs_norm, "Divide LM scores by the number of scored tokens");
    rs->add_option("--commit", rs_commit, "Hypothesis fed to the session memory: rescored or first-pass")
        ->check(CLI::IsMember({"rescored", "first-pass"}));
    rs->add_option("--embeddings", rs_embeddings, "Replace the checkpoint's domain embeddings");
    rs->callback([&] {
        action = [&] {
            auto cfg = resolve_config(common);
            auto& o = cfg.rescoring;
            if (rs_ac) o.acoustic_scale = *rs_ac;
            if (rs_lm) o.lm_scale = *rs_lm;
            if (rs_norm) o.length_normalize = true;
            if (!rs_commit.empty()) o.commit = rescoring::parse_commit_policy(rs_commit);
            std::optional<std::string> emb;
            if (!rs_embeddings.empty()) emb = rs_embeddings;
            const auto s = pipeline::cmd_rescore(rs_ckpt, rs_nbest, rs_out, o, emb);
            for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
            std::cerr << "rescored " << s.user_turns << " lists, top hypothesis changed in " << s.changed_top << "\n";
        };
    });

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "WER/CWER of transcripts, or PPL/slot F1 of a checkpoint on a corpus");
    std::string ev_ref, ev_hyp, ev_cmp, ev_stop, ev_out, ev_ckpt, ev_corpus, ev_mask, ev_domain;
    add_common(ev, common);
    ev->add_option("--reference", ev_ref, "Reference transcripts (JSONL; n-best files use their 'reference')");
    ev->add_option("--hypotheses", ev_hyp, "Hypothesis transcripts (n-best files use their first hypothesis)");
    ev->add_option("--compare", ev_cmp, "Second hypothesis file; --hypotheses is then the baseline");
    ev->add_option("--stopwords", ev_stop, "Stop-word file, one word per line");
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint for PPL evaluation");
    ev->add_option("--corpus", ev_corpus, "Corpus file for PPL evaluation");
    ev->add_option("--mask", ev_mask, "Positions counted in PPL")->check(CLI::IsMember({"user-words", "loss-mask", "all-words"}));
    ev->add_option("--domain-embedding", ev_domain, "Use this domain's embedding for every conversation");
    ev->add_option("--out", ev_out, "Write the report here instead of stdout");
    ev->callback([&] {
        action = [&] {
            auto cfg = resolve_config(common);
            if (!ev_stop.empty()) cfg.evaluation.stopwords = ev_stop;
            if (!ev_mask.empty()) cfg.evaluation.mask = ev_mask;
            const bool lm_mode = !ev_ckpt.empty() || !ev_corpus.empty();
            const bool tx_mode = !ev_ref.empty() || !ev_hyp.empty() || !ev_cmp.empty();
            if (lm_mode == tx_mode) {
                throw UsageError("evaluate needs either --reference and --hypotheses, or --checkpoint and --corpus");
            }
            if (lm_mode) {
                if (ev_ckpt.empty() || ev_corpus.empty()) throw UsageError("--checkpoint and --corpus go together");
                print_json(pipeline::cmd_evaluate_lm(cfg, ev_ckpt, ev_corpus, ev_domain), ev_out);
                return;
            }
            if (ev_ref.empty() || ev_hyp.empty()) throw UsageError("--reference and --hypotheses are both required");
            std::optional<std::string> cmp;
            if (!ev_cmp.empty()) cmp = ev_cmp;
            print_json(pipeline::cmd_evaluate_transcripts(cfg, ev_ref, ev_hyp, cmp), ev_out);
        };
    });

    // embed
    auto* em = app.add_subcommand("embed", "Build pseudo domain embeddings from a corpus");
    std::string em_corpus, em_out, em_tokens;
    std::optional<std::size_t> em_dim;
    add_common(em, common);
    em->add_option("--corpus", em_corpus, "Corpus file")->required();
    em->add_option("--out", em_out, "Embedding file to write")->required();
    em->add_option("--dim", em_dim, "Embedding size (default: model.fusion.d_embed)");
    em->add_option("--tokens", em_tokens, "slots or all")->check(CLI::IsMember({"slots", "all"}));
    em->callback([&] {
        action = [&] {
            auto cfg = resolve_config(common);
            if (!em_tokens.empty()) cfg.embeddings.pseudo_tokens = embedding::parse_pseudo_tokens(em_tokens);
            const auto t = pipeline::cmd_embed(cfg, em_corpus, em_out, em_dim.value_or(cfg.model.fusion.d_embed));
            std::cerr << "wrote " << t.size() << " domain embeddings of size " << t.dim() << " to " << em_out << "\n";
        };
    });

    // make-nbest
    auto* mk = app.add_subcommand("make-nbest", "Build a synthetic n-best benchmark from a corpus");
    std::string mk_corpus, mk_out;
    std::optional<std::size_t> mk_n;
    std::optional<double> mk_noise;
    add_common(mk, common);
    mk->add_option("--corpus", mk_corpus, "Corpus file (usually test.jsonl)")->required();
    mk->add_option("--out", mk_out, "N-best JSONL file to write")->required();
    mk->add_option("--n-best", mk_n, "Hypotheses per list");
    mk->add_option("--noise", mk_noise, "Std. dev. of the acoustic scores");
    mk->callback([&] {
        action = [&] {
            auto cfg = resolve_config(common);
            if (mk_n) cfg.benchmark.n_best = *mk_n;
            if (mk_noise) cfg.benchmark.acoustic_noise = *mk_noise;
            cfg.benchmark = rescoring::benchmark_config_from_json(rescoring::benchmark_config_to_json(cfg.benchmark),
                                                                  cfg.benchmark, "make-nbest");
            const auto n = pipeline::cmd_make_nbest(cfg, mk_corpus, mk_out);
            std::cerr << "wrote " << n << " n-best lists to " << mk_out << "\n";
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(ErrorCategory::usage, e.what());
    } catch (const Error& e) {
        return fail(e.category(), e.what());
    }

    try {
        if (action) action();
        return 0;
    } catch (const Error& e) {
        return fail(e.category(), e.what());
    } catch (const config::json::exception& e) {
        return fail(ErrorCategory::data, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(ErrorCategory::data, e.what());
    } catch (const std::exception& e) {
        return fail(ErrorCategory::data, std::string("unexpected failure: ") + e.what());
    }
}
