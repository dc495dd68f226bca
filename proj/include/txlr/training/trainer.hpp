#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "txlr/config/strict_json.hpp"
#include "txlr/embedding/provider.hpp"
#include "txlr/evaluation/metrics.hpp"
#include "txlr/model/model.hpp"
#include "txlr/numerics/checkpoint.hpp"
#include "txlr/training/data.hpp"
#include "txlr/training/loss.hpp"
#include "txlr/training/optimizer.hpp"

namespace txlr::training {

struct TrainingConfig {
    double alpha_sd = 0.8;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::size_t batch_size = 8;
    std::size_t max_steps = 500;
    std::size_t eval_every = 100;
    std::uint64_t seed = 0;
    double grad_clip_norm = 1.0;
    bool loss_on_bot = true;
    bool loss_on_da_prefix = false;
    bool loss_on_turn_end = true;
    // Validation subset size used during training; 0 means all.
    std::size_t eval_max_conversations = 0;

    void validate() const {
        auto fail = [](const std::string& m) { throw UsageError("training config: " + m); };
        if (!(alpha_sd >= 0.0)) fail("alpha_sd must be >= 0");
        if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
        if (batch_size == 0) fail("batch_size must be >= 1");
        if (eval_every == 0) fail("eval_every must be >= 1");
        if (grad_clip_norm < 0.0) fail("grad_clip_norm must be >= 0");
    }

    DataOptions data_options() const {
        DataOptions o;
        o.session.loss_on_bot = loss_on_bot;
        o.session.loss_on_da_prefix = loss_on_da_prefix;
        o.loss_on_turn_end = loss_on_turn_end;
        return o;
    }
};

inline config::json training_config_to_json(const TrainingConfig& c) {
    return {{"alpha_sd", c.alpha_sd},
            {"learning_rate", c.learning_rate},
            {"optimizer", optimizer_name(c.optimizer)},
            {"batch_size", c.batch_size},
            {"max_steps", c.max_steps},
            {"eval_every", c.eval_every},
            {"seed", c.seed},
            {"grad_clip_norm", c.grad_clip_norm},
            {"loss_on_bot", c.loss_on_bot},
            {"loss_on_da_prefix", c.loss_on_da_prefix},
            {"loss_on_turn_end", c.loss_on_turn_end},
            {"eval_max_conversations", c.eval_max_conversations}};
}

inline TrainingConfig training_config_from_json(const config::json& j, TrainingConfig c, const std::string& where) {
    config::StrictObject o(j, where);
    o.opt("alpha_sd", c.alpha_sd);
    o.opt("learning_rate", c.learning_rate);
    if (o.has("optimizer")) c.optimizer = parse_optimizer(o.get<std::string>("optimizer"));
    o.opt("batch_size", c.batch_size);
    o.opt("max_steps", c.max_steps);
    o.opt("eval_every", c.eval_every);
    o.opt("seed", c.seed);
    o.opt("grad_clip_norm", c.grad_clip_norm);
    o.opt("loss_on_bot", c.loss_on_bot);
    o.opt("loss_on_da_prefix", c.loss_on_da_prefix);
    o.opt("loss_on_turn_end", c.loss_on_turn_end);
    o.opt("eval_max_conversations", c.eval_max_conversations);
    o.finish();
    return c;
}

struct EvalResult {
    double ppl = 0.0;
    double loss_lm = 0.0;  // mean NLL on user word positions
    double loss_sd = std::numeric_limits<double>::quiet_NaN();
    std::optional<eval::SlotScores> slots;
    std::size_t lm_tokens = 0;
};

/// Domain embedding for a session, or an empty span when fusion is off.
template <typename T>
std::vector<T> session_embedding(const model::ModelConfig& mc, const embedding::EmbeddingTable* table,
                                 const std::string& domain) {
    if (!mc.fusion.enabled) return {};
    if (!table || table->empty()) throw DataError("fusion is on but no domain embeddings were provided");
    return table->normalized<T>(domain);
}

/// Dropout-free pass over `sessions`: PPL on user word positions, slot loss
/// and slot F1 on loss-mask positions. `domain_override` replaces every
/// session's domain tag when looking up embeddings.
template <typename T>
EvalResult evaluate_sessions(const model::LanguageModel<T>& model, const std::vector<PreparedSession>& sessions,
                             const embedding::EmbeddingTable* table, std::size_t max_sessions = 0,
                             const std::string& domain_override = "") {
    const auto& mc = model.config();
    const std::size_t n = max_sessions == 0 ? sessions.size() : std::min(max_sessions, sessions.size());
    double nll = 0.0, sd_nll = 0.0;
    std::size_t count = 0, sd_count = 0, tp = 0, fp = 0, fn = 0;
    Rng unused("eval", 0);
    for (std::size_t si = 0; si < n; ++si) {
        const auto& ps = sessions[si];
        const auto& s = ps.session;
        const auto emb = session_embedding<T>(mc, table, domain_override.empty() ? ps.domain : domain_override);
        auto memory = model.empty_memory();
        for (const auto& ch : session_chunks(s, mc.segment_len, mc.contextual)) {
            if (ch.reset) memory = model.empty_memory();
            std::vector<int> input(s.token_ids.begin() + static_cast<std::ptrdiff_t>(ch.start),
                                   s.token_ids.begin() + static_cast<std::ptrdiff_t>(ch.start + ch.len));
            auto out = model.forward_segment(input, memory, emb, false, unused);
            const auto lsm = ops::log_softmax(out.word_logits).value();
            for (std::size_t r = 0; r < ch.len; ++r) {
                const std::size_t tgt = ch.start + r + 1;
                if (!ps.user_mask[tgt]) continue;
                nll -= static_cast<double>(lsm.at(r, static_cast<std::size_t>(s.token_ids[tgt])));
                ++count;
            }
            if (out.slot_logits) {
                const auto slsm = ops::log_softmax(*out.slot_logits).value();
                for (std::size_t r = 0; r < ch.len; ++r) {
                    const std::size_t pos = ch.start + r;
                    if (!s.loss_mask[pos]) continue;
                    const auto row = slsm.row(r);
                    const int gold = s.slot_labels[pos];
                    const int pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
                    sd_nll -= static_cast<double>(row[static_cast<std::size_t>(gold)]);
                    ++sd_count;
                    if (pred != 0 && pred == gold) ++tp;
                    if (pred != 0 && pred != gold) ++fp;
                    if (gold != 0 && pred != gold) ++fn;
                }
            }
            memory = std::move(out.new_memory);
        }
    }
    if (count == 0) throw DataError("evaluation: no user word positions to score");
    EvalResult r;
    r.loss_lm = nll / static_cast<double>(count);
    r.ppl = std::exp(r.loss_lm);
    r.lm_tokens = count;
    if (mc.slot_head.enabled && sd_count > 0) {
        r.loss_sd = sd_nll / static_cast<double>(sd_count);
        r.slots = eval::slot_scores_from_counts(tp, fp, fn);
    }
    return r;
}

struct StepResult {
    double loss = 0.0;
    double loss_lm = 0.0;
    double loss_sd = 0.0;
    std::size_t lm_tokens = 0;
    std::size_t sd_tokens = 0;
    double grad_norm = 0.0;
};

/// Segment-recurrent trainer. A batch is `batch_size` independent streams;
/// each stream walks one conversation chunk by chunk with its own memory and
/// picks up the next conversation as soon as it finishes one. One step
/// consumes one chunk per stream.
template <typename T>
class Trainer {
public:
    using Log = std::function<void(const config::json&)>;

    Trainer(model::LanguageModel<T>& model, std::vector<PreparedSession> train, std::vector<PreparedSession> valid,
            TrainingConfig cfg, const embedding::EmbeddingTable* embeddings = nullptr)
        : model_(model),
          train_(std::move(train)),
          valid_(std::move(valid)),
          cfg_(std::move(cfg)),
          embeddings_(embeddings),
          optimizer_(cfg_.optimizer, cfg_.learning_rate),
          dropout_rng_("dropout", cfg_.seed) {
        cfg_.validate();
        if (train_.empty()) throw DataError("training: empty training set");
        const auto& mc = model_.config();
        for (const auto& s : train_) {
            chunks_.push_back(session_chunks(s.session, mc.segment_len, mc.contextual));
            embeds_.push_back(session_embedding<T>(mc, embeddings_, s.domain));
        }
        for (const auto& s : valid_) (void)session_embedding<T>(mc, embeddings_, s.domain);
        streams_.resize(cfg_.batch_size);
        reshuffle();
    }

    const TrainingConfig& config() const noexcept { return cfg_; }
    std::size_t step_count() const noexcept { return step_; }
    double best_ppl() const noexcept { return best_ppl_; }
    std::size_t best_step() const noexcept { return best_step_; }
    const std::vector<config::json>& log() const noexcept { return log_; }

    /// Called whenever validation PPL improves, after best parameters are stored.
    void on_best(std::function<void()> f) { on_best_ = std::move(f); }

    EvalResult evaluate_validation() const {
        return evaluate_sessions(model_, valid_, embeddings_, cfg_.eval_max_conversations);
    }

    /// One optimizer update.
    StepResult step() {
        const auto& mc = model_.config();
        auto& params = model_.params();
        params.zero_grad();

        struct Work {
            std::size_t stream;
            std::vector<int> input, targets, labels;
            std::vector<bool> lm_mask, sd_mask;
            std::size_t lm_count = 0, sd_count = 0;
        };
        std::vector<Work> work;
        std::size_t n_lm = 0, n_sd = 0;
        for (std::size_t b = 0; b < streams_.size(); ++b) {
            auto& st = streams_[b];
            if (!st.active) start_next(st);
            const auto& ps = train_[st.session];
            const auto& s = ps.session;
            const Chunk& ch = chunks_[st.session][st.chunk];
            if (ch.reset) st.memory = model_.empty_memory();
            Work w{b, {}, {}, {}, {}, {}, 0, 0};
            for (std::size_t r = 0; r < ch.len; ++r) {
                const std::size_t pos = ch.start + r;
                w.input.push_back(s.token_ids[pos]);
                w.targets.push_back(s.token_ids[pos + 1]);
                w.lm_mask.push_back(ps.lm_mask[pos + 1]);
                w.labels.push_back(s.slot_labels[pos]);
                w.sd_mask.push_back(s.loss_mask[pos]);
                w.lm_count += ps.lm_mask[pos + 1] ? 1 : 0;
                w.sd_count += s.loss_mask[pos] ? 1 : 0;
            }
            n_lm += w.lm_count;
            n_sd += w.sd_count;
            work.push_back(std::move(w));
        }

        const bool use_sd = mc.slot_head.enabled && cfg_.alpha_sd > 0.0 && n_sd > 0;
        std::optional<Var<T>> l_lm, l_sd;
        std::vector<model::SegmentMemory<T>> next_memory(streams_.size());
        for (auto& w : work) {
            auto& st = streams_[w.stream];
            auto out = model_.forward_segment(w.input, st.memory, embeds_[st.session], true, dropout_rng_);
            next_memory[w.stream] = std::move(out.new_memory);
            if (w.lm_count > 0) {
                auto part = ops::masked_cross_entropy(out.word_logits, w.targets, w.lm_mask, static_cast<double>(n_lm));
                l_lm = l_lm ? ops::add(*l_lm, part) : part;
            }
            if (use_sd && w.sd_count > 0) {
                auto part = ops::masked_cross_entropy(*out.slot_logits, w.labels, w.sd_mask, static_cast<double>(n_sd));
                l_sd = l_sd ? ops::add(*l_sd, part) : part;
            }
        }

        StepResult res;
        res.lm_tokens = n_lm;
        res.sd_tokens = use_sd ? n_sd : 0;
        std::optional<Var<T>> loss;
        if (l_lm) loss = *l_lm;
        if (l_sd) loss = loss ? total_loss(*loss, *l_sd, cfg_.alpha_sd) : ops::scale(*l_sd, static_cast<T>(cfg_.alpha_sd));
        if (loss) {
            res.loss = static_cast<double>(loss->item());
            res.loss_lm = l_lm ? static_cast<double>(l_lm->item()) : 0.0;
            res.loss_sd = l_sd ? static_cast<double>(l_sd->item()) : 0.0;
            if (!std::isfinite(res.loss)) {
                std::string ids;
                for (const auto& st : streams_) ids += (ids.empty() ? "" : ",") + train_[st.session].id;
                throw NumericError("non-finite loss at step " + std::to_string(step_) + " (batch " +
                                   std::to_string(step_) + ": " + ids + ")");
            }
            backward(*loss);
            res.grad_norm = clip_grad_norm(params, cfg_.grad_clip_norm);
            optimizer_.step(params);
        }

        for (std::size_t b = 0; b < streams_.size(); ++b) {
            auto& st = streams_[b];
            st.memory = std::move(next_memory[b]);
            if (++st.chunk >= chunks_[st.session].size()) st.active = false;
        }
        ++step_;
        acc_lm_ += res.loss_lm;
        acc_sd_ += res.loss_sd;
        ++acc_n_;
        return res;
    }

    /// Trains until max_steps, evaluating at step 0 (when starting fresh),
    /// every eval_every steps and at the end.
    void run(const Log& log = {}) {
        if (step_ == 0 && log_.empty()) record_eval(log);
        while (step_ < cfg_.max_steps) {
            step();
            if (step_ % cfg_.eval_every == 0 || step_ == cfg_.max_steps) {
                record_train(log);
                record_eval(log);
            }
        }
    }

    /// Copies the best-validation parameters back into the model.
    void restore_best() {
        if (best_params_.empty()) return;
        auto& all = model_.params().all();
        for (std::size_t i = 0; i < all.size(); ++i) all[i].var.mutable_value() = best_params_[i];
    }

    void save_state(BinaryWriter& w) const {
        w.put_bytes("TXLS");
        w.put<std::uint32_t>(1);
        w.put<std::uint32_t>(sizeof(T));
        w.put<std::uint64_t>(model::fingerprint(model_.config()));
        w.put_string(training_config_to_json(cfg_).dump());
        w.put<std::uint64_t>(step_);
        w.put<double>(best_ppl_);
        w.put<std::uint64_t>(best_step_);
        w.put<std::uint64_t>(epoch_);
        w.put<std::uint64_t>(cursor_);
        w.put_string(dropout_rng_.serialize());
        optimizer_.save(w);
        const auto& all = model_.params().all();
        w.put<std::uint32_t>(static_cast<std::uint32_t>(all.size()));
        for (const auto& p : all) w.put_tensor(p.var.value());
        w.put<std::uint32_t>(static_cast<std::uint32_t>(best_params_.size()));
        for (const auto& t : best_params_) w.put_tensor(t);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(streams_.size()));
        for (const auto& st : streams_) {
            w.put<std::uint8_t>(st.active ? 1 : 0);
            w.put<std::uint64_t>(st.session);
            w.put<std::uint64_t>(st.chunk);
            w.put<std::uint32_t>(static_cast<std::uint32_t>(st.memory.layers.size()));
            for (const auto& l : st.memory.layers) w.put_tensor(l);
            w.put_tensor(st.memory.lstm_h);
            w.put_tensor(st.memory.lstm_c);
            w.put<std::uint64_t>(st.memory.tokens_consumed);
        }
        w.put<double>(acc_lm_);
        w.put<double>(acc_sd_);
        w.put<std::uint64_t>(acc_n_);
        w.put_string(config::json(log_).dump());
    }

    void load_state(BinaryReader& r) {
        if (r.get_bytes(4) != "TXLS") throw DataError("'" + r.source() + "': not a training state file");
        if (r.get<std::uint32_t>() != 1) throw DataError("'" + r.source() + "': unsupported training state version");
        if (r.get<std::uint32_t>() != sizeof(T)) {
            throw DataError("'" + r.source() + "': training state was saved with a different scalar width");
        }
        if (r.get<std::uint64_t>() != model::fingerprint(model_.config())) {
            throw DataError("'" + r.source() + "': training state belongs to a different model config");
        }
        (void)r.get_string();
        step_ = r.get<std::uint64_t>();
        best_ppl_ = r.get<double>();
        best_step_ = r.get<std::uint64_t>();
        epoch_ = r.get<std::uint64_t>();
        cursor_ = r.get<std::uint64_t>();
        reshuffle_order();
        dropout_rng_ = Rng::deserialize(r.get_string());
        optimizer_.load(r);
        auto& all = model_.params().all();
        if (r.get<std::uint32_t>() != all.size()) throw DataError("'" + r.source() + "': parameter count mismatch");
        for (auto& p : all) {
            auto t = r.get_tensor<T>();
            if (t.shape() != p.var.shape()) throw DataError("'" + r.source() + "': shape mismatch for '" + p.name + "'");
            p.var.mutable_value() = std::move(t);
        }
        best_params_.clear();
        const auto nb = r.get<std::uint32_t>();
        for (std::uint32_t i = 0; i < nb; ++i) best_params_.push_back(r.get_tensor<T>());
        const auto ns = r.get<std::uint32_t>();
        if (ns != streams_.size()) throw DataError("'" + r.source() + "': batch size mismatch");
        for (auto& st : streams_) {
            st.active = r.get<std::uint8_t>() != 0;
            st.session = r.get<std::uint64_t>();
            st.chunk = r.get<std::uint64_t>();
            if (st.session >= train_.size()) throw DataError("'" + r.source() + "': stream refers to a missing session");
            st.memory.layers.clear();
            const auto nl = r.get<std::uint32_t>();
            for (std::uint32_t i = 0; i < nl; ++i) st.memory.layers.push_back(r.get_tensor<T>());
            st.memory.lstm_h = r.get_tensor<T>();
            st.memory.lstm_c = r.get_tensor<T>();
            st.memory.tokens_consumed = r.get<std::uint64_t>();
        }
        acc_lm_ = r.get<double>();
        acc_sd_ = r.get<double>();
        acc_n_ = r.get<std::uint64_t>();
        log_.clear();
        for (auto& rec : config::json::parse(r.get_string())) log_.push_back(rec);
    }

private:
    struct Stream {
        bool active = false;
        std::size_t session = 0;
        std::size_t chunk = 0;
        model::SegmentMemory<T> memory;
    };

    void reshuffle_order() {
        order_.resize(train_.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        Rng rng("data/epoch" + std::to_string(epoch_), cfg_.seed);
        std::shuffle(order_.begin(), order_.end(), rng.engine());
    }

    void reshuffle() {
        cursor_ = 0;
        reshuffle_order();
    }

    void start_next(Stream& st) {
        // Sessions too short to yield a chunk are skipped.
        for (std::size_t guard = 0; guard <= 2 * train_.size() + 1; ++guard) {
            if (cursor_ >= order_.size()) {
                ++epoch_;
                reshuffle();
            }
            const std::size_t s = order_[cursor_++];
            if (chunks_[s].empty()) continue;
            st.active = true;
            st.session = s;
            st.chunk = 0;
            st.memory = model_.empty_memory();
            return;
        }
        throw DataError("training: no session has at least two tokens");
    }

    static config::json num_or_null(double v) { return std::isfinite(v) ? config::json(v) : config::json(nullptr); }

    void record_train(const Log& log) {
        if (acc_n_ == 0) return;
        const double lm = acc_lm_ / static_cast<double>(acc_n_);
        config::json rec = {{"step", step_},
                            {"split", "train"},
                            {"ppl", num_or_null(std::exp(lm))},
                            {"slot_f1", nullptr},
                            {"loss_lm", num_or_null(lm)},
                            {"loss_sd", model_.config().slot_head.enabled ? num_or_null(acc_sd_ / static_cast<double>(acc_n_))
                                                                          : config::json(nullptr)}};
        acc_lm_ = acc_sd_ = 0.0;
        acc_n_ = 0;
        emit(rec, log);
    }

    void record_eval(const Log& log) {
        if (valid_.empty()) return;
        const auto e = evaluate_validation();
        config::json rec = {{"step", step_},
                            {"split", "valid"},
                            {"ppl", num_or_null(e.ppl)},
                            {"slot_f1", e.slots ? num_or_null(e.slots->f1) : config::json(nullptr)},
                            {"loss_lm", num_or_null(e.loss_lm)},
                            {"loss_sd", num_or_null(e.loss_sd)}};
        emit(rec, log);
        if (e.ppl < best_ppl_) {
            best_ppl_ = e.ppl;
            best_step_ = step_;
            best_params_.clear();
            for (const auto& p : model_.params().all()) best_params_.push_back(p.var.value());
            if (on_best_) on_best_();
        }
    }

    void emit(const config::json& rec, const Log& log) {
        log_.push_back(rec);
        if (log) log(rec);
    }

    model::LanguageModel<T>& model_;
    std::vector<PreparedSession> train_, valid_;
    TrainingConfig cfg_;
    const embedding::EmbeddingTable* embeddings_;
    Optimizer<T> optimizer_;
    Rng dropout_rng_;

    std::vector<std::vector<Chunk>> chunks_;
    std::vector<std::vector<T>> embeds_;
    std::vector<Stream> streams_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t epoch_ = 0;
    std::size_t step_ = 0;

    double best_ppl_ = std::numeric_limits<double>::infinity();
    std::size_t best_step_ = 0;
    std::vector<Tensor<T>> best_params_;
    std::function<void()> on_best_;

    double acc_lm_ = 0.0, acc_sd_ = 0.0;
    std::uint64_t acc_n_ = 0;
    std::vector<config::json> log_;
};

}  // namespace txlr::training
