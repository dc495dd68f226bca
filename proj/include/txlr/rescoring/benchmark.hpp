#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "txlr/corpus/synthetic.hpp"
#include "txlr/rescoring/nbest.hpp"

namespace txlr::rescoring {

/// Synthetic first-pass output: each user turn's reference plus copies with
/// content words swapped for acoustically confusable partners or for
/// catalog entities from another category. Acoustic scores are independent
/// Gaussian noise, so the first-pass order carries no information.
struct BenchmarkConfig {
    std::size_t n_best = 5;
    double acoustic_noise = 1.0;
};

inline config::json benchmark_config_to_json(const BenchmarkConfig& c) {
    return {{"n_best", c.n_best}, {"acoustic_noise", c.acoustic_noise}};
}

inline BenchmarkConfig benchmark_config_from_json(const config::json& j, BenchmarkConfig c, const std::string& where) {
    config::StrictObject o(j, where);
    o.opt("n_best", c.n_best);
    o.opt("acoustic_noise", c.acoustic_noise);
    o.finish();
    if (c.n_best < 1 || c.n_best > kMaxHypotheses) throw UsageError(where + ".n_best must lie in 1..50");
    if (c.acoustic_noise < 0.0) throw UsageError(where + ".acoustic_noise must be >= 0");
    return c;
}

inline std::vector<Record> make_nbest_benchmark(const std::vector<corpus::Conversation>& convs,
                                                const corpus::SynthConfig& synth, const BenchmarkConfig& cfg,
                                                std::uint64_t seed) {
    std::map<std::string, std::string> partner;
    for (const auto& [a, b] : synth.confusables) {
        partner[a] = b;
        partner[b] = a;
    }
    const auto contexts = corpus::entity_contexts(synth);
    std::vector<std::string> entities;
    for (const auto& [e, _] : contexts) entities.push_back(e);

    const Rng base("nbest", seed);
    std::vector<Record> out;
    for (const auto& conv : convs) {
        for (std::size_t t = 0; t < conv.turns.size(); ++t) {
            const auto& turn = conv.turns[t];
            if (turn.actor == corpus::Actor::bot) {
                out.push_back(BotTurn{conv.id, t, conv.domain, turn.text});
                continue;
            }
            const std::string uid = conv.id + "/" + std::to_string(t);
            Rng rng = base.fork(uid);
            const auto ref = corpus::tokenize(turn.text);

            std::vector<std::vector<std::string>> variants{ref};
            auto add = [&](std::vector<std::string> v) {
                if (variants.size() < cfg.n_best && std::find(variants.begin(), variants.end(), v) == variants.end())
                    variants.push_back(std::move(v));
            };
            std::vector<std::size_t> swappable;
            for (std::size_t i = 0; i < ref.size(); ++i)
                if (partner.contains(ref[i])) swappable.push_back(i);
            for (std::size_t i : swappable) {
                auto v = ref;
                v[i] = partner.at(ref[i]);
                add(std::move(v));
            }
            if (swappable.size() > 1) {
                auto v = ref;
                for (std::size_t i : swappable) v[i] = partner.at(ref[i]);
                add(std::move(v));
            }
            // Entities from categories the reference entity never belongs to.
            std::vector<std::size_t> entity_pos;
            for (const auto& span : turn.slot_spans)
                for (std::size_t i = span.start; i < span.end && i < ref.size(); ++i) entity_pos.push_back(i);
            for (std::size_t attempt = 0; !entity_pos.empty() && variants.size() < cfg.n_best && attempt < 8 * cfg.n_best;
                 ++attempt) {
                const std::size_t i = entity_pos[rng.uniform_index(entity_pos.size())];
                const std::string& cand = entities[rng.uniform_index(entities.size())];
                const auto own = contexts.find(ref[i]);
                const auto& theirs = contexts.at(cand);
                bool shared = false;
                if (own != contexts.end())
                    for (const auto& c : own->second) shared = shared || theirs.contains(c);
                if (shared || cand == ref[i]) continue;
                auto v = ref;
                v[i] = cand;
                add(std::move(v));
            }

            std::vector<std::pair<double, std::string>> scored;
            for (const auto& v : variants) scored.emplace_back(rng.normal(0.0, cfg.acoustic_noise), corpus::join(v));
            std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

            NBestList nb;
            nb.utterance_id = uid;
            nb.conversation_id = conv.id;
            nb.turn_index = t;
            nb.domain = conv.domain;
            nb.dialogue_act = turn.dialogue_act;
            nb.reference = turn.text;
            for (std::size_t r = 0; r < scored.size(); ++r) nb.hypotheses.push_back({scored[r].second, scored[r].first, r});
            out.push_back(std::move(nb));
        }
    }
    return out;
}

}  // namespace txlr::rescoring
