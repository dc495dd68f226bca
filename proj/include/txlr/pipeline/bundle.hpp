#pragma once

#include <optional>
#include <sstream>
#include <string>

#include "txlr/corpus/session.hpp"
#include "txlr/corpus/vocab.hpp"
#include "txlr/embedding/provider.hpp"
#include "txlr/model/model.hpp"
#include "txlr/numerics/checkpoint.hpp"

namespace txlr::pipeline {

/// Everything needed to use a trained model without the training corpus:
/// config, vocabulary, slot classes and, for fusion models, the domain
/// embeddings it was trained with. Stored as the checkpoint metadata.
struct ModelMeta {
    model::ModelConfig config;
    corpus::Vocabulary vocab;
    corpus::SlotScheme slots;
    std::optional<embedding::EmbeddingTable> embeddings;
    std::size_t best_step = 0;
    double best_valid_ppl = 0.0;
};

inline config::json meta_to_json(const ModelMeta& m) {
    config::json j = {{"model", model::model_config_to_json(m.config)},
                      {"vocab", m.vocab.tokens()},
                      {"slot_classes", m.slots.per_tag() ? "per-tag" : "binary"},
                      {"slot_tags", m.slots.tags()},
                      {"best_step", m.best_step},
                      {"best_valid_ppl", m.best_valid_ppl}};
    j["embeddings"] = m.embeddings ? config::json(embedding::serialize_embeddings(*m.embeddings)) : config::json(nullptr);
    return j;
}

inline ModelMeta meta_from_json(const config::json& j, const std::string& where) {
    try {
        ModelMeta m;
        config::StrictObject o(j, where);
        m.config = model::model_config_from_json(o.raw("model"), {}, o.path("model"));
        m.vocab = corpus::Vocabulary(o.get<std::vector<std::string>>("vocab"));
        const auto kind = o.get<std::string>("slot_classes");
        auto tags = o.get<std::vector<std::string>>("slot_tags");
        m.slots = kind == "per-tag" ? corpus::SlotScheme(std::move(tags), true) : corpus::SlotScheme::binary();
        o.opt("best_step", m.best_step);
        o.opt("best_valid_ppl", m.best_valid_ppl);
        const auto& e = o.raw("embeddings");
        if (!e.is_null()) {
            std::istringstream in(e.get<std::string>());
            m.embeddings = embedding::parse_embeddings(in, where + ".embeddings");
        }
        o.finish();
        return m;
    } catch (const UsageError& e) {
        throw DataError(e.what());
    } catch (const config::json::exception& e) {
        throw DataError(where + ": " + e.what());
    }
}

template <typename T>
void save_model(const std::string& path, const model::LanguageModel<T>& model, const ModelMeta& meta) {
    BinaryWriter w;
    write_checkpoint(w, model.params(), model::fingerprint(model.config()), meta_to_json(meta).dump());
    w.write_file(path);
}

template <typename T>
struct LoadedModel {
    ModelMeta meta;
    model::LanguageModel<T> model;
};

/// Rebuilds the model from the stored config, then loads the parameters.
/// Either scalar width can be loaded into either T.
template <typename T>
LoadedModel<T> load_model(const std::string& path) {
    auto r = BinaryReader::from_file(path);
    const auto header = read_checkpoint_header(r);
    config::json j;
    try {
        j = config::json::parse(header.metadata);
    } catch (const config::json::parse_error& e) {
        throw DataError("'" + path + "': corrupt checkpoint metadata (" + e.what() + ")");
    }
    auto meta = meta_from_json(j, path);
    if (model::fingerprint(meta.config) != header.fingerprint) {
        throw DataError("'" + path + "': checkpoint fingerprint does not match its model config");
    }
    model::LanguageModel<T> lm(meta.config, 0);
    LoadedModel<T> out{std::move(meta), std::move(lm)};
    read_checkpoint_params(r, header, out.model.params());
    return out;
}

}  // namespace txlr::pipeline
