#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "txlr/error.hpp"

namespace txlr::config {

using json = nlohmann::json;

/// Reads fields out of a JSON object and rejects keys nobody asked for.
/// Usage: read every field with get/opt, then call finish().
class StrictObject {
public:
    StrictObject(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw UsageError(where_ + ": expected an object");
    }

    template <typename V>
    void opt(const char* key, V& out) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<V>();
        } catch (const json::exception&) {
            throw UsageError(where_ + "." + key + ": wrong type (got " + obj_.at(key).dump() + ")");
        }
    }

    template <typename V>
    V get(const char* key) {
        seen_.insert(key);
        if (!obj_.contains(key)) throw UsageError(where_ + ": missing key '" + key + "'");
        V out;
        opt(key, out);
        return out;
    }

    bool has(const char* key) const { return obj_.contains(key); }

    /// Accepts `key` without reading it.
    void allow(const char* key) { seen_.insert(key); }

    const json& raw(const char* key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    std::string path(const char* key) const { return where_ + "." + key; }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.contains(it.key())) throw UsageError(where_ + ": unknown key '" + it.key() + "'");
        }
    }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace txlr::config
