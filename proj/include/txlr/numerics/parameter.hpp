#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "txlr/numerics/autograd.hpp"

namespace txlr {

template <typename T>
struct Parameter {
    std::string name;
    Var<T> var;
    bool trainable = true;
};

/// Ordered collection of named parameters. Order is creation order and is
/// what checkpoints and optimizers iterate over.
template <typename T>
class ParameterSet {
public:
    Var<T> add(const std::string& name, Tensor<T> value, bool trainable = true) {
        if (index_.contains(name)) throw NumericError("duplicate parameter name '" + name + "'");
        index_.emplace(name, params_.size());
        params_.push_back({name, leaf(std::move(value)), trainable});
        return params_.back().var;
    }

    bool contains(const std::string& name) const { return index_.contains(name); }

    Parameter<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw NumericError("unknown parameter '" + name + "'");
        return params_[it->second];
    }
    const Parameter<T>& get(const std::string& name) const {
        return const_cast<ParameterSet*>(this)->get(name);
    }

    std::vector<Parameter<T>>& all() noexcept { return params_; }
    const std::vector<Parameter<T>>& all() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }

    std::size_t value_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.var.value().size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.var.zero_grad();
    }

private:
    std::vector<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace txlr
