#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "txlr/numerics/checkpoint.hpp"
#include "txlr/numerics/parameter.hpp"

namespace txlr::training {

enum class OptimizerKind { sgd, adam };

inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw UsageError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

/// Global L2 norm of all trainable gradients.
template <typename T>
double grad_norm(const ParameterSet<T>& params) {
    double ss = 0.0;
    for (const auto& p : params.all()) {
        if (!p.trainable || !p.var.has_grad()) continue;
        for (T g : p.var.node()->grad.values()) ss += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(ss);
}

/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
    const double norm = grad_norm(params);
    if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
    if (max_norm > 0.0 && norm > max_norm) {
        const T s = static_cast<T>(max_norm / norm);
        for (auto& p : params.all()) {
            if (!p.trainable || !p.var.has_grad()) continue;
            for (T& g : p.var.node()->grad.values()) g *= s;
        }
    }
    return norm;
}

/// Plain SGD or Adam with bias correction. Parameters without a gradient in
/// a step are treated as having a zero gradient.
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (!(lr >= 0.0)) throw UsageError("learning rate must be >= 0");
    }

    void step(ParameterSet<T>& params) {
        if (kind_ == OptimizerKind::adam && m_.empty()) init(params);
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        auto& all = params.all();
        for (std::size_t i = 0; i < all.size(); ++i) {
            auto& p = all[i];
            if (!p.trainable) continue;
            auto& w = p.var.mutable_value().values();
            const bool has = p.var.has_grad();
            const auto* g = has ? p.var.node()->grad.values().data() : nullptr;
            if (kind_ == OptimizerKind::sgd) {
                if (!has) continue;
                for (std::size_t k = 0; k < w.size(); ++k) w[k] -= static_cast<T>(lr_) * g[k];
                continue;
            }
            auto& m = m_[i].values();
            auto& v = v_[i].values();
            for (std::size_t k = 0; k < w.size(); ++k) {
                const T gk = has ? g[k] : T{0};
                m[k] = static_cast<T>(beta1_) * m[k] + static_cast<T>(1.0 - beta1_) * gk;
                v[k] = static_cast<T>(beta2_) * v[k] + static_cast<T>(1.0 - beta2_) * gk * gk;
                const double mhat = static_cast<double>(m[k]) / bc1;
                const double vhat = static_cast<double>(v[k]) / bc2;
                w[k] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    std::uint64_t steps() const noexcept { return t_; }
    OptimizerKind kind() const noexcept { return kind_; }

    void save(BinaryWriter& w) const {
        w.put<std::uint64_t>(t_);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m_.size()));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            w.put_tensor(m_[i]);
            w.put_tensor(v_[i]);
        }
    }

    void load(BinaryReader& r) {
        t_ = r.get<std::uint64_t>();
        const auto n = r.get<std::uint32_t>();
        m_.clear();
        v_.clear();
        for (std::uint32_t i = 0; i < n; ++i) {
            m_.push_back(r.get_tensor<T>());
            v_.push_back(r.get_tensor<T>());
        }
    }

private:
    void init(const ParameterSet<T>& params) {
        for (const auto& p : params.all()) {
            m_.emplace_back(p.var.shape());
            v_.emplace_back(p.var.shape());
        }
    }

    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace txlr::training
