#pragma once

#include <string>
#include <vector>

#include "txlr/numerics/ops.hpp"

namespace txlr::training {

namespace detail {
inline std::size_t count_true(const std::vector<bool>& mask) {
    std::size_t n = 0;
    for (bool b : mask) n += b ? 1 : 0;
    return n;
}
}  // namespace detail

/// Mean negative log-likelihood of `targets` over masked rows.
template <typename T>
Var<T> lm_loss(const Var<T>& word_logits, const std::vector<int>& targets, const std::vector<bool>& mask) {
    if (detail::count_true(mask) == 0) throw UsageError("lm_loss: loss mask selects no positions");
    return ops::masked_cross_entropy(word_logits, targets, mask);
}

/// Mean negative log-likelihood of the gold slot class over masked rows.
template <typename T>
Var<T> sd_loss(const Var<T>& slot_logits, const std::vector<int>& labels, const std::vector<bool>& mask) {
    if (detail::count_true(mask) == 0) throw UsageError("sd_loss: loss mask selects no positions");
    const std::size_t k = slot_logits.cols();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
            throw DataError("sd_loss: slot label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                            " outside [0, " + std::to_string(k) + ")");
        }
    }
    return ops::masked_cross_entropy(slot_logits, labels, mask);
}

/// L_LM + alpha * L_SD.
template <typename T>
Var<T> total_loss(const Var<T>& l_lm, const Var<T>& l_sd, double alpha_sd) {
    if (alpha_sd == 0.0) return l_lm;
    return ops::add(l_lm, ops::scale(l_sd, static_cast<T>(alpha_sd)));
}

inline double total_loss(double l_lm, double l_sd, double alpha_sd) { return l_lm + alpha_sd * l_sd; }

}  // namespace txlr::training
