#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "txlr/numerics/autograd.hpp"
#include "txlr/numerics/rng.hpp"

// Differentiable primitives. Every op validates shapes, computes its value
// eagerly, and records a closure that accumulates into its parents' grads.
namespace txlr::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

template <typename T>
MapC<T> view(const Tensor<T>& t) {
    return MapC<T>(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
MapM<T> view(Tensor<T>& t) {
    return MapM<T>(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] inline void mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
void require_matrix(const char* op, const Var<T>& a) {
    if (a.shape().size() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

template <typename T>
bool wants(const std::shared_ptr<Node<T>>& p) {
    return p->requires_grad;
}

}  // namespace detail

/// op(a) * op(b) where op transposes when the flag is set.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false) {
    using namespace detail;
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t ka = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (ka != kb) mismatch("matmul", a.shape(), b.shape());

    Tensor<T> out = Tensor<T>::matrix(m, n);
    {
        auto A = view(a.value());
        auto B = view(b.value());
        auto C = view(out);
        if (!trans_a && !trans_b) C.noalias() = A * B;
        else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
        else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
        else C.noalias() = A.transpose() * B.transpose();
    }
    return Var<T>::make(std::move(out), {a, b}, [trans_a, trans_b](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        auto G = view(static_cast<const Tensor<T>&>(self.grad));
        auto A = view(static_cast<const Tensor<T>&>(pa->value));
        auto B = view(static_cast<const Tensor<T>&>(pb->value));
        if (wants(pa)) {
            auto dA = view(pa->grad_buffer());
            if (!trans_a && !trans_b) dA.noalias() += G * B.transpose();
            else if (!trans_a && trans_b) dA.noalias() += G * B;
            else if (trans_a && !trans_b) dA.noalias() += B * G.transpose();
            else dA.noalias() += B.transpose() * G.transpose();
        }
        if (wants(pb)) {
            auto dB = view(pb->grad_buffer());
            if (!trans_a && !trans_b) dB.noalias() += A.transpose() * G;
            else if (!trans_a && trans_b) dB.noalias() += G.transpose() * A;
            else if (trans_a && !trans_b) dB.noalias() += A * G;
            else dB.noalias() += G.transpose() * A.transpose();
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape()) detail::mismatch("add", a.shape(), b.shape());
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

/// Adds a bias vector of length cols to every row.
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
    detail::require_matrix("add_bias", x);
    if (bias.value().size() != x.cols()) detail::mismatch("add_bias", x.shape(), bias.shape());
    Tensor<T> out = x.value();
    const std::size_t cols = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += bias.value()[c];
    return Var<T>::make(std::move(out), {x, bias}, [cols](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pb = self.parents[1];
        if (px->requires_grad) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            const std::size_t rows = self.grad.size() / cols;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape()) detail::mismatch("mul", a.shape(), b.shape());
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v *= s;
    return Var<T>::make(std::move(out), {a}, [s](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

/// Row-wise concatenation: [a; b]. Column counts must agree.
template <typename T>
Var<T> concat_rows(const Var<T>& a, const Var<T>& b) {
    detail::require_matrix("concat", a);
    detail::require_matrix("concat", b);
    if (a.cols() != b.cols()) detail::mismatch("concat", a.shape(), b.shape());
    const std::size_t na = a.value().size();
    Tensor<T> out = Tensor<T>::matrix(a.rows() + b.rows(), a.cols());
    std::copy(a.value().values().begin(), a.value().values().end(), out.values().begin());
    std::copy(b.value().values().begin(), b.value().values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(na));
    return Var<T>::make(std::move(out), {a, b}, [na](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
        }
    });
}

/// Column-wise concatenation: [a b]. Row counts must agree.
template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
    detail::require_matrix("concat", a);
    detail::require_matrix("concat", b);
    if (a.rows() != b.rows()) detail::mismatch("concat", a.shape(), b.shape());
    const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor<T> out = Tensor<T>::matrix(rows, ca + cb);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out.at(r, c) = a.value().at(r, c);
        for (std::size_t c = 0; c < cb; ++c) out.at(r, ca + c) = b.value().at(r, c);
    }
    return Var<T>::make(std::move(out), {a, b}, [rows, ca, cb](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const std::size_t w = ca + cb;
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * w + c];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * w + ca + c];
        }
    });
}

/// Stacks single-row matrices into one [n x cols] matrix.
template <typename T>
Var<T> stack_rows(const std::vector<Var<T>>& rows_in) {
    if (rows_in.empty()) throw ShapeError("stack_rows: no rows");
    const std::size_t cols = rows_in[0].value().size();
    Tensor<T> out = Tensor<T>::matrix(rows_in.size(), cols);
    for (std::size_t r = 0; r < rows_in.size(); ++r) {
        if (rows_in[r].value().size() != cols) detail::mismatch("stack_rows", rows_in[0].shape(), rows_in[r].shape());
        std::copy(rows_in[r].value().values().begin(), rows_in[r].value().values().end(), out.row(r).begin());
    }
    return Var<T>::make(std::move(out), rows_in, [cols](Node<T>& self) {
        for (std::size_t r = 0; r < self.parents.size(); ++r) {
            auto& p = self.parents[r];
            if (!p->requires_grad) continue;
            auto& g = p->grad_buffer();
            for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
        }
    });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t start, std::size_t count) {
    detail::require_matrix("slice_rows", a);
    if (start + count > a.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(a.shape()));
    }
    const std::size_t cols = a.cols();
    Tensor<T> out = Tensor<T>::matrix(count, cols);
    std::copy_n(a.value().values().begin() + static_cast<std::ptrdiff_t>(start * cols), count * cols,
                out.values().begin());
    return Var<T>::make(std::move(out), {a}, [start, cols](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * cols + i] += self.grad[i];
    });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count) {
    detail::require_matrix("slice_cols", a);
    if (start + count > a.cols()) {
        throw ShapeError("slice_cols: cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(a.shape()));
    }
    const std::size_t rows = a.rows(), cols = a.cols();
    Tensor<T> out = Tensor<T>::matrix(rows, count);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out.at(r, c) = a.value().at(r, start + c);
    return Var<T>::make(std::move(out), {a}, [start, count, rows, cols](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < count; ++c) g[r * cols + start + c] += self.grad[r * count + c];
    });
}

/// Broadcasts a vector (rank 1 or a single row) to `count` identical rows.
template <typename T>
Var<T> repeat_rows(const Var<T>& v, std::size_t count) {
    if (v.rows() != 1) throw ShapeError("repeat_rows: expected a single row, got " + shape_str(v.shape()));
    const std::size_t cols = v.value().size();
    Tensor<T> out = Tensor<T>::matrix(count, cols);
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = v.value()[c];
    return Var<T>::make(std::move(out), {v}, [cols](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % cols] += self.grad[i];
    });
}

template <typename T>
Var<T> embedding_lookup(const Var<T>& table, const std::vector<int>& ids) {
    detail::require_matrix("embedding_lookup", table);
    const std::size_t dim = table.cols();
    Tensor<T> out = Tensor<T>::matrix(ids.size(), dim);
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= table.rows()) {
            throw ShapeError("embedding_lookup: id " + std::to_string(ids[t]) + " outside table " +
                             shape_str(table.shape()));
        }
        auto src = table.value().row(static_cast<std::size_t>(ids[t]));
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return Var<T>::make(std::move(out), {table}, [ids, dim](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t t = 0; t < ids.size(); ++t)
            for (std::size_t c = 0; c < dim; ++c) g[static_cast<std::size_t>(ids[t]) * dim + c] += self.grad[t * dim + c];
    });
}

namespace detail {

template <typename T>
void softmax_row(std::span<const T> in, std::span<T> out) {
    T mx = -std::numeric_limits<T>::infinity();
    for (T v : in) mx = std::max(mx, v);
    T sum{0};
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp(in[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
}

template <typename T>
void log_softmax_row(std::span<const T> in, std::span<T> out) {
    T mx = -std::numeric_limits<T>::infinity();
    for (T v : in) mx = std::max(mx, v);
    T sum{0};
    for (T v : in) sum += std::exp(v - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - lse;
}

}  // namespace detail

/// Softmax along the last axis (each row).
template <typename T>
Var<T> softmax(const Var<T>& a) {
    Tensor<T> out(a.shape());
    for (std::size_t r = 0; r < a.rows(); ++r) detail::softmax_row<T>(a.value().row(r), out.row(r));
    return Var<T>::make(std::move(out), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        const std::size_t cols = self.value.cols();
        for (std::size_t r = 0; r < self.value.rows(); ++r) {
            T dot{0};
            for (std::size_t c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * self.value[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c)
                g[r * cols + c] += self.value[r * cols + c] * (self.grad[r * cols + c] - dot);
        }
    });
}

template <typename T>
Var<T> log_softmax(const Var<T>& a) {
    Tensor<T> out(a.shape());
    for (std::size_t r = 0; r < a.rows(); ++r) detail::log_softmax_row<T>(a.value().row(r), out.row(r));
    return Var<T>::make(std::move(out), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        const std::size_t cols = self.value.cols();
        for (std::size_t r = 0; r < self.value.rows(); ++r) {
            T sum{0};
            for (std::size_t c = 0; c < cols; ++c) sum += self.grad[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c)
                g[r * cols + c] += self.grad[r * cols + c] - std::exp(self.value[r * cols + c]) * sum;
        }
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = T{1} / (T{1} + std::exp(-v));
    return Var<T>::make(std::move(out), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (T{1} - self.value[i]);
    });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = std::tanh(v);
    return Var<T>::make(std::move(out), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (T{1} - self.value[i] * self.value[i]);
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    return Var<T>::make(std::move(out), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (self.value[i] > T{0}) g[i] += self.grad[i];
    });
}

/// Row-wise layer normalisation with learned gain and bias.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
    detail::require_matrix("layer_norm", x);
    const std::size_t rows = x.rows(), cols = x.cols();
    if (gain.value().size() != cols) detail::mismatch("layer_norm", x.shape(), gain.shape());
    if (bias.value().size() != cols) detail::mismatch("layer_norm", x.shape(), bias.shape());

    Tensor<T> out = Tensor<T>::matrix(rows, cols);
    Tensor<T> xhat = Tensor<T>::matrix(rows, cols);
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        T mean{0};
        for (std::size_t c = 0; c < cols; ++c) mean += x.value().at(r, c);
        mean /= static_cast<T>(cols);
        T var{0};
        for (std::size_t c = 0; c < cols; ++c) {
            const T d = x.value().at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        inv_std[r] = T{1} / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            xhat.at(r, c) = (x.value().at(r, c) - mean) * inv_std[r];
            out.at(r, c) = xhat.at(r, c) * gain.value()[c] + bias.value()[c];
        }
    }
    return Var<T>::make(std::move(out), {x, gain, bias},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (pg->requires_grad) {
            auto& g = pg->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c] * xhat.at(r, c);
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
        }
        if (px->requires_grad) {
            auto& g = px->grad_buffer();
            std::vector<T> dxhat(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                T mean_d{0}, mean_dx{0};
                for (std::size_t c = 0; c < cols; ++c) {
                    dxhat[c] = self.grad[r * cols + c] * pg->value[c];
                    mean_d += dxhat[c];
                    mean_dx += dxhat[c] * xhat.at(r, c);
                }
                mean_d /= static_cast<T>(cols);
                mean_dx /= static_cast<T>(cols);
                for (std::size_t c = 0; c < cols; ++c)
                    g[r * cols + c] += inv_std[r] * (dxhat[c] - mean_d - xhat.at(r, c) * mean_dx);
            }
        }
    });
}

/// Inverted dropout. With train == false (or rate == 0) the input node itself
/// is returned, so evaluation is bit-exact identity.
template <typename T>
Var<T> dropout(const Var<T>& a, double rate, bool train, Rng& rng) {
    if (!train || rate <= 0.0) return a;
    if (rate >= 1.0) throw NumericError("dropout: rate must be < 1, got " + std::to_string(rate));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> mask(a.shape());
    for (auto& m : mask.values()) m = rng.bernoulli(rate) ? T{0} : keep_scale;
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return Var<T>::make(std::move(out), {a}, [mask = std::move(mask)](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
}

/// Sum over masked rows of -log softmax(logits)[t][target_t], divided by
/// `normalizer` (or by the masked count when normalizer <= 0). An all-false
/// mask gives 0 with zero gradient.
template <typename T>
Var<T> masked_cross_entropy(const Var<T>& logits, const std::vector<int>& targets, const std::vector<bool>& mask,
                            double normalizer = 0.0) {
    detail::require_matrix("masked_cross_entropy", logits);
    const std::size_t rows = logits.rows(), cols = logits.cols();
    if (targets.size() != rows || mask.size() != rows) {
        throw ShapeError("masked_cross_entropy: shape mismatch " + shape_str(logits.shape()) + " vs targets [" +
                         std::to_string(targets.size()) + "] / mask [" + std::to_string(mask.size()) + "]");
    }
    std::size_t count = 0;
    for (std::size_t t = 0; t < rows; ++t) {
        if (!mask[t]) continue;
        if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= cols) {
            throw ShapeError("masked_cross_entropy: label " + std::to_string(targets[t]) + " out of range [0, " +
                             std::to_string(cols) + ")");
        }
        ++count;
    }
    const double denom = normalizer > 0.0 ? normalizer : static_cast<double>(count);

    Tensor<T> probs = Tensor<T>::matrix(rows, cols);
    T total{0};
    for (std::size_t t = 0; t < rows; ++t) {
        if (!mask[t]) continue;
        detail::softmax_row<T>(logits.value().row(t), probs.row(t));
        Tensor<T> lsm = Tensor<T>::matrix(1, cols);
        detail::log_softmax_row<T>(logits.value().row(t), lsm.row(0));
        total -= lsm[static_cast<std::size_t>(targets[t])];
    }
    Tensor<T> out({1, 1}, count == 0 ? T{0} : static_cast<T>(total / static_cast<T>(denom)));
    return Var<T>::make(std::move(out), {logits},
                        [probs = std::move(probs), targets, mask, denom, cols, count](Node<T>& self) {
        if (count == 0) return;
        auto& g = self.parents[0]->grad_buffer();
        const T scale_g = self.grad[0] / static_cast<T>(denom);
        for (std::size_t t = 0; t < mask.size(); ++t) {
            if (!mask[t]) continue;
            for (std::size_t c = 0; c < cols; ++c) g[t * cols + c] += probs.at(t, c) * scale_g;
            g[t * cols + static_cast<std::size_t>(targets[t])] -= scale_g;
        }
    });
}

/// Attention mask for queries that sit after `offset` memory positions:
/// key j is visible to query i iff j <= offset + i.
template <typename T>
Var<T> causal_mask(const Var<T>& scores, std::size_t offset) {
    detail::require_matrix("causal_mask", scores);
    Tensor<T> out = scores.value();
    const std::size_t rows = out.rows(), cols = out.cols();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = offset + i + 1; j < cols; ++j) out.at(i, j) = -std::numeric_limits<T>::infinity();
    return Var<T>::make(std::move(out), {scores}, [offset, rows, cols](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols && j <= offset + i; ++j) g[i * cols + j] += self.grad[i * cols + j];
    });
}

/// Relative-position realignment. Input column d holds the score of query i
/// against relative distance d; output column j holds the score for key j,
/// i.e. out[i][j] = in[i][offset + i - j] for j <= offset + i and 0 otherwise.
template <typename T>
Var<T> relative_gather(const Var<T>& by_distance, std::size_t offset) {
    detail::require_matrix("relative_gather", by_distance);
    const std::size_t rows = by_distance.rows(), cols = by_distance.cols();
    if (offset + rows > cols) {
        throw ShapeError("relative_gather: " + std::to_string(rows) + " queries after " + std::to_string(offset) +
                         " memory slots need " + std::to_string(offset + rows) + " distances, got " +
                         std::to_string(cols));
    }
    Tensor<T> out = Tensor<T>::matrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j <= offset + i; ++j) out.at(i, j) = by_distance.value().at(i, offset + i - j);
    return Var<T>::make(std::move(out), {by_distance}, [offset, rows, cols](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j <= offset + i; ++j) g[i * cols + offset + i - j] += self.grad[i * cols + j];
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T s{0};
    for (T v : a.value().values()) s += v;
    return Var<T>::make(Tensor<T>({1, 1}, s), {a}, [](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (auto& v : g.values()) v += self.grad[0];
    });
}

/// Value copy with no path back to `a`: the stop-gradient boundary.
template <typename T>
Var<T> stop_gradient(const Var<T>& a) {
    return constant(a.value());
}

}  // namespace txlr::ops
