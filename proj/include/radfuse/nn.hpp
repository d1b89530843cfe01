#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/rng.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

/// View of one learnable array for optimizers and checkpoints.
template <typename T>
struct ParamRef {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::span<T> values;
    std::span<T> grads;
};

template <typename T>
using ParamVisitor = std::function<void(ParamRef<T>)>;

/// Fully connected layer, y = x W^T + b, with gradient accumulators.
template <typename T>
struct LinearLayer {
    Matrix<T> weights;       // out x in
    std::vector<T> bias;     // out
    Matrix<T> grad_weights;  // out x in
    std::vector<T> grad_bias;

    LinearLayer() = default;
    LinearLayer(std::size_t in_dim, std::size_t out_dim)
        : weights(out_dim, in_dim), bias(out_dim, T(0)), grad_weights(out_dim, in_dim),
          grad_bias(out_dim, T(0)) {}

    std::size_t in_dim() const noexcept { return weights.cols(); }
    std::size_t out_dim() const noexcept { return weights.rows(); }

    // Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
    void init_glorot(Rng& rng) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
        for (auto& w : weights.data()) w = static_cast<T>(rng.uniform(-limit, limit));
        std::fill(bias.begin(), bias.end(), T(0));
    }

    void zero_grad() {
        grad_weights.fill(T(0));
        std::fill(grad_bias.begin(), grad_bias.end(), T(0));
    }

    void visit(const std::string& name, const ParamVisitor<T>& fn) {
        fn({name + ".weight",
            {static_cast<std::uint32_t>(out_dim()), static_cast<std::uint32_t>(in_dim())},
            weights.data(),
            grad_weights.data()});
        fn({name + ".bias", {static_cast<std::uint32_t>(out_dim())}, bias, grad_bias});
    }

    // Single-row forward; `out` must have out_dim entries.
    void apply(std::span<const T> x, std::span<T> out) const {
        const std::size_t n_in = in_dim();
        for (std::size_t o = 0; o < out_dim(); ++o) {
            const T* w = weights.row(o).data();
            T acc = bias[o];
            for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * x[i];
            out[o] = acc;
        }
    }

    // Single-row backward: accumulates parameter gradients and, when
    // `grad_in` is non-empty, adds W^T g into it.
    void apply_backward(std::span<const T> x, std::span<const T> g, std::span<T> grad_in) {
        const std::size_t n_in = in_dim();
        for (std::size_t o = 0; o < out_dim(); ++o) {
            const T go = g[o];
            if (go == T(0)) continue;
            grad_bias[o] += go;
            T* gw = grad_weights.row(o).data();
            for (std::size_t i = 0; i < n_in; ++i) gw[i] += go * x[i];
            if (!grad_in.empty()) {
                const T* w = weights.row(o).data();
                for (std::size_t i = 0; i < n_in; ++i) grad_in[i] += go * w[i];
            }
        }
    }
};

namespace detail {
// y = x W^T (+ bias). Each output starts at its bias (or zero) and
// accumulates inputs in ascending order, exactly as LinearLayer::apply does,
// so both paths round the same; iterating outputs innermost vectorizes.
template <typename T>
Matrix<T> affine_rows(const Matrix<T>& x, const Matrix<T>& weights, const std::vector<T>* bias) {
    const std::size_t n_in = weights.cols(), n_out = weights.rows();
    std::vector<T> wt(n_in * n_out);
    for (std::size_t o = 0; o < n_out; ++o)
        for (std::size_t i = 0; i < n_in; ++i) wt[i * n_out + o] = weights(o, i);
    Matrix<T> y(x.rows(), n_out);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        T* yr = y.row(r).data();
        const T* xr = x.row(r).data();
        if (bias) std::copy(bias->begin(), bias->end(), yr);
        for (std::size_t i = 0; i < n_in; ++i) {
            const T a = xr[i];
            const T* w = wt.data() + i * n_out;
            for (std::size_t o = 0; o < n_out; ++o) yr[o] += a * w[o];
        }
    }
    return y;
}
} // namespace detail

template <typename T>
Matrix<T> linear_forward(const LinearLayer<T>& layer, const Matrix<T>& x) {
    require(x.cols() == layer.in_dim(), "linear_forward: input has " + std::to_string(x.cols()) +
                                            " columns, layer expects " +
                                            std::to_string(layer.in_dim()));
    return detail::affine_rows(x, layer.weights, &layer.bias);
}

// Accumulates grad_W += g^T x and grad_b += colsum(g); returns g W.
template <typename T>
Matrix<T> linear_backward(LinearLayer<T>& layer, const Matrix<T>& x, const Matrix<T>& upstream) {
    require(x.cols() == layer.in_dim() && upstream.cols() == layer.out_dim() &&
                x.rows() == upstream.rows(),
            "linear_backward: shape mismatch");
    Matrix<T> grad_in(x.rows(), layer.in_dim());
    for (std::size_t r = 0; r < x.rows(); ++r)
        layer.apply_backward(x.row(r), upstream.row(r), grad_in.row(r));
    return grad_in;
}

template <typename T>
Matrix<T> relu_forward(const Matrix<T>& x) {
    Matrix<T> y = x;
    for (auto& v : y.data()) v = v > T(0) ? v : T(0);
    return y;
}

// Gradient passes where the forward input was strictly positive.
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& upstream) {
    require(x.rows() == upstream.rows() && x.cols() == upstream.cols(), "relu_backward: shape mismatch");
    Matrix<T> g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(x.data()[i] > T(0))) g.data()[i] = T(0);
    return g;
}

// In-place stabilized softmax of one row.
template <typename T>
void softmax_inplace(std::span<T> row) {
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T sum = T(0);
    for (T& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (T& v : row) v /= sum;
}

// dz = p * (dp - <p, dp>)
template <typename T>
void softmax_backward_row(std::span<const T> p, std::span<const T> dp, std::span<T> dz) {
    T dot = T(0);
    for (std::size_t k = 0; k < p.size(); ++k) dot += p[k] * dp[k];
    for (std::size_t k = 0; k < p.size(); ++k) dz[k] = p[k] * (dp[k] - dot);
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x) {
    require(all_finite<T>(x.data()), "softmax_rows: non-finite input");
    require(x.cols() >= 1, "softmax_rows: empty rows");
    Matrix<T> y = x;
    for (std::size_t r = 0; r < y.rows(); ++r) softmax_inplace(y.row(r));
    return y;
}

template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& probs, const Matrix<T>& upstream) {
    require(probs.rows() == upstream.rows() && probs.cols() == upstream.cols(),
            "softmax_rows_backward: shape mismatch");
    Matrix<T> g(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r)
        softmax_backward_row<T>(probs.row(r), upstream.row(r), g.row(r));
    return g;
}

template <typename T>
struct LossResult {
    double loss = 0.0;       // mean over counted rows
    Matrix<T> grad;          // d loss / d logits
    std::size_t counted = 0; // rows not ignored
};

inline constexpr int kNoIgnore = std::numeric_limits<int>::min();

/// Mean cross-entropy over rows. Rows whose label equals `ignore_label` are
/// skipped and get zero gradient.
template <typename T>
LossResult<T> cross_entropy_loss(const Matrix<T>& logits, std::span<const int> labels,
                                 int ignore_label = kNoIgnore) {
    require(labels.size() == logits.rows(), "cross_entropy_loss: label count mismatch");
    require(all_finite<T>(logits.data()), "cross_entropy_loss: non-finite logits");
    const std::size_t k = logits.cols();
    LossResult<T> out;
    out.grad = Matrix<T>(logits.rows(), k);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        if (labels[r] == ignore_label) continue;
        require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < k,
                "cross_entropy_loss: label out of range");
        ++out.counted;
    }
    if (out.counted == 0) return out;
    const T inv = T(1) / static_cast<T>(out.counted);
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        if (labels[r] == ignore_label) continue;
        auto row = logits.row(r);
        T mx = row[0];
        for (T v : row) mx = std::max(mx, v);
        T sum = T(0);
        for (T v : row) sum += std::exp(v - mx);
        const T lse = mx + std::log(sum);
        total += static_cast<double>(lse - row[labels[r]]);
        auto g = out.grad.row(r);
        for (std::size_t c = 0; c < k; ++c) g[c] = std::exp(row[c] - lse) * inv;
        g[labels[r]] -= inv;
    }
    out.loss = total / static_cast<double>(out.counted);
    return out;
}

} // namespace radfuse
