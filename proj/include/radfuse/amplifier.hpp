#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/nn.hpp"

namespace radfuse {

/// Channel-probability gate followed by a 2C -> C projection of
/// [F_den, P * F_den].
template <typename T>
struct AmplifierParams {
    LinearLayer<T> phi1; // C -> hidden
    LinearLayer<T> phi2; // hidden -> C
    LinearLayer<T> proj; // 2C -> C

    AmplifierParams() = default;
    AmplifierParams(std::size_t channels, std::size_t hidden)
        : phi1(channels, hidden), phi2(hidden, channels), proj(2 * channels, channels) {}

    // Glorot gate, projection [I | 0] so the module starts as the identity.
    static AmplifierParams init(std::size_t channels, std::size_t hidden, Rng& rng) {
        AmplifierParams p(channels, hidden);
        p.phi1.init_glorot(rng);
        p.phi2.init_glorot(rng);
        p.set_identity_projection();
        return p;
    }

    void set_identity_projection() {
        proj.weights.fill(T(0));
        std::fill(proj.bias.begin(), proj.bias.end(), T(0));
        for (std::size_t c = 0; c < channels(); ++c) proj.weights(c, c) = T(1);
    }

    std::size_t channels() const noexcept { return phi1.in_dim(); }

    void check() const {
        const auto c = channels();
        require(phi2.in_dim() == phi1.out_dim() && phi2.out_dim() == c && proj.in_dim() == 2 * c &&
                    proj.out_dim() == c,
                "amplifier: inconsistent layer dims");
    }

    void zero_grad() {
        phi1.zero_grad();
        phi2.zero_grad();
        proj.zero_grad();
    }
    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        phi1.visit(prefix + ".phi1", fn);
        phi2.visit(prefix + ".phi2", fn);
        proj.visit(prefix + ".proj", fn);
    }
};

template <typename T>
struct AmplifierCache {
    Matrix<T> input;  // F_den
    Matrix<T> hidden; // pre-ReLU
    Matrix<T> probs;  // P
    Matrix<T> concat; // [F_den, P * F_den]
};

namespace detail {
template <typename T>
void check_amplifier_input(const AmplifierParams<T>& params, const Matrix<T>& x) {
    params.check();
    require(x.cols() == params.channels(), "amplifier: input has " + std::to_string(x.cols()) +
                                               " channels, parameters expect " + std::to_string(params.channels()));
    require(all_finite<T>(x.data()), "amplifier: non-finite features");
}
} // namespace detail

/// P = softmax over channels of phi2(relu(phi1(x))), one row per pillar.
/// `logit_shift`, when given, adds a per-row constant before the softmax.
template <typename T>
Matrix<T> channel_probabilities(const AmplifierParams<T>& params, const Matrix<T>& features,
                                std::span<const T> logit_shift = {}, AmplifierCache<T>* cache = nullptr) {
    detail::check_amplifier_input(params, features);
    require(logit_shift.empty() || logit_shift.size() == features.rows(), "channel_probabilities: shift size mismatch");
    Matrix<T> hidden = linear_forward(params.phi1, features);
    Matrix<T> logits = linear_forward(params.phi2, relu_forward(hidden));
    if (!logit_shift.empty())
        for (std::size_t r = 0; r < logits.rows(); ++r)
            for (auto& v : logits.row(r)) v += logit_shift[r];
    Matrix<T> probs = softmax_rows(logits);
    if (cache) cache->hidden = std::move(hidden);
    return probs;
}

template <typename T>
Matrix<T> amplify(const AmplifierParams<T>& params, const Matrix<T>& features, AmplifierCache<T>* cache = nullptr) {
    AmplifierCache<T> local;
    AmplifierCache<T>& c = cache ? *cache : local;
    c.probs = channel_probabilities(params, features, {}, &c);
    const std::size_t ch = features.cols();
    c.concat = Matrix<T>(features.rows(), 2 * ch);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        for (std::size_t k = 0; k < ch; ++k) {
            c.concat(r, k) = features(r, k);
            c.concat(r, ch + k) = c.probs(r, k) * features(r, k);
        }
    }
    if (cache) c.input = features;
    return linear_forward(params.proj, c.concat);
}

/// Chain rule through proj, the concat, the gate product and the gate's
/// perceptron. Needs the cache filled by `amplify`.
template <typename T>
Matrix<T> amplify_backward(AmplifierParams<T>& params, const AmplifierCache<T>& cache, const Matrix<T>& upstream) {
    const Matrix<T>& x = cache.input;
    require(upstream.rows() == x.rows() && upstream.cols() == params.channels(), "amplify_backward: shape mismatch");
    const std::size_t ch = x.cols();
    Matrix<T> grad_concat = linear_backward(params.proj, cache.concat, upstream);
    Matrix<T> grad_x(x.rows(), ch);
    Matrix<T> grad_probs(x.rows(), ch);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < ch; ++k) {
            const T g_gate = grad_concat(r, ch + k);
            grad_x(r, k) = grad_concat(r, k) + g_gate * cache.probs(r, k);
            grad_probs(r, k) = g_gate * x(r, k);
        }
    }
    Matrix<T> grad_logits = softmax_rows_backward(cache.probs, grad_probs);
    Matrix<T> activated = relu_forward(cache.hidden);
    Matrix<T> grad_act = linear_backward(params.phi2, activated, grad_logits);
    Matrix<T> grad_hidden = relu_backward(cache.hidden, grad_act);
    Matrix<T> grad_from_gate = linear_backward(params.phi1, x, grad_hidden);
    for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x.data()[i] += grad_from_gate.data()[i];
    return grad_x;
}

} // namespace radfuse
