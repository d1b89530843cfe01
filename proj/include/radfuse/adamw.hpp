#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/nn.hpp"

namespace radfuse {

struct AdamWConfig {
    double lr = 4e-4;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
/// Moments are keyed by parameter name so a model visitor can be replayed.
template <typename T>
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    const AdamWConfig& config() const noexcept { return cfg_; }
    std::uint64_t steps() const noexcept { return t_; }

    // `params` must list the same names on every call. Gradients are checked
    // for finiteness before any parameter is touched.
    void step(const std::vector<ParamRef<T>>& params) {
        for (const auto& p : params) {
            require(p.values.size() == p.grads.size(), "adamw_step: shape mismatch for " + p.name);
            require(all_finite<T>(std::span<const T>(p.grads.data(), p.grads.size())),
                    "adamw_step: non-finite gradient in " + p.name);
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& p : params) {
            auto& m = first_[p.name];
            auto& v = second_[p.name];
            if (m.empty()) {
                m.assign(p.values.size(), T(0));
                v.assign(p.values.size(), T(0));
            }
            require(m.size() == p.values.size(), "adamw_step: moment shape mismatch for " + p.name);
            for (std::size_t i = 0; i < p.values.size(); ++i) {
                const double g = static_cast<double>(p.grads[i]);
                const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * g;
                const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double m_hat = mi / bc1;
                const double v_hat = vi / bc2;
                const double pv = static_cast<double>(p.values[i]);
                p.values[i] = static_cast<T>(
                    pv - cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * pv));
            }
        }
    }

    const std::map<std::string, std::vector<T>>& first_moments() const noexcept { return first_; }
    const std::map<std::string, std::vector<T>>& second_moments() const noexcept { return second_; }

    void restore(std::uint64_t t, std::map<std::string, std::vector<T>> m,
                 std::map<std::string, std::vector<T>> v) {
        t_ = t;
        first_ = std::move(m);
        second_ = std::move(v);
    }

private:
    AdamWConfig cfg_;
    std::uint64_t t_ = 0;
    std::map<std::string, std::vector<T>> first_;
    std::map<std::string, std::vector<T>> second_;
};

} // namespace radfuse
