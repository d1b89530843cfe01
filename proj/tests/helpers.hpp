#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "radfuse.hpp"

namespace radfuse::testing {

/// Random sparse grid with distinct cells, features in [-1, 1] and RCS in
/// [-15, 25] dBsm.
template <typename T>
PillarGrid<T> random_grid(Rng& rng, const GridSpec& spec, std::size_t channels, std::size_t n_sources) {
    std::vector<std::uint32_t> cells(spec.cells());
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = cells.size() - 1; i > 0; --i) std::swap(cells[i], cells[rng.below(i + 1)]);
    n_sources = std::min(n_sources, cells.size());
    std::vector<typename PillarGrid<T>::Entry> entries;
    for (std::size_t k = 0; k < n_sources; ++k) {
        typename PillarGrid<T>::Entry e;
        e.cell = {cells[k] / spec.width, cells[k] % spec.width};
        for (std::size_t c = 0; c < channels; ++c) e.features.push_back(static_cast<T>(rng.uniform(-1, 1)));
        e.rcs = static_cast<T>(rng.uniform(-15, 25));
        entries.push_back(std::move(e));
    }
    return PillarGrid<T>(spec, channels, std::move(entries));
}

/// Encoder whose output equals its 6-vector input: identity rows, zero
/// bias, linear activation.
template <typename T>
PointEncoder<T> identity_encoder() {
    PointEncoder<T> e(kPointFeatures, kPointFeatures);
    for (std::size_t i = 0; i < kPointFeatures; ++i) {
        e.layer1.weights(i, i) = T(1);
        e.layer2.weights(i, i) = T(1);
    }
    e.activation = Activation::kIdentity;
    return e;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

template <typename T>
Volume<T> random_volume(Rng& rng, std::size_t c, std::size_t z, std::size_t h, std::size_t w, double scale = 1.0) {
    Volume<T> v(c, z, h, w);
    for (auto& x : v.data()) x = static_cast<T>(rng.uniform(-scale, scale));
    return v;
}

template <typename T>
Matrix<T> random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix<T> m(r, c);
    for (auto& x : m.data()) x = static_cast<T>(rng.uniform(-scale, scale));
    return m;
}

} // namespace radfuse::testing
