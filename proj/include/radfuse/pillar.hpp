#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/grid.hpp"
#include "radfuse/nn.hpp"

namespace radfuse {

inline constexpr std::size_t kPointFeatures = 6; // x_rel, y_rel, z, rcs, vx, vy

enum class Activation { kRelu, kIdentity };

/// Shared per-point perceptron: linear(6 -> hidden), activation,
/// linear(hidden -> C). Pillar features are the per-cell elementwise max.
template <typename T>
struct PointEncoder {
    LinearLayer<T> layer1;
    LinearLayer<T> layer2;
    Activation activation = Activation::kRelu;

    PointEncoder() = default;
    PointEncoder(std::size_t hidden, std::size_t channels) : layer1(kPointFeatures, hidden), layer2(hidden, channels) {}

    static PointEncoder random(std::size_t hidden, std::size_t channels, Rng& rng) {
        PointEncoder e(hidden, channels);
        e.layer1.init_glorot(rng);
        e.layer2.init_glorot(rng);
        return e;
    }

    std::size_t channels() const noexcept { return layer2.out_dim(); }

    void check() const {
        require(layer1.in_dim() == kPointFeatures, "point encoder: first layer must take 6 inputs, has " +
                                                       std::to_string(layer1.in_dim()));
        require(layer2.in_dim() == layer1.out_dim(), "point encoder: hidden width mismatch (" +
                                                         std::to_string(layer1.out_dim()) + " vs " +
                                                         std::to_string(layer2.in_dim()) + ")");
    }

    void zero_grad() {
        layer1.zero_grad();
        layer2.zero_grad();
    }
    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        layer1.visit(prefix + ".fc1", fn);
        layer2.visit(prefix + ".fc2", fn);
    }
};

/// Point vector fed to the encoder: offsets from the cell center, then the raw
/// z, RCS and velocity.
template <typename T>
std::array<T, kPointFeatures> augment_point(const RadarPoint& p, const GridSpec& spec, CellIndex cell) {
    return {static_cast<T>(p.x - spec.center_x(cell.col)),
            static_cast<T>(p.y - spec.center_y(cell.row)),
            static_cast<T>(p.z),
            static_cast<T>(p.rcs),
            static_cast<T>(p.vx),
            static_cast<T>(p.vy)};
}

/// Intermediate values kept for the backward pass.
template <typename T>
struct PillarizeCache {
    Matrix<T> inputs;  // P x 6, kept points in bucketed order
    Matrix<T> hidden;  // P x hidden, pre-activation
    Matrix<T> outputs; // P x C
    std::vector<std::size_t> cell_begin;       // N + 1 offsets into the kept points
    std::vector<std::uint32_t> argmax;         // N x C, index into kept points
};

template <typename T>
PillarGrid<T> pillarize(std::span<const RadarPoint> points, const GridSpec& spec, const PointEncoder<T>& enc,
                        PillarizeCache<T>* cache = nullptr) {
    enc.check();
    for (std::size_t i = 0; i < points.size(); ++i)
        require(points[i].finite(), "pillarize: non-finite field in point " + std::to_string(i));

    // Bucket by cell, stable in input order.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> keyed; // (cell, point index)
    keyed.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (auto c = cell_index(spec, points[i].x, points[i].y))
            keyed.emplace_back(static_cast<std::uint32_t>(c->row * spec.width + c->col), static_cast<std::uint32_t>(i));
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](auto a, auto b) { return a.first < b.first; });

    const std::size_t n_kept = keyed.size();
    const std::size_t hid = enc.layer1.out_dim();
    const std::size_t ch = enc.channels();
    Matrix<T> inputs(n_kept, kPointFeatures), hidden(n_kept, hid), outputs(n_kept, ch);
    std::vector<T> act(hid);
    for (std::size_t k = 0; k < n_kept; ++k) {
        const auto lin = keyed[k].first;
        const CellIndex cell{lin / spec.width, lin % spec.width};
        const auto aug = augment_point<T>(points[keyed[k].second], spec, cell);
        std::copy(aug.begin(), aug.end(), inputs.row(k).begin());
        enc.layer1.apply(inputs.row(k), hidden.row(k));
        for (std::size_t h = 0; h < hid; ++h) {
            const T v = hidden(k, h);
            act[h] = enc.activation == Activation::kRelu ? (v > T(0) ? v : T(0)) : v;
        }
        enc.layer2.apply(act, outputs.row(k));
    }

    std::vector<std::uint32_t> cells;
    std::vector<std::size_t> begin;
    for (std::size_t k = 0; k < n_kept; ++k) {
        if (cells.empty() || cells.back() != keyed[k].first) {
            cells.push_back(keyed[k].first);
            begin.push_back(k);
        }
    }
    begin.push_back(n_kept);

    const std::size_t n_cells = cells.size();
    Matrix<T> feats(n_cells, ch);
    std::vector<std::optional<T>> rcs(n_cells);
    std::vector<std::uint32_t> argmax(n_cells * ch);
    for (std::size_t n = 0; n < n_cells; ++n) {
        double best_rcs = points[keyed[begin[n]].second].rcs;
        for (std::size_t c = 0; c < ch; ++c) {
            feats(n, c) = outputs(begin[n], c);
            argmax[n * ch + c] = static_cast<std::uint32_t>(begin[n]);
        }
        for (std::size_t k = begin[n] + 1; k < begin[n + 1]; ++k) {
            best_rcs = std::max(best_rcs, points[keyed[k].second].rcs);
            for (std::size_t c = 0; c < ch; ++c) {
                if (outputs(k, c) > feats(n, c)) {
                    feats(n, c) = outputs(k, c);
                    argmax[n * ch + c] = static_cast<std::uint32_t>(k);
                }
            }
        }
        rcs[n] = static_cast<T>(best_rcs);
    }

    if (cache) {
        cache->inputs = std::move(inputs);
        cache->hidden = std::move(hidden);
        cache->outputs = std::move(outputs);
        cache->cell_begin = begin;
        cache->argmax = std::move(argmax);
    }
    return PillarGrid<T>(spec, std::move(cells), std::move(feats), std::move(rcs));
}

/// Routes each pillar-channel gradient to the point that won the max-pool and
/// back through the shared perceptron. `grad_features` rows follow the grid's
/// occupied cells.
template <typename T>
void pillarize_backward(PointEncoder<T>& enc, const PillarizeCache<T>& cache, const Matrix<T>& grad_features) {
    const std::size_t ch = enc.channels();
    const std::size_t hid = enc.layer1.out_dim();
    const std::size_t n_cells = cache.cell_begin.empty() ? 0 : cache.cell_begin.size() - 1;
    require(grad_features.rows() == n_cells && grad_features.cols() == ch, "pillarize_backward: shape mismatch");
    Matrix<T> grad_out(cache.outputs.rows(), ch);
    for (std::size_t n = 0; n < n_cells; ++n)
        for (std::size_t c = 0; c < ch; ++c) grad_out(cache.argmax[n * ch + c], c) += grad_features(n, c);

    std::vector<T> act(hid), grad_act(hid);
    for (std::size_t k = 0; k < grad_out.rows(); ++k) {
        for (std::size_t h = 0; h < hid; ++h) {
            const T v = cache.hidden(k, h);
            act[h] = enc.activation == Activation::kRelu ? (v > T(0) ? v : T(0)) : v;
        }
        std::fill(grad_act.begin(), grad_act.end(), T(0));
        enc.layer2.apply_backward(act, grad_out.row(k), grad_act);
        if (enc.activation == Activation::kRelu)
            for (std::size_t h = 0; h < hid; ++h)
                if (!(cache.hidden(k, h) > T(0))) grad_act[h] = T(0);
        enc.layer1.apply_backward(cache.inputs.row(k), grad_act, {});
    }
}

} // namespace radfuse
