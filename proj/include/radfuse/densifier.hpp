#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/grid.hpp"

namespace radfuse {

/// RCS-adaptive Gaussian spreading parameters. Widths are in meters, the
/// window radius in cells (Chebyshev).
struct DensifierConfig {
    double sigma_base = 1.0;
    double rcs_ref = 0.0;
    double rcs_gain = 0.1; // meters per dBsm
    double sigma_min = 0.25;
    double sigma_max = 3.0;
    int window_radius = 3;

    // Defaults scale with the cell size.
    static DensifierConfig defaults_for(double cell_size) {
        DensifierConfig c;
        c.sigma_base = 1.0 * cell_size;
        c.rcs_gain = 0.1 * cell_size;
        c.sigma_min = 0.25 * cell_size;
        c.sigma_max = 3.0 * cell_size;
        return c;
    }

    void validate() const {
        require(std::isfinite(sigma_base) && std::isfinite(rcs_ref) && std::isfinite(rcs_gain) &&
                    std::isfinite(sigma_min) && std::isfinite(sigma_max),
                "densifier config: non-finite value");
        require(sigma_min > 0 && sigma_min <= sigma_base && sigma_base <= sigma_max,
                "densifier config: need 0 < sigma_min <= sigma_base <= sigma_max");
        require(rcs_gain >= 0, "densifier config: rcs_gain must be >= 0");
        require(window_radius >= 0, "densifier config: window_radius must be >= 0");
    }

    bool operator==(const DensifierConfig&) const = default;
};

/// sigma = clamp(sigma_base + rcs_gain * (rcs - rcs_ref), sigma_min, sigma_max)
inline double sigma_from_rcs(double rcs, const DensifierConfig& cfg) {
    require(std::isfinite(rcs), "sigma_from_rcs: non-finite rcs");
    return std::clamp(cfg.sigma_base + cfg.rcs_gain * (rcs - cfg.rcs_ref), cfg.sigma_min, cfg.sigma_max);
}

/// Normalized (2r+1)^2 Gaussian weights around a source cell, row offset
/// major. Weights sum to one over the whole window, including offsets that
/// fall outside the grid.
template <typename T>
struct WeightWindow {
    CellIndex source;
    int radius = 0;
    std::vector<T> weights;

    int side() const noexcept { return 2 * radius + 1; }
    T at(int di, int dj) const { return weights[static_cast<std::size_t>((di + radius) * side() + (dj + radius))]; }
};

template <typename T>
WeightWindow<T> gaussian_window(CellIndex source, double sigma, const GridSpec& spec, int radius) {
    require(std::isfinite(sigma) && sigma > 0, "gaussian_window: sigma must be > 0");
    require(radius >= 0, "gaussian_window: radius must be >= 0");
    const int side = 2 * radius + 1;
    std::vector<double> raw(static_cast<std::size_t>(side * side));
    const double denom = 2.0 * sigma * sigma;
    const double cs2 = spec.cell_size * spec.cell_size;
    double sum = 0.0;
    for (int di = -radius; di <= radius; ++di) {
        for (int dj = -radius; dj <= radius; ++dj) {
            const double d2 = cs2 * static_cast<double>(di * di + dj * dj);
            const double w = std::exp(-d2 / denom);
            raw[static_cast<std::size_t>((di + radius) * side + (dj + radius))] = w;
            sum += w;
        }
    }
    WeightWindow<T> win{source, radius, std::vector<T>(raw.size())};
    for (std::size_t k = 0; k < raw.size(); ++k) win.weights[k] = static_cast<T>(raw[k] / sum);
    return win;
}

/// Scatter form of F_den^p = F_o^p + sum_q w_pq F_q. Sources are visited in
/// row-major order and each adds w * F_q into every in-bounds cell of its
/// window (itself included), so every output cell sees its contributions in
/// a fixed order.
template <typename T>
PillarGrid<T> densify(const PillarGrid<T>& grid, const DensifierConfig& cfg) {
    cfg.validate();
    const auto& spec = grid.spec();
    const std::size_t ch = grid.channels();
    const std::size_t plane = spec.cells();
    for (std::size_t k = 0; k < grid.occupied(); ++k) {
        if (!grid.rcs(k)) {
            const auto c = grid.cell(k);
            throw Error("densify: missing pillar RCS at (" + std::to_string(c.row) + ", " + std::to_string(c.col) + ")");
        }
    }

    std::vector<T> acc(plane * ch, T(0));
    std::vector<std::uint8_t> occupied(plane, 0);
    std::vector<T> best_weight(plane, T(-1));
    std::vector<T> best_rcs(plane, T(0));
    for (std::size_t k = 0; k < grid.occupied(); ++k) {
        const auto lin = grid.linear_cells()[k];
        auto f = grid.features(k);
        std::copy(f.begin(), f.end(), acc.begin() + static_cast<std::ptrdiff_t>(lin * ch));
        occupied[lin] = 1;
    }

    const int r = cfg.window_radius;
    const auto height = static_cast<int>(spec.height), width = static_cast<int>(spec.width);
    for (std::size_t k = 0; k < grid.occupied(); ++k) {
        const CellIndex src = grid.cell(k);
        const T src_rcs = *grid.rcs(k);
        const auto win = gaussian_window<T>(src, sigma_from_rcs(static_cast<double>(src_rcs), cfg), spec, r);
        auto f = grid.features(k);
        for (int di = -r; di <= r; ++di) {
            const int row = static_cast<int>(src.row) + di;
            if (row < 0 || row >= height) continue;
            for (int dj = -r; dj <= r; ++dj) {
                const int col = static_cast<int>(src.col) + dj;
                if (col < 0 || col >= width) continue;
                const T w = win.at(di, dj);
                const std::size_t lin = static_cast<std::size_t>(row * width + col);
                T* dst = acc.data() + lin * ch;
                for (std::size_t c = 0; c < ch; ++c) dst[c] += w * f[c];
                occupied[lin] = 1;
                if (w > best_weight[lin] || (w == best_weight[lin] && src_rcs > best_rcs[lin])) {
                    best_weight[lin] = w;
                    best_rcs[lin] = src_rcs;
                }
            }
        }
    }

    std::vector<std::uint32_t> cells;
    for (std::size_t lin = 0; lin < plane; ++lin)
        if (occupied[lin]) cells.push_back(static_cast<std::uint32_t>(lin));
    Matrix<T> feats(cells.size(), ch);
    std::vector<std::optional<T>> rcs(cells.size());
    for (std::size_t n = 0; n < cells.size(); ++n) {
        const auto lin = cells[n];
        std::copy(acc.begin() + static_cast<std::ptrdiff_t>(lin * ch),
                  acc.begin() + static_cast<std::ptrdiff_t>((lin + 1) * ch), feats.row(n).begin());
        if (auto orig = grid.find({lin / spec.width, lin % spec.width}))
            rcs[n] = grid.rcs(*orig);
        else
            rcs[n] = best_rcs[lin];
    }
    return PillarGrid<T>(spec, std::move(cells), std::move(feats), std::move(rcs));
}

/// Transpose of densify: d F_q = d F_den^q + sum_{p in window(q)} w_pq d F_den^p.
/// `output` is the grid densify returned for `input`; rows of the returned
/// matrix follow the input's occupied cells.
template <typename T>
Matrix<T> densify_backward(const PillarGrid<T>& input, const PillarGrid<T>& output, const DensifierConfig& cfg,
                           const Matrix<T>& grad_output) {
    const auto& spec = input.spec();
    const std::size_t ch = input.channels();
    require(grad_output.rows() == output.occupied() && grad_output.cols() == ch, "densify_backward: shape mismatch");
    std::vector<std::int64_t> slot(spec.cells(), -1);
    for (std::size_t n = 0; n < output.occupied(); ++n) slot[output.linear_cells()[n]] = static_cast<std::int64_t>(n);

    Matrix<T> grad_in(input.occupied(), ch);
    const int r = cfg.window_radius;
    const auto height = static_cast<int>(spec.height), width = static_cast<int>(spec.width);
    for (std::size_t k = 0; k < input.occupied(); ++k) {
        const CellIndex src = input.cell(k);
        auto g = grad_in.row(k);
        const auto own = slot[input.linear_cells()[k]];
        for (std::size_t c = 0; c < ch; ++c) g[c] = grad_output(static_cast<std::size_t>(own), c);
        const auto win = gaussian_window<T>(src, sigma_from_rcs(static_cast<double>(*input.rcs(k)), cfg), spec, r);
        for (int di = -r; di <= r; ++di) {
            const int row = static_cast<int>(src.row) + di;
            if (row < 0 || row >= height) continue;
            for (int dj = -r; dj <= r; ++dj) {
                const int col = static_cast<int>(src.col) + dj;
                if (col < 0 || col >= width) continue;
                const T w = win.at(di, dj);
                auto up = grad_output.row(static_cast<std::size_t>(slot[static_cast<std::size_t>(row * width + col)]));
                for (std::size_t c = 0; c < ch; ++c) g[c] += w * up[c];
            }
        }
    }
    return grad_in;
}

} // namespace radfuse
