#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

/// Axis-aligned BEV lattice. Rows follow y, columns follow x; cells are
/// half-open boxes [x_min + col*cell, x_min + (col+1)*cell).
struct GridSpec {
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    double cell_size = 0;
    std::size_t height = 0; // rows (y)
    std::size_t width = 0;  // cols (x)

    static GridSpec make(double x_min, double x_max, double y_min, double y_max, double cell_size) {
        require(std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) &&
                    std::isfinite(y_max) && std::isfinite(cell_size),
                "grid spec: non-finite extent");
        require(x_max > x_min && y_max > y_min, "grid spec: empty extent");
        require(cell_size > 0, "grid spec: cell_size must be > 0");
        const double nx = (x_max - x_min) / cell_size;
        const double ny = (y_max - y_min) / cell_size;
        const double w = std::round(nx), h = std::round(ny);
        require(std::abs(w * cell_size - (x_max - x_min)) <= 1e-9 &&
                    std::abs(h * cell_size - (y_max - y_min)) <= 1e-9,
                "grid spec: extents are not integer multiples of cell_size");
        require(w >= 1 && h >= 1, "grid spec: fewer than one cell");
        GridSpec g;
        g.x_min = x_min;
        g.x_max = x_max;
        g.y_min = y_min;
        g.y_max = y_max;
        g.cell_size = cell_size;
        g.width = static_cast<std::size_t>(w);
        g.height = static_cast<std::size_t>(h);
        return g;
    }

    std::size_t cells() const noexcept { return height * width; }
    double center_x(std::size_t col) const { return x_min + (static_cast<double>(col) + 0.5) * cell_size; }
    double center_y(std::size_t row) const { return y_min + (static_cast<double>(row) + 0.5) * cell_size; }

    bool operator==(const GridSpec&) const = default;
};

struct CellIndex {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const CellIndex&) const = default;
};

/// Returns nullopt for points outside the half-open extent.
inline std::optional<CellIndex> cell_index(const GridSpec& spec, double x, double y) {
    if (!(x >= spec.x_min && x < spec.x_max && y >= spec.y_min && y < spec.y_max)) return std::nullopt;
    auto col = static_cast<std::size_t>(std::floor((x - spec.x_min) / spec.cell_size));
    auto row = static_cast<std::size_t>(std::floor((y - spec.y_min) / spec.cell_size));
    // Guard against rounding pushing x just below x_max into column W.
    if (col >= spec.width || row >= spec.height) return std::nullopt;
    return CellIndex{row, col};
}

struct RadarPoint {
    double x = 0, y = 0, z = 0; // meters, ego frame
    double rcs = 0;             // dBsm
    double vx = 0, vy = 0;      // m/s

    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(rcs) &&
               std::isfinite(vx) && std::isfinite(vy);
    }
    bool operator==(const RadarPoint&) const = default;
};

/// Sparse BEV grid: only non-empty pillars are stored, in row-major order.
/// Absent cells carry implicit all-zero features.
template <typename T>
class PillarGrid {
public:
    struct Entry {
        CellIndex cell;
        std::vector<T> features;
        std::optional<T> rcs;
    };

    PillarGrid() = default;
    PillarGrid(GridSpec spec, std::size_t channels) : spec_(spec), channels_(channels), features_(0, channels) {
        require(channels >= 1, "pillar grid: channels must be >= 1");
    }

    // Entries may arrive in any order; duplicates are rejected.
    PillarGrid(GridSpec spec, std::size_t channels, std::vector<Entry> entries) : PillarGrid(spec, channels) {
        std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
            return linear(a.cell) < linear(b.cell);
        });
        features_ = Matrix<T>(entries.size(), channels);
        cells_.reserve(entries.size());
        rcs_.reserve(entries.size());
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const auto& e = entries[k];
            require(e.cell.row < spec.height && e.cell.col < spec.width, "pillar grid: cell out of range");
            require(e.features.size() == channels, "pillar grid: feature length != channels");
            require(all_finite<T>(e.features), "pillar grid: non-finite feature");
            const auto lin = linear(e.cell);
            require(cells_.empty() || cells_.back() < lin, "pillar grid: duplicate cell");
            cells_.push_back(lin);
            std::copy(e.features.begin(), e.features.end(), features_.row(k).begin());
            rcs_.push_back(e.rcs);
        }
    }

    // Direct construction from already-sorted storage.
    PillarGrid(GridSpec spec, std::vector<std::uint32_t> sorted_cells, Matrix<T> features,
               std::vector<std::optional<T>> rcs)
        : spec_(spec), channels_(features.cols()), cells_(std::move(sorted_cells)),
          features_(std::move(features)), rcs_(std::move(rcs)) {
        require(channels_ >= 1, "pillar grid: channels must be >= 1");
        require(cells_.size() == features_.rows() && cells_.size() == rcs_.size(),
                "pillar grid: storage size mismatch");
        for (std::size_t k = 0; k < cells_.size(); ++k) {
            require(cells_[k] < spec_.cells(), "pillar grid: cell out of range");
            require(k == 0 || cells_[k - 1] < cells_[k], "pillar grid: cells not strictly sorted");
        }
        require(all_finite<T>(features_.data()), "pillar grid: non-finite feature");
    }

    const GridSpec& spec() const noexcept { return spec_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t occupied() const noexcept { return cells_.size(); }
    bool empty() const noexcept { return cells_.empty(); }

    std::uint32_t linear(CellIndex c) const { return static_cast<std::uint32_t>(c.row * spec_.width + c.col); }
    CellIndex cell(std::size_t k) const { return {cells_[k] / spec_.width, cells_[k] % spec_.width}; }
    const std::vector<std::uint32_t>& linear_cells() const noexcept { return cells_; }

    std::span<const T> features(std::size_t k) const { return features_.row(k); }
    const Matrix<T>& feature_matrix() const noexcept { return features_; }
    const std::optional<T>& rcs(std::size_t k) const { return rcs_[k]; }
    const std::vector<std::optional<T>>& rcs_values() const noexcept { return rcs_; }

    // Storage slot of (row, col), or nullopt when the cell is empty.
    std::optional<std::size_t> find(CellIndex c) const {
        const auto lin = linear(c);
        auto it = std::lower_bound(cells_.begin(), cells_.end(), lin);
        if (it == cells_.end() || *it != lin) return std::nullopt;
        return static_cast<std::size_t>(it - cells_.begin());
    }

    // Same cells and rcs, replaced features (row count must match).
    PillarGrid with_features(Matrix<T> features) const {
        require(features.rows() == cells_.size(), "pillar grid: feature rows != occupied cells");
        return PillarGrid(spec_, cells_, std::move(features), rcs_);
    }

    bool operator==(const PillarGrid&) const = default;

private:
    GridSpec spec_;
    std::size_t channels_ = 0;
    std::vector<std::uint32_t> cells_;
    Matrix<T> features_;
    std::vector<std::optional<T>> rcs_;
};

/// C x 1 x H x W dense map; empty cells are zero.
template <typename T>
Volume<T> to_dense(const PillarGrid<T>& grid) {
    const auto& s = grid.spec();
    Volume<T> out(grid.channels(), 1, s.height, s.width);
    const std::size_t plane = s.cells();
    for (std::size_t k = 0; k < grid.occupied(); ++k) {
        const auto lin = grid.linear_cells()[k];
        auto f = grid.features(k);
        for (std::size_t c = 0; c < grid.channels(); ++c) out.data()[c * plane + lin] = f[c];
    }
    return out;
}

/// Cells whose feature vector is not all-zero become occupied. No RCS is
/// attached.
template <typename T>
PillarGrid<T> sparsify(const Volume<T>& dense, const GridSpec& spec) {
    require(dense.depth() == 1, "sparsify: expected a BEV map (Z = 1)");
    require(dense.height() == spec.height && dense.width() == spec.width,
            "sparsify: map is " + std::to_string(dense.height()) + "x" + std::to_string(dense.width()) +
                ", grid is " + std::to_string(spec.height) + "x" + std::to_string(spec.width));
    const std::size_t plane = spec.cells();
    const std::size_t channels = dense.channels();
    std::vector<std::uint32_t> cells;
    for (std::size_t lin = 0; lin < plane; ++lin) {
        for (std::size_t c = 0; c < channels; ++c) {
            if (dense.data()[c * plane + lin] != T(0)) {
                cells.push_back(static_cast<std::uint32_t>(lin));
                break;
            }
        }
    }
    Matrix<T> feats(cells.size(), channels);
    for (std::size_t k = 0; k < cells.size(); ++k)
        for (std::size_t c = 0; c < channels; ++c) feats(k, c) = dense.data()[c * plane + cells[k]];
    std::vector<std::optional<T>> rcs(cells.size());
    return PillarGrid<T>(spec, std::move(cells), std::move(feats), std::move(rcs));
}

} // namespace radfuse
