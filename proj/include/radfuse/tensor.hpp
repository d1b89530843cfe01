#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "radfuse/error.hpp"

namespace radfuse {

/// Dense row-major matrix. Rows are samples (pillars, locations, voxels),
/// columns are channels.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Matrix<U> cast() const {
        Matrix<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/// Dense C x Z x H x W feature volume, C-major then Z, row, column. BEV maps
/// are volumes with Z = 1.
template <typename T>
class Volume {
public:
    Volume() = default;
    Volume(std::size_t c, std::size_t z, std::size_t h, std::size_t w, T fill = T(0))
        : c_(c), z_(z), h_(h), w_(w), data_(c * z * h * w, fill) {
        require(c >= 1 && z >= 1 && h >= 1 && w >= 1, "volume dims must be >= 1");
    }

    std::size_t channels() const noexcept { return c_; }
    std::size_t depth() const noexcept { return z_; }
    std::size_t height() const noexcept { return h_; }
    std::size_t width() const noexcept { return w_; }
    std::size_t plane() const noexcept { return h_ * w_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t index(std::size_t c, std::size_t z, std::size_t i, std::size_t j) const {
        return ((c * z_ + z) * h_ + i) * w_ + j;
    }

    T& operator()(std::size_t c, std::size_t z, std::size_t i, std::size_t j) {
        return data_[index(c, z, i, j)];
    }
    const T& operator()(std::size_t c, std::size_t z, std::size_t i, std::size_t j) const {
        return data_[index(c, z, i, j)];
    }
    // BEV accessors (z = 0).
    T& at(std::size_t c, std::size_t i, std::size_t j) { return data_[index(c, 0, i, j)]; }
    const T& at(std::size_t c, std::size_t i, std::size_t j) const { return data_[index(c, 0, i, j)]; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool same_shape(const Volume& o) const {
        return c_ == o.c_ && z_ == o.z_ && h_ == o.h_ && w_ == o.w_;
    }

    std::string shape_string() const {
        return std::to_string(c_) + "x" + std::to_string(z_) + "x" + std::to_string(h_) + "x" +
               std::to_string(w_);
    }

    // Reinterprets the same memory with new dims; element count must match.
    Volume reshaped(std::size_t c, std::size_t z, std::size_t h, std::size_t w) const& {
        Volume out = *this;
        return std::move(out).reshaped(c, z, h, w);
    }
    Volume reshaped(std::size_t c, std::size_t z, std::size_t h, std::size_t w) && {
        require(c * z * h * w == data_.size(), "reshape: element count mismatch");
        Volume out;
        out.c_ = c;
        out.z_ = z;
        out.h_ = h;
        out.w_ = w;
        out.data_ = std::move(data_);
        return out;
    }

    template <typename U>
    Volume<U> cast() const {
        Volume<U> out(c_, z_, h_, w_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const Volume&) const = default;

private:
    std::size_t c_ = 0, z_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

template <typename T>
bool all_finite(std::span<const T> xs) {
    for (T x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace radfuse
