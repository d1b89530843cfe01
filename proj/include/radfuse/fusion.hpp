#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/nn.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

/// C x Z x H x W -> (C*Z) x 1 x H x W. Output channel c*Z + z is input
/// (c, z); the memory layout is unchanged.
template <typename T>
Volume<T> collapse_height(const Volume<T>& vol) {
    return vol.reshaped(vol.channels() * vol.depth(), 1, vol.height(), vol.width());
}

template <typename T>
Volume<T> collapse_height(Volume<T>&& vol) {
    const auto c = vol.channels() * vol.depth();
    const auto h = vol.height(), w = vol.width();
    return std::move(vol).reshaped(c, 1, h, w);
}

/// Inverse of collapse_height: C_fused x 1 x H x W -> (C_fused / Z) x Z x H x W.
template <typename T>
Volume<T> height_reproject(const Volume<T>& fused, std::size_t depth) {
    require(fused.depth() == 1, "height_reproject: expected a BEV map");
    require(depth >= 1 && fused.channels() % depth == 0,
            "height_reproject: " + std::to_string(fused.channels()) + " channels not divisible by depth " +
                std::to_string(depth));
    return fused.reshaped(fused.channels() / depth, depth, fused.height(), fused.width());
}

/// Channel concatenation, `first` channels before `second`.
template <typename T>
Volume<T> concat_volume(const Volume<T>& first, const Volume<T>& second) {
    require(first.depth() == second.depth() && first.height() == second.height() && first.width() == second.width(),
            "concat_volume: spatial mismatch " + first.shape_string() + " vs " + second.shape_string());
    Volume<T> out(first.channels() + second.channels(), first.depth(), first.height(), first.width());
    std::copy(first.data().begin(), first.data().end(), out.data().begin());
    std::copy(second.data().begin(), second.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(first.size()));
    return out;
}

/// Bilinear footprint of a continuous (col, row) position over cell centers.
/// Corners outside the map are dropped; positions outside
/// [-0.5, W-0.5] x [-0.5, H-0.5] have no corners at all.
template <typename T>
struct BilinearTap {
    std::array<std::ptrdiff_t, 4> cell{-1, -1, -1, -1}; // linear cell index or -1
    std::array<T, 4> weight{};
    std::array<T, 4> d_dx{}; // derivative of each weight w.r.t. x
    std::array<T, 4> d_dy{};
};

template <typename T>
BilinearTap<T> bilinear_tap(std::size_t height, std::size_t width, T x, T y) {
    require(std::isfinite(x) && std::isfinite(y), "bilinear_sample: non-finite coordinates");
    BilinearTap<T> tap;
    const T h = static_cast<T>(height), w = static_cast<T>(width);
    if (x < T(-0.5) || x > w - T(0.5) || y < T(-0.5) || y > h - T(0.5)) return tap;
    const T x0f = std::floor(x), y0f = std::floor(y);
    const T fx = x - x0f, fy = y - y0f;
    const auto x0 = static_cast<std::ptrdiff_t>(x0f), y0 = static_cast<std::ptrdiff_t>(y0f);
    const std::array<std::ptrdiff_t, 4> rows{y0, y0, y0 + 1, y0 + 1};
    const std::array<std::ptrdiff_t, 4> cols{x0, x0 + 1, x0, x0 + 1};
    const std::array<T, 4> wts{(T(1) - fx) * (T(1) - fy), fx * (T(1) - fy), (T(1) - fx) * fy, fx * fy};
    const std::array<T, 4> ddx{-(T(1) - fy), T(1) - fy, -fy, fy};
    const std::array<T, 4> ddy{-(T(1) - fx), -fx, T(1) - fx, fx};
    for (int k = 0; k < 4; ++k) {
        if (rows[k] < 0 || cols[k] < 0 || rows[k] >= static_cast<std::ptrdiff_t>(height) ||
            cols[k] >= static_cast<std::ptrdiff_t>(width))
            continue;
        tap.cell[k] = rows[k] * static_cast<std::ptrdiff_t>(width) + cols[k];
        tap.weight[k] = wts[k];
        tap.d_dx[k] = ddx[k];
        tap.d_dy[k] = ddy[k];
    }
    return tap;
}

/// Samples a C x 1 x H x W map at continuous column x and row y.
template <typename T>
std::vector<T> bilinear_sample(const Volume<T>& map, T x, T y) {
    require(map.depth() == 1, "bilinear_sample: expected a BEV map");
    const auto tap = bilinear_tap<T>(map.height(), map.width(), x, y);
    std::vector<T> out(map.channels(), T(0));
    const std::size_t plane = map.plane();
    for (int k = 0; k < 4; ++k) {
        if (tap.cell[k] < 0) continue;
        for (std::size_t c = 0; c < map.channels(); ++c)
            out[c] += tap.weight[k] * map.data()[c * plane + static_cast<std::size_t>(tap.cell[k])];
    }
    return out;
}

struct FusionDims {
    std::size_t img_channels = 32;  // C_I * Z_I after collapse
    std::size_t radar_channels = 16;
    std::size_t embed = 32;         // D
    std::size_t points = 4;         // sampling points per modality
    std::size_t fused_channels = 32;
    std::size_t depth = 4;          // Z of the re-projected volume

    void validate() const {
        require(img_channels >= 1 && radar_channels >= 1 && embed >= 1 && points >= 1 && depth >= 1,
                "fusion dims must be >= 1");
        require(fused_channels % depth == 0, "fusion: fused channels " + std::to_string(fused_channels) +
                                                 " must equal C* x Z for depth " + std::to_string(depth));
    }
    bool operator==(const FusionDims&) const = default;
};

/// Single-head deformable cross attention over camera and radar BEV maps.
/// Sample slots are ordered camera points first, then radar points.
template <typename T>
struct FusionParams {
    FusionDims dims;
    LinearLayer<T> query;      // (img + radar) -> D
    LinearLayer<T> offset_img; // D -> 2K, (dx, dy) pairs in cells
    LinearLayer<T> offset_rad; // D -> 2K
    LinearLayer<T> weight;     // D -> 2K logits over all sample slots
    LinearLayer<T> value_img;  // img -> D
    LinearLayer<T> value_rad;  // radar -> D
    LinearLayer<T> output;     // D -> C_fused

    FusionParams() = default;
    explicit FusionParams(FusionDims d)
        : dims(d), query(d.img_channels + d.radar_channels, d.embed), offset_img(d.embed, 2 * d.points),
          offset_rad(d.embed, 2 * d.points), weight(d.embed, 2 * d.points), value_img(d.img_channels, d.embed),
          value_rad(d.radar_channels, d.embed), output(d.embed, d.fused_channels) {
        dims.validate();
    }

    // Offsets and attention logits start at zero: every slot samples its own
    // cell with uniform weight.
    static FusionParams init(FusionDims d, Rng& rng) {
        FusionParams p(d);
        p.query.init_glorot(rng);
        p.value_img.init_glorot(rng);
        p.value_rad.init_glorot(rng);
        p.output.init_glorot(rng);
        return p;
    }

    std::size_t slots() const noexcept { return 2 * dims.points; }

    void zero_grad() {
        for (auto* l : layers()) l->zero_grad();
    }
    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        query.visit(prefix + ".query", fn);
        offset_img.visit(prefix + ".offset_img", fn);
        offset_rad.visit(prefix + ".offset_rad", fn);
        weight.visit(prefix + ".weight", fn);
        value_img.visit(prefix + ".value_img", fn);
        value_rad.visit(prefix + ".value_rad", fn);
        output.visit(prefix + ".output", fn);
    }

private:
    std::array<LinearLayer<T>*, 7> layers() {
        return {&query, &offset_img, &offset_rad, &weight, &value_img, &value_rad, &output};
    }
};

template <typename T>
struct FusionCache {
    Volume<T> img_bev;
    Volume<T> rad_bev;
    Matrix<T> proj_img;  // (H*W) x D, value_img weights applied per cell, no bias
    Matrix<T> proj_rad;
    Matrix<T> query_in;  // (H*W) x (img + radar)
    Matrix<T> query;     // (H*W) x D
    Matrix<T> offsets;   // (H*W) x 4K, camera pairs then radar pairs
    Matrix<T> attn;      // (H*W) x 2K
    Matrix<T> values;    // (H*W * 2K) x D, sampled values including bias
    Matrix<T> agg;       // (H*W) x D
};

namespace detail {
// Channel-major C x 1 x H x W map -> (H*W) x C rows.
template <typename T>
Matrix<T> cell_rows(const Volume<T>& map) {
    const std::size_t plane = map.plane(), ch = map.channels();
    Matrix<T> rows(plane, ch);
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t cell = 0; cell < plane; ++cell) rows(cell, c) = map.data()[c * plane + cell];
    return rows;
}
} // namespace detail

/// Fuses (C_I*Z_I) x H x W camera BEV features with C_R x H x W radar BEV
/// features into C_fused x H x W. The query at each location is the
/// concatenation of both modalities; both modalities provide values.
template <typename T>
Volume<T> cross_modal_fuse(const Volume<T>& img_bev, const Volume<T>& rad_bev, const FusionParams<T>& params,
                           FusionCache<T>* cache = nullptr) {
    const auto& d = params.dims;
    require(img_bev.depth() == 1 && rad_bev.depth() == 1, "cross_modal_fuse: expected BEV maps");
    require(img_bev.height() == rad_bev.height() && img_bev.width() == rad_bev.width(),
            "cross_modal_fuse: camera map " + img_bev.shape_string() + " and radar map " + rad_bev.shape_string() +
                " differ in H x W");
    require(img_bev.channels() == d.img_channels, "cross_modal_fuse: camera map has " +
                                                      std::to_string(img_bev.channels()) + " channels, expected " +
                                                      std::to_string(d.img_channels));
    require(rad_bev.channels() == d.radar_channels, "cross_modal_fuse: radar map has " +
                                                        std::to_string(rad_bev.channels()) + " channels, expected " +
                                                        std::to_string(d.radar_channels));
    const std::size_t H = img_bev.height(), W = img_bev.width(), plane = H * W;
    const std::size_t D = d.embed, K = d.points, S = 2 * K;
    const std::size_t qdim = d.img_channels + d.radar_channels;

    FusionCache<T> local;
    FusionCache<T>& c = cache ? *cache : local;
    const Matrix<T> img_rows = detail::cell_rows(img_bev);
    const Matrix<T> rad_rows = detail::cell_rows(rad_bev);
    c.proj_img = detail::affine_rows(img_rows, params.value_img.weights, static_cast<const std::vector<T>*>(nullptr));
    c.proj_rad = detail::affine_rows(rad_rows, params.value_rad.weights, static_cast<const std::vector<T>*>(nullptr));
    c.query_in = Matrix<T>(plane, qdim);
    for (std::size_t loc = 0; loc < plane; ++loc) {
        auto qin = c.query_in.row(loc);
        std::copy(img_rows.row(loc).begin(), img_rows.row(loc).end(), qin.begin());
        std::copy(rad_rows.row(loc).begin(), rad_rows.row(loc).end(), qin.begin() + static_cast<std::ptrdiff_t>(d.img_channels));
    }
    c.query = linear_forward(params.query, c.query_in);
    const Matrix<T> off_img = linear_forward(params.offset_img, c.query);
    const Matrix<T> off_rad = linear_forward(params.offset_rad, c.query);
    c.attn = softmax_rows(linear_forward(params.weight, c.query));
    c.offsets = Matrix<T>(plane, 2 * S);
    c.values = Matrix<T>(plane * S, D);
    c.agg = Matrix<T>(plane, D);

    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            const std::size_t loc = i * W + j;
            auto offs = c.offsets.row(loc);
            std::copy(off_img.row(loc).begin(), off_img.row(loc).end(), offs.begin());
            std::copy(off_rad.row(loc).begin(), off_rad.row(loc).end(), offs.begin() + static_cast<std::ptrdiff_t>(S));
            auto attn = c.attn.row(loc);
            auto agg = c.agg.row(loc);
            for (std::size_t s = 0; s < S; ++s) {
                const bool radar = s >= K;
                const Matrix<T>& proj = radar ? c.proj_rad : c.proj_img;
                const auto& bias = radar ? params.value_rad.bias : params.value_img.bias;
                const T x = static_cast<T>(j) + offs[2 * s];
                const T y = static_cast<T>(i) + offs[2 * s + 1];
                const auto tap = bilinear_tap<T>(H, W, x, y);
                T* val = c.values.row(loc * S + s).data();
                for (int t = 0; t < 4; ++t) {
                    if (tap.cell[t] < 0) continue;
                    const T bw = tap.weight[t];
                    const T* src = proj.row(static_cast<std::size_t>(tap.cell[t])).data();
                    for (std::size_t e = 0; e < D; ++e) val[e] += bw * src[e];
                }
                const T a = attn[s];
                T* ag = agg.data();
                for (std::size_t e = 0; e < D; ++e) {
                    val[e] += bias[e];
                    ag[e] += a * val[e];
                }
            }
        }
    }
    const Matrix<T> fused = linear_forward(params.output, c.agg);
    Volume<T> out(d.fused_channels, 1, H, W);
    for (std::size_t k = 0; k < d.fused_channels; ++k)
        for (std::size_t loc = 0; loc < plane; ++loc) out.data()[k * plane + loc] = fused(loc, k);
    if (cache) {
        c.img_bev = img_bev;
        c.rad_bev = rad_bev;
    }
    return out;
}

/// Backward of cross_modal_fuse. Accumulates parameter gradients and returns
/// the gradient w.r.t. the radar BEV map (camera features are inputs and get
/// none).
template <typename T>
Volume<T> cross_modal_fuse_backward(FusionParams<T>& params, const FusionCache<T>& c, const Volume<T>& upstream) {
    const auto& d = params.dims;
    const std::size_t H = c.img_bev.height(), W = c.img_bev.width(), plane = H * W;
    require(upstream.channels() == d.fused_channels && upstream.depth() == 1 && upstream.height() == H &&
                upstream.width() == W,
            "cross_modal_fuse_backward: upstream shape mismatch");
    const std::size_t D = d.embed, K = d.points, S = 2 * K;
    const std::size_t qdim = d.img_channels + d.radar_channels;

    Matrix<T> grad_proj_img(plane, D), grad_proj_rad(plane, D);
    Volume<T> grad_rad(d.radar_channels, 1, H, W);
    std::vector<T> g_out(d.fused_channels), g_agg(D), g_attn(S), g_logits(S), g_off(2 * S), g_query(D), g_qin(qdim);

    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            const std::size_t loc = i * W + j;
            for (std::size_t k = 0; k < d.fused_channels; ++k) g_out[k] = upstream.data()[k * plane + loc];
            std::fill(g_agg.begin(), g_agg.end(), T(0));
            params.output.apply_backward(c.agg.row(loc), g_out, g_agg);

            auto attn = c.attn.row(loc);
            auto offs = c.offsets.row(loc);
            for (std::size_t s = 0; s < S; ++s) {
                const bool radar = s >= K;
                auto val = c.values.row(loc * S + s);
                T ga = T(0);
                for (std::size_t e = 0; e < D; ++e) ga += g_agg[e] * val[e];
                g_attn[s] = ga;

                // d value = attn * g_agg; flows to the bias, the sampled map and the offsets.
                auto& gbias = radar ? params.value_rad.grad_bias : params.value_img.grad_bias;
                const Matrix<T>& proj = radar ? c.proj_rad : c.proj_img;
                Matrix<T>& gproj = radar ? grad_proj_rad : grad_proj_img;
                const T x = static_cast<T>(j) + offs[2 * s];
                const T y = static_cast<T>(i) + offs[2 * s + 1];
                const auto tap = bilinear_tap<T>(H, W, x, y);
                T gx = T(0), gy = T(0);
                for (std::size_t e = 0; e < D; ++e) gbias[e] += attn[s] * g_agg[e];
                for (int t = 0; t < 4; ++t) {
                    if (tap.cell[t] < 0) continue;
                    const auto cell = static_cast<std::size_t>(tap.cell[t]);
                    const T* src = proj.row(cell).data();
                    T* gsrc = gproj.row(cell).data();
                    T dot = T(0);
                    for (std::size_t e = 0; e < D; ++e) {
                        const T gv = attn[s] * g_agg[e];
                        gsrc[e] += tap.weight[t] * gv;
                        dot += gv * src[e];
                    }
                    gx += tap.d_dx[t] * dot;
                    gy += tap.d_dy[t] * dot;
                }
                g_off[2 * s] = gx;
                g_off[2 * s + 1] = gy;
            }
            softmax_backward_row<T>(attn, g_attn, g_logits);

            std::fill(g_query.begin(), g_query.end(), T(0));
            auto q = c.query.row(loc);
            params.weight.apply_backward(q, g_logits, g_query);
            params.offset_img.apply_backward(q, std::span<const T>(g_off).subspan(0, S), g_query);
            params.offset_rad.apply_backward(q, std::span<const T>(g_off).subspan(S, S), g_query);
            std::fill(g_qin.begin(), g_qin.end(), T(0));
            params.query.apply_backward(c.query_in.row(loc), g_query, g_qin);
            for (std::size_t k = 0; k < d.radar_channels; ++k)
                grad_rad.data()[k * plane + loc] += g_qin[d.img_channels + k];
        }
    }

    // Per-cell value projections (weights only; bias was handled per sample).
    auto project_back = [&](LinearLayer<T>& layer, const Volume<T>& map, const Matrix<T>& gproj, Volume<T>* gmap) {
        const std::size_t in = map.channels();
        std::vector<T> x(in);
        for (std::size_t cell = 0; cell < plane; ++cell) {
            for (std::size_t k = 0; k < in; ++k) x[k] = map.data()[k * plane + cell];
            for (std::size_t e = 0; e < D; ++e) {
                const T g = gproj(cell, e);
                if (g == T(0)) continue;
                T* gw = layer.grad_weights.row(e).data();
                for (std::size_t k = 0; k < in; ++k) gw[k] += g * x[k];
                if (gmap) {
                    const T* w = layer.weights.row(e).data();
                    for (std::size_t k = 0; k < in; ++k) gmap->data()[k * plane + cell] += g * w[k];
                }
            }
        }
    };
    project_back(params.value_img, c.img_bev, grad_proj_img, nullptr);
    project_back(params.value_rad, c.rad_bev, grad_proj_rad, &grad_rad);
    return grad_rad;
}

} // namespace radfuse
