#pragma once

// Flat-array entry points for host-language bindings. Inputs are contiguous
// row-major buffers plus explicit shapes; outputs are owned float or int32
// buffers in the same layouts as the library types.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "radfuse/amplifier.hpp"
#include "radfuse/densifier.hpp"
#include "radfuse/fusion.hpp"
#include "radfuse/occupancy.hpp"
#include "radfuse/pillar.hpp"

namespace radfuse::api {

// Point encoder used by the standalone densify path.
inline constexpr std::uint64_t kEncoderSeed = 20240901;
inline constexpr std::size_t kEncoderHidden = 32;
inline constexpr std::size_t kEncoderChannels = 16;

inline PointEncoder<float> published_encoder() {
    Rng rng(kEncoderSeed);
    return PointEncoder<float>::random(kEncoderHidden, kEncoderChannels, rng);
}

/// N x 6 rows of x, y, z, rcs, vx, vy.
inline std::vector<RadarPoint> points_from_array(std::span<const float> rows) {
    require(rows.size() % kPointFeatures == 0,
            "points array: length " + std::to_string(rows.size()) + " is not a multiple of 6");
    std::vector<RadarPoint> pts(rows.size() / kPointFeatures);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const float* r = rows.data() + i * kPointFeatures;
        pts[i] = {r[0], r[1], r[2], r[3], r[4], r[5]};
    }
    return pts;
}

/// Dense C x H x W pillar features from the published encoder.
inline Volume<float> pillarize_points(std::span<const RadarPoint> points, const GridSpec& spec) {
    return to_dense(pillarize(points, spec, published_encoder()));
}

/// Pillarize with the published encoder, densify, return C x 1 x H x W.
inline Volume<float> densify_points(std::span<const RadarPoint> points, const GridSpec& spec,
                                    const DensifierConfig& cfg) {
    return to_dense(densify(pillarize(points, spec, published_encoder()), cfg));
}

/// N x C features through the amplifier; returns N x C.
inline std::vector<float> amplify_array(std::span<const float> features, std::size_t n, std::size_t c,
                                        const AmplifierParams<float>& params) {
    require(features.size() == n * c, "amplify array: expected " + std::to_string(n * c) + " values, got " +
                                          std::to_string(features.size()));
    Matrix<float> m(n, c);
    std::copy(features.begin(), features.end(), m.data().begin());
    return amplify(params, m).data();
}

/// Fused BEV map from a height-collapsed camera map (C_I*Z x H x W) and a
/// radar map (C_R x H x W); returns C_fused x H x W.
inline std::vector<float> fuse_arrays(std::span<const float> camera, std::span<const float> radar, std::size_t height,
                                      std::size_t width, const FusionParams<float>& params) {
    const auto& d = params.dims;
    Volume<float> cam(d.img_channels, 1, height, width), rad(d.radar_channels, 1, height, width);
    require(camera.size() == cam.size(), "fuse arrays: camera buffer has " + std::to_string(camera.size()) +
                                             " values, expected " + std::to_string(cam.size()));
    require(radar.size() == rad.size(), "fuse arrays: radar buffer has " + std::to_string(radar.size()) +
                                            " values, expected " + std::to_string(rad.size()));
    std::copy(camera.begin(), camera.end(), cam.data().begin());
    std::copy(radar.begin(), radar.end(), rad.data().begin());
    return cross_modal_fuse(cam, rad, params).data();
}

/// mIoU over semantic ids 0..K-1 of two Z x H x W label buffers.
inline double miou_arrays(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, std::size_t depth,
                          std::size_t height, std::size_t width, int num_classes) {
    OccupancyVolume p(depth, height, width, num_classes), g(depth, height, width, num_classes);
    require(pred.size() == p.voxels() && gt.size() == g.voxels(),
            "miou arrays: buffers must hold " + std::to_string(p.voxels()) + " labels");
    std::copy(pred.begin(), pred.end(), p.labels.begin());
    std::copy(gt.begin(), gt.end(), g.labels.begin());
    p.validate();
    g.validate();
    return miou(p, g).miou;
}

} // namespace radfuse::api
