#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/grid.hpp"
#include "radfuse/occupancy.hpp"
#include "radfuse/rng.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

enum class Condition { kClear, kNight, kRain };

inline std::string to_string(Condition c) {
    switch (c) {
    case Condition::kClear: return "clear";
    case Condition::kNight: return "night";
    case Condition::kRain: return "rain";
    }
    return "clear";
}

inline Condition condition_from_string(const std::string& s) {
    if (s == "clear") return Condition::kClear;
    if (s == "night") return Condition::kNight;
    if (s == "rain") return Condition::kRain;
    throw Error("unknown condition '" + s + "' (expected clear, night or rain)");
}

/// Box object archetype. Footprints are in cells, heights in voxel levels.
struct ClassProfile {
    std::string name;
    int min_len = 1, max_len = 1; // along the long side
    int min_wid = 1, max_wid = 1;
    int levels = 1;
    double rcs_mean = 0, rcs_spread = 1; // dBsm
    double speed = 0;                    // m/s
};

inline std::vector<ClassProfile> default_class_profiles() {
    return {
        {"car", 3, 4, 2, 2, 2, 10.0, 2.0, 5.0},
        {"pedestrian", 1, 1, 1, 1, 2, -2.0, 1.5, 1.5},
        {"barrier", 3, 4, 1, 1, 1, 4.0, 1.5, 0.0},
        {"truck", 4, 6, 3, 3, 4, 18.0, 2.0, 4.0},
        {"bicycle", 2, 2, 1, 1, 2, 1.0, 1.5, 3.0},
    };
}

struct SceneConfig {
    GridSpec spec = GridSpec::make(-8, 8, -8, 8, 1.0);
    std::size_t depth = 4;   // Z levels
    double level_height = 1.0; // meters per level
    std::vector<ClassProfile> classes = default_class_profiles();
    int min_objects = 3, max_objects = 6;

    double radar_rate = 3.0;   // expected returns per object (Poisson)
    double radar_jitter = 0.3; // meters
    double clutter_rate = 4.0; // expected false returns per scene (Poisson)
    double clutter_rcs_mean = -10.0, clutter_rcs_spread = 3.0;

    std::size_t camera_channels = 8; // C_I
    double camera_gain = 5.0;
    double camera_dropout = 0.0;
    double camera_noise = 0.3;
    Condition condition = Condition::kClear;
    // Extra degradation applied on top of the base values per condition.
    double night_dropout = 0.4, night_noise = 3.0;
    double rain_dropout = 0.2, rain_noise = 1.5;
    double camera_code_mixing = 0.0;    // off-diagonal spread of the class codes
    std::uint64_t camera_code_seed = 7; // fixed class -> channel code table

    std::uint64_t seed = 0;

    int num_classes() const { return static_cast<int>(classes.size()); }

    void validate() const {
        require(classes.size() >= 2, "scene config: need K >= 2 classes");
        require(depth >= 1 && level_height > 0, "scene config: bad depth");
        require(min_objects >= 0 && max_objects >= min_objects, "scene config: bad object count range");
        require(radar_rate >= 0 && radar_jitter >= 0 && clutter_rate >= 0 && clutter_rcs_spread >= 0,
                "scene config: rates must be >= 0");
        require(camera_channels >= classes.size() + 1, "scene config: camera_channels must be >= K + 1");
        require(camera_gain >= 0 && camera_noise >= 0 && night_noise >= 0 && rain_noise >= 0,
                "scene config: camera parameters must be >= 0");
        for (double p : {camera_dropout, night_dropout, rain_dropout})
            require(p >= 0 && p <= 1, "scene config: probabilities must lie in [0, 1]");
        for (const auto& c : classes) {
            require(c.min_len >= 1 && c.max_len >= c.min_len && c.min_wid >= 1 && c.max_wid >= c.min_wid,
                    "scene config: bad footprint for " + c.name);
            require(static_cast<std::size_t>(c.max_len) <= std::min(spec.height, spec.width),
                    "scene config: footprint of " + c.name + " does not fit the grid");
            require(c.levels >= 1 && static_cast<std::size_t>(c.levels) <= depth,
                    "scene config: height of " + c.name + " exceeds depth");
            require(c.rcs_spread >= 0 && c.speed >= 0, "scene config: bad radar profile for " + c.name);
        }
    }

    double effective_dropout() const {
        const double extra = condition == Condition::kNight ? night_dropout
                             : condition == Condition::kRain ? rain_dropout
                                                             : 0.0;
        return 1.0 - (1.0 - camera_dropout) * (1.0 - extra);
    }
    double effective_noise() const {
        const double extra = condition == Condition::kNight ? night_noise
                             : condition == Condition::kRain ? rain_noise
                                                             : 0.0;
        return std::sqrt(camera_noise * camera_noise + extra * extra);
    }

    std::vector<std::string> class_names() const {
        std::vector<std::string> n;
        for (const auto& c : classes) n.push_back(c.name);
        return n;
    }
};

struct Scene {
    std::vector<RadarPoint> points;
    Volume<float> camera; // C_I x Z x H x W
    OccupancyVolume gt;
    std::uint64_t seed = 0;
};

struct SceneObject {
    int class_id = 0;
    std::size_t row0 = 0, col0 = 0, rows = 1, cols = 1;
    double vx = 0, vy = 0;
};

/// (K+1) orthonormal class codes in C_I channels: one-hot, optionally rotated
/// by a fixed random mixing.
inline Matrix<double> camera_codes(const SceneConfig& cfg) {
    const std::size_t codes = cfg.classes.size() + 1;
    Matrix<double> e(codes, cfg.camera_channels);
    Rng rng(cfg.camera_code_seed);
    for (std::size_t k = 0; k < codes; ++k) {
        for (std::size_t c = 0; c < cfg.camera_channels; ++c) e(k, c) = cfg.camera_code_mixing * rng.normal();
        if (k < cfg.camera_channels) e(k, k) += 1.0;
    }
    // Gram-Schmidt over the rows: mixing rotates the codes but keeps them orthonormal.
    for (std::size_t k = 0; k < codes; ++k) {
        auto row = e.row(k);
        for (std::size_t q = 0; q < k; ++q) {
            auto prev = e.row(q);
            double dot = 0;
            for (std::size_t c = 0; c < row.size(); ++c) dot += row[c] * prev[c];
            for (std::size_t c = 0; c < row.size(); ++c) row[c] -= dot * prev[c];
        }
        double norm = 0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : row) v /= norm;
    }
    return e;
}

namespace detail {
inline std::uint64_t poisson(Rng& rng, double mean) {
    if (mean <= 0) return 0;
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = rng.uniform01();
    while (prod > limit) {
        ++k;
        prod *= rng.uniform01();
    }
    return k;
}
} // namespace detail

/// Places non-overlapping box objects, samples radar returns on them plus
/// clutter, and renders a degraded camera volume from the labels.
inline Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const auto& spec = cfg.spec;
    const int K = cfg.num_classes();
    Scene scene;
    scene.seed = seed;
    scene.gt = OccupancyVolume(cfg.depth, spec.height, spec.width, K);
    scene.gt.class_names = cfg.class_names();
    scene.gt.dynamic_ids = dynamic_ids_from_names(scene.gt.class_names);

    std::vector<std::uint8_t> taken(spec.cells(), 0);
    std::vector<SceneObject> objects;
    const auto n_obj = static_cast<int>(cfg.min_objects +
                                        static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1))));
    for (int o = 0; o < n_obj; ++o) {
        const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
        const auto& prof = cfg.classes[static_cast<std::size_t>(cls)];
        const auto len = static_cast<std::size_t>(prof.min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(prof.max_len - prof.min_len + 1))));
        const auto wid = static_cast<std::size_t>(prof.min_wid + static_cast<int>(rng.below(static_cast<std::uint64_t>(prof.max_wid - prof.min_wid + 1))));
        const bool along_x = rng.bernoulli(0.5);
        SceneObject obj;
        obj.class_id = cls;
        obj.rows = along_x ? wid : len;
        obj.cols = along_x ? len : wid;
        const double heading = along_x ? 0.0 : 1.5707963267948966;
        const double dir = rng.bernoulli(0.5) ? 1.0 : -1.0;
        obj.vx = dir * prof.speed * std::cos(heading);
        obj.vy = dir * prof.speed * std::sin(heading);
        // Fixed number of placement attempts keeps the draw count bounded.
        bool placed = false;
        for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
            const auto r0 = static_cast<std::size_t>(rng.below(spec.height - obj.rows + 1));
            const auto c0 = static_cast<std::size_t>(rng.below(spec.width - obj.cols + 1));
            bool clear = true;
            // One free cell of margin between objects.
            for (std::size_t i = (r0 ? r0 - 1 : 0); i < std::min(spec.height, r0 + obj.rows + 1) && clear; ++i)
                for (std::size_t j = (c0 ? c0 - 1 : 0); j < std::min(spec.width, c0 + obj.cols + 1); ++j)
                    if (taken[i * spec.width + j]) {
                        clear = false;
                        break;
                    }
            if (!clear) continue;
            obj.row0 = r0;
            obj.col0 = c0;
            placed = true;
        }
        if (!placed) continue;
        for (std::size_t i = obj.row0; i < obj.row0 + obj.rows; ++i)
            for (std::size_t j = obj.col0; j < obj.col0 + obj.cols; ++j) {
                taken[i * spec.width + j] = 1;
                for (int z = 0; z < prof.levels; ++z) scene.gt.at(static_cast<std::size_t>(z), i, j) = cls;
            }
        objects.push_back(obj);
    }

    for (const auto& obj : objects) {
        const auto& prof = cfg.classes[static_cast<std::size_t>(obj.class_id)];
        const auto n = detail::poisson(rng, cfg.radar_rate);
        for (std::uint64_t k = 0; k < n; ++k) {
            RadarPoint p;
            p.x = spec.x_min + (static_cast<double>(obj.col0) + rng.uniform01() * static_cast<double>(obj.cols)) * spec.cell_size;
            p.y = spec.y_min + (static_cast<double>(obj.row0) + rng.uniform01() * static_cast<double>(obj.rows)) * spec.cell_size;
            p.z = rng.uniform01() * prof.levels * cfg.level_height;
            if (cfg.radar_jitter > 0) {
                p.x += rng.normal(0, cfg.radar_jitter);
                p.y += rng.normal(0, cfg.radar_jitter);
            }
            p.rcs = rng.normal(prof.rcs_mean, prof.rcs_spread);
            p.vx = obj.vx + rng.normal(0, 0.1);
            p.vy = obj.vy + rng.normal(0, 0.1);
            scene.points.push_back(p);
        }
    }
    const auto n_clutter = detail::poisson(rng, cfg.clutter_rate);
    for (std::uint64_t k = 0; k < n_clutter; ++k) {
        RadarPoint p;
        p.x = rng.uniform(spec.x_min, spec.x_max);
        p.y = rng.uniform(spec.y_min, spec.y_max);
        p.z = rng.uniform01() * static_cast<double>(cfg.depth) * cfg.level_height;
        p.rcs = rng.normal(cfg.clutter_rcs_mean, cfg.clutter_rcs_spread);
        p.vx = rng.normal(0, 0.3);
        p.vy = rng.normal(0, 0.3);
        scene.points.push_back(p);
    }

    const auto codes = camera_codes(cfg);
    const double dropout = cfg.effective_dropout();
    const double noise = cfg.effective_noise();
    scene.camera = Volume<float>(cfg.camera_channels, cfg.depth, spec.height, spec.width);
    for (std::size_t c = 0; c < cfg.camera_channels; ++c)
        for (std::size_t z = 0; z < cfg.depth; ++z)
            for (std::size_t i = 0; i < spec.height; ++i)
                for (std::size_t j = 0; j < spec.width; ++j) {
                    double v = cfg.camera_gain * codes(static_cast<std::size_t>(scene.gt.at(z, i, j)), c);
                    if (dropout > 0 && rng.bernoulli(dropout)) v = 0.0;
                    if (noise > 0) v += rng.normal(0, noise);
                    scene.camera(c, z, i, j) = static_cast<float>(v);
                }
    return scene;
}

/// Nearest class code per voxel.
inline OccupancyVolume decode_camera(const Volume<float>& camera, const SceneConfig& cfg) {
    const auto codes = camera_codes(cfg);
    OccupancyVolume out(camera.depth(), camera.height(), camera.width(), cfg.num_classes());
    for (std::size_t z = 0; z < camera.depth(); ++z)
        for (std::size_t i = 0; i < camera.height(); ++i)
            for (std::size_t j = 0; j < camera.width(); ++j) {
                double best = std::numeric_limits<double>::infinity();
                int best_k = 0;
                for (std::size_t k = 0; k < codes.rows(); ++k) {
                    double d = 0;
                    for (std::size_t c = 0; c < camera.channels(); ++c) {
                        const double diff = camera(c, z, i, j) - cfg.camera_gain * codes(k, c);
                        d += diff * diff;
                    }
                    if (d < best) {
                        best = d;
                        best_k = static_cast<int>(k);
                    }
                }
                out.at(z, i, j) = best_k;
            }
    return out;
}

/// Mean squared deviation of the camera volume from the clean class codes.
inline double camera_reconstruction_error(const Scene& scene, const SceneConfig& cfg) {
    const auto codes = camera_codes(cfg);
    double sum = 0;
    const auto& cam = scene.camera;
    for (std::size_t c = 0; c < cam.channels(); ++c)
        for (std::size_t z = 0; z < cam.depth(); ++z)
            for (std::size_t i = 0; i < cam.height(); ++i)
                for (std::size_t j = 0; j < cam.width(); ++j) {
                    const double d = cam(c, z, i, j) - cfg.camera_gain * codes(static_cast<std::size_t>(scene.gt.at(z, i, j)), c);
                    sum += d * d;
                }
    return sum / static_cast<double>(cam.size());
}

struct Dataset {
    std::vector<Scene> train;
    std::vector<Scene> val;
};

inline std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index) { return mix_seed(dataset_seed, index); }

/// Scene i uses seed mix(seed, i); even indices train, odd indices validate.
inline Dataset generate_dataset(const SceneConfig& cfg, std::size_t n_scenes, std::uint64_t seed) {
    require(n_scenes >= 2, "generate_dataset: need at least 2 scenes");
    Dataset ds;
    for (std::size_t i = 0; i < n_scenes; ++i) {
        auto s = generate_scene(cfg, scene_seed(seed, i));
        (i % 2 == 0 ? ds.train : ds.val).push_back(std::move(s));
    }
    return ds;
}

} // namespace radfuse
