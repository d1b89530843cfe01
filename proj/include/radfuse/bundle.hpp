#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "radfuse/config_io.hpp"
#include "radfuse/io.hpp"
#include "radfuse/synth.hpp"

namespace radfuse::io {

/// On-disk scene: points.csv, camera.bfg, gt.bfg, scene.cfg.
struct BundleInfo {
    std::size_t index = 0;
    std::string split; // train | val
    std::uint64_t seed = 0;
};

inline std::string bundle_name(std::size_t index) {
    std::string n = std::to_string(index);
    return "scene_" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n;
}

inline void write_bundle(const fs::path& dir, const Scene& scene, const SceneConfig& cfg, const BundleInfo& info) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), "cannot create directory " + dir.string());
    write_file(dir / "points.csv", format_points_csv(scene.points));
    write_bfg(dir / "camera.bfg", scene.camera);
    write_bfg(dir / "gt.bfg", occupancy_to_volume(scene.gt));
    KeyValueWriter w;
    w.add("index", info.index).add("split", info.split).add("seed", info.seed);
    SceneConfig c = cfg;
    c.seed = info.seed;
    write_scene_config(w, c);
    write_file(dir / "scene.cfg", w.str());
}

struct LoadedScene {
    Scene scene;
    SceneConfig config;
    BundleInfo info;
};

inline LoadedScene read_bundle(const fs::path& dir) {
    auto kv = KeyValues::load(dir / "scene.cfg");
    LoadedScene out;
    kv.read("index", out.info.index);
    kv.read("split", out.info.split);
    kv.read("seed", out.info.seed);
    require(out.info.split == "train" || out.info.split == "val",
            (dir / "scene.cfg").string() + ": split must be train or val");
    out.config = read_scene_config(kv);
    kv.finish();
    out.scene.seed = out.info.seed;
    out.scene.points = read_points_csv(dir / "points.csv");
    out.scene.camera = read_bfg(dir / "camera.bfg");
    out.scene.gt = occupancy_from_volume(read_bfg(dir / "gt.bfg"), out.config.num_classes());
    out.scene.gt.class_names = out.config.class_names();
    out.scene.gt.dynamic_ids = dynamic_ids_from_names(out.scene.gt.class_names);
    const auto& cam = out.scene.camera;
    require(cam.depth() == out.scene.gt.depth && cam.height() == out.scene.gt.height && cam.width() == out.scene.gt.width,
            dir.string() + ": camera " + cam.shape_string() + " and ground truth dims disagree");
    return out;
}

/// All scene_* bundles in `dir`, ordered by index; `split` filters when set.
inline std::vector<LoadedScene> read_bundles(const fs::path& dir, const std::string& split = "") {
    require(fs::is_directory(dir), "not a directory: " + dir.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && e.path().filename().string().rfind("scene_", 0) == 0) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<LoadedScene> out;
    for (const auto& d : dirs) {
        auto s = read_bundle(d);
        if (split.empty() || s.info.split == split) out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.info.index < b.info.index; });
    return out;
}

} // namespace radfuse::io
