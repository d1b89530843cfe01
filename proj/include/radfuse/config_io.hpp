#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "radfuse/adamw.hpp"
#include "radfuse/densifier.hpp"
#include "radfuse/io.hpp"
#include "radfuse/pipeline.hpp"
#include "radfuse/synth.hpp"

namespace radfuse::io {

// Densifier keys, optionally prefixed. Missing keys fall back to the
// defaults for the grid's cell size.
inline DensifierConfig read_densifier(KeyValues& kv, double cell_size, const std::string& prefix = "") {
    auto c = DensifierConfig::defaults_for(cell_size);
    kv.read(prefix + "sigma_base", c.sigma_base);
    kv.read(prefix + "rcs_ref", c.rcs_ref);
    kv.read(prefix + "rcs_gain", c.rcs_gain);
    kv.read(prefix + "sigma_min", c.sigma_min);
    kv.read(prefix + "sigma_max", c.sigma_max);
    kv.read(prefix + "window_radius", c.window_radius);
    c.validate();
    return c;
}

inline void write_densifier(KeyValueWriter& w, const DensifierConfig& c, const std::string& prefix = "") {
    w.add(prefix + "sigma_base", c.sigma_base)
        .add(prefix + "rcs_ref", c.rcs_ref)
        .add(prefix + "rcs_gain", c.rcs_gain)
        .add(prefix + "sigma_min", c.sigma_min)
        .add(prefix + "sigma_max", c.sigma_max)
        .add(prefix + "window_radius", c.window_radius);
}

inline SceneConfig read_scene_config(KeyValues& kv, SceneConfig c = {}) {
    c.spec = read_grid_spec(kv, c.spec);
    kv.read("depth", c.depth);
    kv.read("level_height", c.level_height);
    kv.read("min_objects", c.min_objects);
    kv.read("max_objects", c.max_objects);
    kv.read("radar_rate", c.radar_rate);
    kv.read("radar_jitter", c.radar_jitter);
    kv.read("clutter_rate", c.clutter_rate);
    kv.read("clutter_rcs_mean", c.clutter_rcs_mean);
    kv.read("clutter_rcs_spread", c.clutter_rcs_spread);
    kv.read("camera_channels", c.camera_channels);
    kv.read("camera_gain", c.camera_gain);
    kv.read("camera_dropout", c.camera_dropout);
    kv.read("camera_noise", c.camera_noise);
    if (kv.has("condition")) c.condition = condition_from_string(kv.str("condition"));
    kv.read("night_dropout", c.night_dropout);
    kv.read("night_noise", c.night_noise);
    kv.read("rain_dropout", c.rain_dropout);
    kv.read("rain_noise", c.rain_noise);
    kv.read("camera_code_mixing", c.camera_code_mixing);
    kv.read("camera_code_seed", c.camera_code_seed);
    kv.read("seed", c.seed);
    if (kv.has("num_classes")) {
        std::size_t k = 0;
        kv.read("num_classes", k);
        require(k >= 2, "scene config: num_classes must be >= 2");
        c.classes.resize(k);
    }
    for (std::size_t i = 0; i < c.classes.size(); ++i) {
        auto& p = c.classes[i];
        const std::string pre = "class." + std::to_string(i) + ".";
        if (p.name.empty()) p.name = "class" + std::to_string(i);
        kv.read(pre + "name", p.name);
        kv.read(pre + "min_len", p.min_len);
        kv.read(pre + "max_len", p.max_len);
        kv.read(pre + "min_wid", p.min_wid);
        kv.read(pre + "max_wid", p.max_wid);
        kv.read(pre + "levels", p.levels);
        kv.read(pre + "rcs_mean", p.rcs_mean);
        kv.read(pre + "rcs_spread", p.rcs_spread);
        kv.read(pre + "speed", p.speed);
    }
    c.validate();
    return c;
}

inline void write_scene_config(KeyValueWriter& w, const SceneConfig& c) {
    write_grid_spec(w, c.spec);
    w.add("depth", c.depth).add("level_height", c.level_height);
    w.add("min_objects", c.min_objects).add("max_objects", c.max_objects);
    w.add("radar_rate", c.radar_rate).add("radar_jitter", c.radar_jitter).add("clutter_rate", c.clutter_rate);
    w.add("clutter_rcs_mean", c.clutter_rcs_mean).add("clutter_rcs_spread", c.clutter_rcs_spread);
    w.add("camera_channels", c.camera_channels).add("camera_gain", c.camera_gain);
    w.add("camera_dropout", c.camera_dropout).add("camera_noise", c.camera_noise);
    w.add("condition", to_string(c.condition));
    w.add("night_dropout", c.night_dropout).add("night_noise", c.night_noise);
    w.add("rain_dropout", c.rain_dropout).add("rain_noise", c.rain_noise);
    w.add("camera_code_mixing", c.camera_code_mixing).add("camera_code_seed", c.camera_code_seed);
    w.add("num_classes", c.classes.size());
    for (std::size_t i = 0; i < c.classes.size(); ++i) {
        const auto& p = c.classes[i];
        const std::string pre = "class." + std::to_string(i) + ".";
        w.add(pre + "name", p.name).add(pre + "min_len", p.min_len).add(pre + "max_len", p.max_len);
        w.add(pre + "min_wid", p.min_wid).add(pre + "max_wid", p.max_wid).add(pre + "levels", p.levels);
        w.add(pre + "rcs_mean", p.rcs_mean).add(pre + "rcs_spread", p.rcs_spread).add(pre + "speed", p.speed);
    }
}

inline PipelineConfig read_pipeline_config(KeyValues& kv, PipelineConfig c = {}) {
    c.spec = read_grid_spec(kv, c.spec);
    kv.read("depth", c.depth);
    kv.read("num_classes", c.num_classes);
    kv.read("radar_channels", c.radar_channels);
    kv.read("encoder_hidden", c.encoder_hidden);
    kv.read("camera_channels", c.camera_channels);
    kv.read("embed", c.embed);
    kv.read("points", c.points);
    kv.read("fused_channels", c.fused_channels);
    c.densifier = read_densifier(kv, c.spec.cell_size, "densifier.");
    kv.read("lr", c.optimizer.lr);
    kv.read("weight_decay", c.optimizer.weight_decay);
    kv.read("beta1", c.optimizer.beta1);
    kv.read("beta2", c.optimizer.beta2);
    kv.read("eps", c.optimizer.eps);
    kv.read("steps", c.steps);
    kv.read("batch_size", c.batch_size);
    kv.read("checkpoint_every", c.checkpoint_every);
    kv.read("ignore_free", c.ignore_free);
    kv.read("seed", c.seed);
    kv.read("radar_enabled", c.flags.radar_enabled);
    kv.read("enable_densifier", c.flags.enable_densifier);
    kv.read("enable_amplifier", c.flags.enable_amplifier);
    c.validate();
    return c;
}

inline std::string format_pipeline_config(const PipelineConfig& c) {
    KeyValueWriter w;
    write_grid_spec(w, c.spec);
    w.add("depth", c.depth).add("num_classes", c.num_classes).add("radar_channels", c.radar_channels);
    w.add("encoder_hidden", c.encoder_hidden).add("camera_channels", c.camera_channels).add("embed", c.embed);
    w.add("points", c.points).add("fused_channels", c.fused_channels);
    write_densifier(w, c.densifier, "densifier.");
    w.add("lr", c.optimizer.lr).add("weight_decay", c.optimizer.weight_decay);
    w.add("beta1", c.optimizer.beta1).add("beta2", c.optimizer.beta2).add("eps", c.optimizer.eps);
    w.add("steps", c.steps).add("batch_size", c.batch_size).add("checkpoint_every", c.checkpoint_every);
    w.add("ignore_free", c.ignore_free).add("seed", c.seed);
    w.add("radar_enabled", c.flags.radar_enabled).add("enable_densifier", c.flags.enable_densifier);
    w.add("enable_amplifier", c.flags.enable_amplifier);
    return w.str();
}

// ---------------------------------------------------------------------------
// Checkpoints of ModelParams<float>.

inline std::vector<std::pair<std::string, std::size_t>> checkpoint_meta(const PipelineConfig& c) {
    return {{"meta.depth", c.depth},
            {"meta.num_classes", static_cast<std::size_t>(c.num_classes)},
            {"meta.radar_channels", c.radar_channels},
            {"meta.encoder_hidden", c.encoder_hidden},
            {"meta.camera_channels", c.camera_channels},
            {"meta.embed", c.embed},
            {"meta.points", c.points},
            {"meta.fused_channels", c.fused_channels},
            {"meta.radar_enabled", c.flags.radar_enabled ? 1u : 0u},
            {"meta.enable_densifier", c.flags.enable_densifier ? 1u : 0u},
            {"meta.enable_amplifier", c.flags.enable_amplifier ? 1u : 0u}};
}

inline std::string encode_model(ModelParams<float>& params, const PipelineConfig& cfg,
                                const AdamW<float>* optimizer = nullptr) {
    std::vector<Section> sections;
    for (const auto& [name, value] : checkpoint_meta(cfg)) sections.push_back({name, {1}, {static_cast<float>(value)}});
    for (auto& r : params.refs()) sections.push_back({r.name, r.dims, {r.values.begin(), r.values.end()}});
    if (optimizer) {
        sections.push_back({"adam.step", {1}, {static_cast<float>(optimizer->steps())}});
        for (auto& r : params.refs()) {
            auto m = optimizer->first_moments().find(r.name);
            auto v = optimizer->second_moments().find(r.name);
            if (m == optimizer->first_moments().end()) continue;
            sections.push_back({"adam.m." + r.name, r.dims, m->second});
            sections.push_back({"adam.v." + r.name, r.dims, v->second});
        }
    }
    return encode_checkpoint(sections);
}

inline std::map<std::string, const Section*> index_sections(const std::vector<Section>& sections) {
    std::map<std::string, const Section*> idx;
    for (const auto& s : sections) idx[s.name] = &s;
    return idx;
}

/// Ablation flags a checkpoint was trained with.
inline AblationFlags checkpoint_flags(const std::vector<Section>& sections) {
    auto idx = index_sections(sections);
    auto flag = [&](const std::string& n) {
        auto it = idx.find(n);
        require(it != idx.end() && it->second->values.size() == 1, "checkpoint: missing " + n);
        return it->second->values[0] != 0.0f;
    };
    return {flag("meta.radar_enabled"), flag("meta.enable_densifier"), flag("meta.enable_amplifier")};
}

/// Fills parameters shaped by `cfg`; any dimension disagreement names both
/// sides.
inline ModelParams<float> decode_model(const std::vector<Section>& sections, const PipelineConfig& cfg,
                                       AdamW<float>* optimizer = nullptr) {
    auto idx = index_sections(sections);
    for (const auto& [name, value] : checkpoint_meta(cfg)) {
        if (name == "meta.radar_enabled" || name == "meta.enable_densifier" || name == "meta.enable_amplifier") continue;
        auto it = idx.find(name);
        require(it != idx.end(), "checkpoint: missing section " + name);
        const auto stored = static_cast<std::size_t>(it->second->values.at(0));
        require(stored == value, "dimension mismatch: checkpoint has " + name.substr(5) + "=" + std::to_string(stored) +
                                     ", config has " + name.substr(5) + "=" + std::to_string(value));
    }
    auto params = ModelParams<float>::init(cfg);
    std::map<std::string, std::vector<float>> m, v;
    for (auto& r : params.refs()) {
        auto it = idx.find(r.name);
        require(it != idx.end(), "checkpoint: missing section " + r.name);
        require(it->second->dims == r.dims, "dimension mismatch in " + r.name + ": checkpoint has " +
                                                dims_string(it->second->dims) + ", config expects " +
                                                dims_string(r.dims));
        std::copy(it->second->values.begin(), it->second->values.end(), r.values.begin());
        if (optimizer) {
            auto mi = idx.find("adam.m." + r.name), vi = idx.find("adam.v." + r.name);
            if (mi != idx.end() && vi != idx.end()) {
                m[r.name] = mi->second->values;
                v[r.name] = vi->second->values;
            }
        }
    }
    if (optimizer) {
        auto st = idx.find("adam.step");
        optimizer->restore(st == idx.end() ? 0 : static_cast<std::uint64_t>(st->second->values.at(0)), std::move(m),
                           std::move(v));
    }
    return params;
}

/// Amplifier parameters alone, shaped by what the checkpoint holds.
inline AmplifierParams<float> decode_amplifier(const std::vector<Section>& sections) {
    auto idx = index_sections(sections);
    auto get = [&](const std::string& n) -> const Section& {
        auto it = idx.find(n);
        require(it != idx.end(), "checkpoint: missing section " + n);
        return *it->second;
    };
    const auto& w1 = get("amp.phi1.weight");
    require(w1.dims.size() == 2, "checkpoint: amp.phi1.weight must be rank 2");
    AmplifierParams<float> p(w1.dims[1], w1.dims[0]);
    p.visit("amp", [&](ParamRef<float> r) {
        const auto& s = get(r.name);
        require(s.dims == r.dims, "dimension mismatch in " + r.name + ": checkpoint has " + dims_string(s.dims) +
                                      ", expected " + dims_string(r.dims));
        std::copy(s.values.begin(), s.values.end(), r.values.begin());
    });
    p.check();
    return p;
}

} // namespace radfuse::io
