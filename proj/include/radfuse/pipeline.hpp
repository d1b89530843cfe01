#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "radfuse/adamw.hpp"
#include "radfuse/amplifier.hpp"
#include "radfuse/densifier.hpp"
#include "radfuse/error.hpp"
#include "radfuse/fusion.hpp"
#include "radfuse/grid.hpp"
#include "radfuse/occupancy.hpp"
#include "radfuse/pillar.hpp"
#include "radfuse/synth.hpp"

namespace radfuse {

struct AblationFlags {
    bool radar_enabled = true;
    bool enable_densifier = true;
    bool enable_amplifier = true;

    bool operator==(const AblationFlags&) const = default;

    std::string name() const {
        if (!radar_enabled) return "camera-only";
        if (enable_densifier && enable_amplifier) return "full";
        if (enable_densifier) return "densifier-only";
        if (enable_amplifier) return "amplifier-only";
        return "no-enrichment";
    }

    static AblationFlags from_name(const std::string& n) {
        if (n == "camera-only") return {false, false, false};
        if (n == "full") return {true, true, true};
        if (n == "densifier-only") return {true, true, false};
        if (n == "amplifier-only") return {true, false, true};
        if (n == "no-enrichment") return {true, false, false};
        throw Error("unknown ablation '" + n +
                    "' (expected full, no-enrichment, densifier-only, amplifier-only or camera-only)");
    }
};

struct PipelineConfig {
    GridSpec spec = GridSpec::make(-8, 8, -8, 8, 1.0);
    std::size_t depth = 4;          // Z (camera volume and re-projection)
    int num_classes = 5;            // K; logits have K + 1 channels
    std::size_t radar_channels = 16; // C_R
    std::size_t encoder_hidden = 32;
    std::size_t camera_channels = 8; // C_I
    std::size_t embed = 32;          // D
    std::size_t points = 4;          // sampling points per modality
    std::size_t fused_channels = 32; // C_fused = C*_fused * Z
    DensifierConfig densifier = DensifierConfig::defaults_for(1.0);
    AdamWConfig optimizer;
    std::size_t steps = 500;
    std::size_t batch_size = 8;
    std::size_t checkpoint_every = 0; // 0: no intermediate checkpoints
    bool ignore_free = false;         // drop the free class from the loss
    std::uint64_t seed = 0;
    AblationFlags flags;

    FusionDims fusion_dims() const {
        return {camera_channels * depth, radar_channels, embed, points, fused_channels, depth};
    }
    std::size_t reprojected_channels() const { return fused_channels / depth; }
    std::size_t head_inputs() const { return reprojected_channels() + camera_channels; }

    void validate() const {
        require(depth >= 1 && num_classes >= 1 && radar_channels >= 1 && encoder_hidden >= 1 && camera_channels >= 1,
                "pipeline config: dims must be >= 1");
        fusion_dims().validate();
        densifier.validate();
        require(batch_size >= 1, "pipeline config: batch_size must be >= 1");
    }
};

/// Every learnable array of the model.
template <typename T>
struct ModelParams {
    PointEncoder<T> encoder;
    AmplifierParams<T> amplifier;
    FusionParams<T> fusion;
    LinearLayer<T> head;

    static ModelParams init(const PipelineConfig& cfg) {
        cfg.validate();
        Rng rng(mix_seed(cfg.seed, 0x5eed));
        ModelParams p;
        p.encoder = PointEncoder<T>::random(cfg.encoder_hidden, cfg.radar_channels, rng);
        p.amplifier = AmplifierParams<T>::init(cfg.radar_channels, cfg.radar_channels, rng);
        p.fusion = FusionParams<T>::init(cfg.fusion_dims(), rng);
        p.head = LinearLayer<T>(cfg.head_inputs(), static_cast<std::size_t>(cfg.num_classes) + 1);
        p.head.init_glorot(rng);
        return p;
    }

    void zero_grad() {
        encoder.zero_grad();
        amplifier.zero_grad();
        fusion.zero_grad();
        head.zero_grad();
    }

    void visit(const ParamVisitor<T>& fn) {
        encoder.visit("enc", fn);
        amplifier.visit("amp", fn);
        fusion.visit("fuse", fn);
        head.visit("head", fn);
    }

    std::vector<ParamRef<T>> refs() {
        std::vector<ParamRef<T>> out;
        visit([&](ParamRef<T> r) { out.push_back(std::move(r)); });
        return out;
    }

    std::vector<T> flat() {
        std::vector<T> out;
        for (auto& r : refs()) out.insert(out.end(), r.values.begin(), r.values.end());
        return out;
    }
};

template <typename T>
struct ForwardCache {
    PillarizeCache<T> pillar;
    PillarGrid<T> pillars;   // after pillarize
    PillarGrid<T> densified; // after densify (or pillars)
    AmplifierCache<T> amp;
    PillarGrid<T> radar;     // final radar grid
    Volume<T> rad_bev;
    FusionCache<T> fusion;
    Volume<T> voxels;        // head input
};

namespace detail {
template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw with_stage(stage, e);
    }
}

inline void check_scene(const Scene& scene, const PipelineConfig& cfg) {
    const auto& cam = scene.camera;
    require(cam.channels() == cfg.camera_channels && cam.depth() == cfg.depth && cam.height() == cfg.spec.height &&
                cam.width() == cfg.spec.width,
            "scene: camera volume is " + cam.shape_string() + ", config expects " +
                std::to_string(cfg.camera_channels) + "x" + std::to_string(cfg.depth) + "x" +
                std::to_string(cfg.spec.height) + "x" + std::to_string(cfg.spec.width));
}
} // namespace detail

/// Radar branch up to the dense BEV map: pillarize, then the enrichment
/// stages the flags enable. All zero when radar is disabled.
template <typename T>
Volume<T> radar_bev(const Scene& scene, const ModelParams<T>& params, const PipelineConfig& cfg,
                    ForwardCache<T>* cache = nullptr) {
    const auto& f = cfg.flags;
    if (!f.radar_enabled) return Volume<T>(cfg.radar_channels, 1, cfg.spec.height, cfg.spec.width);
    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    c.pillars = detail::staged("pillarize", [&] {
        return pillarize<T>(scene.points, cfg.spec, params.encoder, cache ? &c.pillar : nullptr);
    });
    c.densified = f.enable_densifier ? detail::staged("densify", [&] { return densify(c.pillars, cfg.densifier); })
                                     : c.pillars;
    if (f.enable_amplifier && !c.densified.empty()) {
        auto amp = detail::staged("amplify", [&] {
            return amplify(params.amplifier, c.densified.feature_matrix(), cache ? &c.amp : nullptr);
        });
        c.radar = c.densified.with_features(std::move(amp));
    } else {
        c.radar = c.densified;
    }
    return to_dense(c.radar);
}

/// Full chain: radar branch, camera collapse, cross-modal fusion, height
/// re-projection, concatenation with the camera volume, occupancy head.
template <typename T>
Volume<T> forward(const Scene& scene, const ModelParams<T>& params, const PipelineConfig& cfg,
                  ForwardCache<T>* cache = nullptr) {
    detail::check_scene(scene, cfg);
    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    c.rad_bev = radar_bev(scene, params, cfg, &c);
    Volume<T> camera = scene.camera.template cast<T>();
    const Volume<T> img_bev = collapse_height(camera);
    const Volume<T> fused = detail::staged("fuse", [&] {
        return cross_modal_fuse(img_bev, c.rad_bev, params.fusion, cache ? &c.fusion : nullptr);
    });
    const Volume<T> reproj = detail::staged("reproject", [&] { return height_reproject(fused, cfg.depth); });
    c.voxels = detail::staged("concat", [&] { return concat_volume(reproj, camera); });
    return detail::staged("head", [&] { return occupancy_head(c.voxels, params.head); });
}

/// Accumulates gradients of every parameter given d loss / d logits. The
/// cache must come from `forward` on the same inputs.
template <typename T>
void backward(ModelParams<T>& params, const ForwardCache<T>& c, const PipelineConfig& cfg, const Volume<T>& grad_logits) {
    Volume<T> grad_vox = occupancy_head_backward(params.head, c.voxels, grad_logits);
    const std::size_t fused_elems = cfg.fused_channels * cfg.spec.cells();
    Volume<T> grad_fused(cfg.fused_channels, 1, cfg.spec.height, cfg.spec.width);
    std::copy(grad_vox.data().begin(), grad_vox.data().begin() + static_cast<std::ptrdiff_t>(fused_elems),
              grad_fused.data().begin());
    Volume<T> grad_rad = cross_modal_fuse_backward(params.fusion, c.fusion, grad_fused);
    if (!cfg.flags.radar_enabled || c.radar.empty()) return;

    const std::size_t plane = cfg.spec.cells(), ch = cfg.radar_channels;
    Matrix<T> g(c.radar.occupied(), ch);
    for (std::size_t n = 0; n < c.radar.occupied(); ++n)
        for (std::size_t k = 0; k < ch; ++k) g(n, k) = grad_rad.data()[k * plane + c.radar.linear_cells()[n]];
    if (cfg.flags.enable_amplifier) g = amplify_backward(params.amplifier, c.amp, g);
    if (cfg.flags.enable_densifier) g = densify_backward(c.pillars, c.densified, cfg.densifier, g);
    pillarize_backward(params.encoder, c.pillar, g);
}

template <typename T>
int loss_ignore_label(const PipelineConfig& cfg) {
    return cfg.ignore_free ? cfg.num_classes : kNoIgnore;
}

/// Mean per-scene cross-entropy over `batch`, with gradients accumulated
/// into `params` (zeroed first).
template <typename T>
double loss_and_gradients(ModelParams<T>& params, const std::vector<const Scene*>& batch, const PipelineConfig& cfg) {
    params.zero_grad();
    double total = 0;
    const T scale = T(1) / static_cast<T>(batch.size());
    for (const Scene* s : batch) {
        ForwardCache<T> cache;
        Volume<T> logits = forward(*s, params, cfg, &cache);
        auto res = voxel_cross_entropy(logits, s->gt, loss_ignore_label<T>(cfg));
        total += res.loss;
        Volume<T> grad(logits.channels(), logits.depth(), logits.height(), logits.width());
        for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] = res.grad.data()[i] * scale;
        backward(params, cache, cfg, grad);
    }
    return total / static_cast<double>(batch.size());
}

template <typename T>
struct TrainResult {
    ModelParams<T> params;
    AdamW<T> optimizer;
    std::vector<std::pair<std::size_t, double>> loss_curve; // (step, batch loss)
};

template <typename T>
using CheckpointFn = std::function<void(std::size_t step, ModelParams<T>&, const AdamW<T>&)>;

/// Minibatch AdamW on cross-entropy. Batches walk a seeded per-epoch
/// permutation of the training scenes. A non-finite loss aborts before the
/// update; checkpoints written earlier are left in place.
template <typename T>
TrainResult<T> train(const std::vector<Scene>& scenes, const PipelineConfig& cfg,
                     std::optional<ModelParams<T>> initial = std::nullopt, const CheckpointFn<T>& on_checkpoint = {}) {
    require(!scenes.empty(), "train: empty training split");
    cfg.validate();
    for (const auto& s : scenes) detail::check_scene(s, cfg);
    TrainResult<T> res{initial ? std::move(*initial) : ModelParams<T>::init(cfg), AdamW<T>(cfg.optimizer), {}};
    Rng order_rng(mix_seed(cfg.seed, 0xba7c));
    std::vector<std::size_t> order(scenes.size());
    std::size_t cursor = order.size();
    const std::size_t bs = std::min(cfg.batch_size, scenes.size());
    std::size_t last_checkpoint = 0;

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        std::vector<const Scene*> batch;
        while (batch.size() < bs) {
            if (cursor == order.size()) {
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
                cursor = 0;
            }
            batch.push_back(&scenes[order[cursor++]]);
        }
        const auto diverged = [&](const std::string& why) {
            return Error("train: " + why + " at step " + std::to_string(step) +
                         "; last finite checkpoint is from step " + std::to_string(last_checkpoint));
        };
        double loss = 0;
        try {
            loss = loss_and_gradients(res.params, batch, cfg);
        } catch (const Error& e) {
            throw diverged(e.what());
        }
        if (!std::isfinite(loss)) throw diverged("non-finite loss");
        res.optimizer.step(res.params.refs());
        res.loss_curve.emplace_back(step, loss);
        if (on_checkpoint && cfg.checkpoint_every && step % cfg.checkpoint_every == 0) {
            on_checkpoint(step, res.params, res.optimizer);
            last_checkpoint = step;
        }
    }
    return res;
}

struct Evaluation {
    MetricsReport report;
    ConfusionCounts counts;
};

/// Dataset-level IoU: counts are summed over scenes before dividing.
template <typename T>
Evaluation evaluate(const ModelParams<T>& params, const std::vector<Scene>& scenes, const PipelineConfig& cfg) {
    require(!scenes.empty(), "evaluate: empty dataset");
    Evaluation ev{{}, ConfusionCounts(cfg.num_classes)};
    for (const auto& s : scenes) {
        require(s.gt.num_classes == cfg.num_classes, "evaluate: scene has K = " + std::to_string(s.gt.num_classes) +
                                                         ", config has K = " + std::to_string(cfg.num_classes));
        auto pred = predict(forward(s, params, cfg));
        ev.counts.add(pred, s.gt);
    }
    const auto& gt0 = scenes.front().gt;
    ev.report = metrics_from_counts(ev.counts, semantic_classes(cfg.num_classes), gt0.dynamic_ids, gt0.class_names);
    return ev;
}

} // namespace radfuse
