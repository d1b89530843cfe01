// radfuse command-line tool. Every subcommand is a thin composition of
// library calls; errors go to stderr as "error: ..." with exit code 1.

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "radfuse.hpp"

namespace fs = std::filesystem;
using namespace radfuse;

namespace {

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) == 1, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

// Reads a key=value file, lets `fill` consume keys, then rejects leftovers.
template <typename F>
void with_config(const std::string& path, F&& fill) {
    auto kv = io::KeyValues::load(path);
    fill(kv);
    kv.finish();
}

PipelineConfig load_pipeline_config(const std::string& path) {
    PipelineConfig cfg;
    if (!path.empty()) with_config(path, [&](io::KeyValues& kv) { cfg = io::read_pipeline_config(kv); });
    return cfg;
}

std::vector<Scene> scenes_of(std::vector<io::LoadedScene>&& loaded) {
    std::vector<Scene> out;
    out.reserve(loaded.size());
    for (auto& l : loaded) out.push_back(std::move(l.scene));
    return out;
}

// --- synth-gen ---------------------------------------------------------------

struct SynthArgs {
    std::string config, out;
    std::size_t scenes = 4;
    std::uint64_t seed = 0;
};

int run_synth_gen(const SynthArgs& a) {
    SceneConfig cfg;
    if (!a.config.empty()) with_config(a.config, [&](io::KeyValues& kv) { cfg = io::read_scene_config(kv); });
    cfg.validate();
    require(a.scenes >= 1, "--scenes must be >= 1");
    std::error_code ec;
    fs::create_directories(a.out, ec);
    require(!ec && fs::is_directory(a.out), "cannot create output directory " + a.out);

    std::string manifest;
    for (std::size_t i = 0; i < a.scenes; ++i) {
        const auto seed = scene_seed(a.seed, i);
        const auto scene = generate_scene(cfg, seed);
        const auto name = io::bundle_name(i);
        io::write_bundle(fs::path(a.out) / name, scene, cfg, {i, i % 2 == 0 ? "train" : "val", seed});
        for (const char* f : {"points.csv", "camera.bfg", "gt.bfg", "scene.cfg"})
            manifest += sha256_hex(io::read_file(fs::path(a.out) / name / f)) + "  " + name + "/" + f + "\n";
    }
    io::write_file(fs::path(a.out) / "manifest.txt", manifest);
    std::cout << manifest;
    return 0;
}

// --- densify -----------------------------------------------------------------

struct DensifyArgs {
    std::string points, grid_config, densifier_config, out;
};

int run_densify(const DensifyArgs& a) {
    GridSpec spec = PipelineConfig{}.spec;
    if (!a.grid_config.empty()) with_config(a.grid_config, [&](io::KeyValues& kv) { spec = io::read_grid_spec(kv, spec); });
    auto dcfg = DensifierConfig::defaults_for(spec.cell_size);
    if (!a.densifier_config.empty())
        with_config(a.densifier_config, [&](io::KeyValues& kv) { dcfg = io::read_densifier(kv, spec.cell_size); });
    const auto pts = io::read_points_csv(a.points);
    io::write_bfg(a.out, api::densify_points(pts, spec, dcfg));
    return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data, config, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
};

int run_train(const TrainArgs& a) {
    auto cfg = load_pipeline_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.steps) cfg.steps = *a.steps;
    cfg.validate();
    auto scenes = scenes_of(io::read_bundles(a.data, "train"));
    require(!scenes.empty(), "no training scenes in " + a.data);

    const auto write_ckpt = [&](ModelParams<float>& params, const AdamW<float>& opt) {
        io::write_file(a.out, io::encode_model(params, cfg, &opt));
    };
    io::write_file(a.out + ".cfg", io::format_pipeline_config(cfg));
    auto res = train<float>(scenes, cfg, std::nullopt,
                            [&](std::size_t, ModelParams<float>& p, const AdamW<float>& o) { write_ckpt(p, o); });
    write_ckpt(res.params, res.optimizer);

    std::string curve = "step,loss\n";
    for (const auto& [step, loss] : res.loss_curve) curve += std::to_string(step) + "," + io::format_double(loss) + "\n";
    io::write_file(a.out + ".loss.csv", curve);
    std::cout << "trained " << cfg.steps << " steps on " << scenes.size() << " scenes ("
              << cfg.flags.name() << "), final loss "
              << (res.loss_curve.empty() ? std::string("n/a") : io::fixed(res.loss_curve.back().second, 6)) << "\n";
    return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string ckpt, data, config, ablation, report, baseline, pred, gt, split = "val";
    int num_classes = 0;
};

std::pair<double, double> read_baseline(const std::string& path) {
    auto kv = io::KeyValues::load(path);
    double miou = 0, miou_d = std::nan("");
    require(kv.has("miou"), path + ": missing key 'miou'");
    kv.read("miou", miou);
    kv.read("miou_dynamic", miou_d);
    return {miou, miou_d};
}

int run_eval(const EvalArgs& a) {
    MetricsReport rep;
    if (!a.pred.empty() || !a.gt.empty()) {
        require(!a.pred.empty() && !a.gt.empty(), "--pred and --gt must be given together");
        require(a.ckpt.empty() && a.data.empty(), "--pred/--gt cannot be combined with --ckpt/--data");
        require(a.num_classes >= 1, "--num-classes is required with --pred/--gt");
        auto pred = io::occupancy_from_volume(io::read_bfg(a.pred), a.num_classes);
        auto gt = io::occupancy_from_volume(io::read_bfg(a.gt), a.num_classes);
        rep = miou(pred, gt);
    } else {
        require(!a.ckpt.empty() && !a.data.empty(), "eval needs --ckpt and --data, or --pred and --gt");
        std::string cfg_path = a.config;
        if (cfg_path.empty() && fs::exists(a.ckpt + ".cfg")) cfg_path = a.ckpt + ".cfg";
        auto cfg = load_pipeline_config(cfg_path);
        const auto sections = io::decode_checkpoint(io::read_file(a.ckpt), a.ckpt);
        const auto stored = io::checkpoint_flags(sections);
        if (!a.ablation.empty()) {
            const auto wanted = AblationFlags::from_name(a.ablation);
            require(wanted == stored, "--ablation " + a.ablation + " does not match the checkpoint, which was trained as " +
                                          stored.name());
        }
        cfg.flags = stored;
        const auto params = io::decode_model(sections, cfg);
        require(a.split == "train" || a.split == "val" || a.split == "all", "--split must be train, val or all");
        auto scenes = scenes_of(io::read_bundles(a.data, a.split == "all" ? "" : a.split));
        require(!scenes.empty(), "no " + a.split + " scenes in " + a.data);
        rep = evaluate(params, scenes, cfg).report;
    }
    std::cout << io::format_report_table(rep);
    if (!a.baseline.empty()) {
        const auto [base, base_d] = read_baseline(a.baseline);
        std::cout << "gain vs baseline (mIoU)   " << io::format_gain(relative_gain(100.0 * base, 100.0 * rep.miou))
                  << "\n";
        if (!std::isnan(base_d) && !std::isnan(rep.miou_dynamic) && base_d > 0)
            std::cout << "gain vs baseline (mIoU_d) "
                      << io::format_gain(relative_gain(100.0 * base_d, 100.0 * rep.miou_dynamic)) << "\n";
    }
    if (!a.report.empty()) io::write_file(a.report, io::format_report_kv(rep));
    return 0;
}

// --- amplify -----------------------------------------------------------------

struct AmplifyArgs {
    std::string in, ckpt, out;
};

int run_amplify(const AmplifyArgs& a) {
    const auto params = io::decode_amplifier(io::decode_checkpoint(io::read_file(a.ckpt), a.ckpt));
    const auto dense = io::read_bfg(a.in);
    require(dense.depth() == 1, a.in + ": expected a BEV map with Z = 1, found " + dense.shape_string());
    require(dense.channels() == params.phi1.in_dim(), a.in + ": feature map has C = " +
                                                          std::to_string(dense.channels()) + ", amplifier expects C = " +
                                                          std::to_string(params.phi1.in_dim()));
    const auto spec = GridSpec::make(0, static_cast<double>(dense.width()), 0, static_cast<double>(dense.height()), 1);
    const auto grid = sparsify(dense, spec);
    Volume<float> out(dense.channels(), 1, dense.height(), dense.width());
    if (!grid.empty()) out = to_dense(grid.with_features(amplify(params, grid.feature_matrix())));
    io::write_bfg(a.out, out);
    return 0;
}

// --- export-bev --------------------------------------------------------------

struct ExportArgs {
    std::string in, out;
    std::optional<std::size_t> channel;
    bool argmax = false;
    std::size_t level = 0;
};

int run_export(const ExportArgs& a) {
    require(a.channel.has_value() != a.argmax, "give exactly one of --channel or --argmax");
    const auto v = io::read_bfg(a.in);
    require(a.level < v.depth(), "--level " + std::to_string(a.level) + " out of range for Z = " + std::to_string(v.depth()));
    const std::size_t H = v.height(), W = v.width();
    if (a.channel) {
        require(*a.channel < v.channels(), "channel " + std::to_string(*a.channel) + " out of range for C = " +
                                               std::to_string(v.channels()));
        float lo = 0, hi = 0;
        bool first = true;
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                const float x = v(*a.channel, a.level, i, j);
                require(std::isfinite(x), a.in + ": non-finite value");
                lo = first ? x : std::min(lo, x);
                hi = first ? x : std::max(hi, x);
                first = false;
            }
        std::vector<std::uint8_t> px(H * W, 0);
        if (hi > lo)
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j)
                    px[i * W + j] = static_cast<std::uint8_t>(
                        std::lround(255.0 * (v(*a.channel, a.level, i, j) - lo) / (static_cast<double>(hi) - lo)));
        io::write_file(a.out, io::encode_pgm(W, H, px));
        return 0;
    }
    // Single-channel volumes hold class ids; otherwise take the argmax over channels.
    std::vector<std::uint8_t> rgb(3 * H * W);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            int id = 0;
            if (v.channels() == 1) {
                const float x = v(0, a.level, i, j);
                require(x == std::floor(x) && x >= 0, a.in + ": value " + io::format_double(x) + " is not a class id");
                id = static_cast<int>(x);
            } else {
                for (std::size_t c = 1; c < v.channels(); ++c)
                    if (v(c, a.level, i, j) > v(static_cast<std::size_t>(id), a.level, i, j)) id = static_cast<int>(c);
            }
            const auto col = io::palette(id);
            std::copy(col.begin(), col.end(), rgb.begin() + static_cast<std::ptrdiff_t>(3 * (i * W + j)));
        }
    io::write_file(a.out, io::encode_ppm(W, H, rgb));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"radfuse: radar-camera occupancy toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth-gen", "generate synthetic scene bundles");
    s->add_option("--config", synth.config, "scene config (key=value)")->check(CLI::ExistingFile);
    s->add_option("--scenes", synth.scenes, "number of scenes")->required();
    s->add_option("--seed", synth.seed, "dataset seed");
    s->add_option("--out", synth.out, "output directory")->required();

    DensifyArgs dens;
    auto* d = app.add_subcommand("densify", "pillarize and densify a radar point CSV");
    d->add_option("--points", dens.points, "points CSV")->required()->check(CLI::ExistingFile);
    d->add_option("--grid-config", dens.grid_config, "grid spec (key=value)")->check(CLI::ExistingFile);
    d->add_option("--densifier-config", dens.densifier_config, "densifier config (key=value)")->check(CLI::ExistingFile);
    d->add_option("--out", dens.out, "output BFG")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train on the train split of a bundle directory");
    t->add_option("--data", tr.data, "bundle directory")->required()->check(CLI::ExistingDirectory);
    t->add_option("--config", tr.config, "pipeline config (key=value)")->check(CLI::ExistingFile);
    t->add_option("--out", tr.out, "checkpoint path")->required();
    t->add_option("--seed", tr.seed, "overrides the config seed");
    t->add_option("--steps", tr.steps, "overrides the config step count");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint or a prediction fixture");
    e->add_option("--ckpt", ev.ckpt, "checkpoint")->check(CLI::ExistingFile);
    e->add_option("--data", ev.data, "bundle directory")->check(CLI::ExistingDirectory);
    e->add_option("--config", ev.config, "pipeline config (default: <ckpt>.cfg when present)")->check(CLI::ExistingFile);
    e->add_option("--split", ev.split, "train, val or all");
    e->add_option("--ablation", ev.ablation, "full, no-enrichment, densifier-only, amplifier-only or camera-only");
    e->add_option("--pred", ev.pred, "predicted labels BFG")->check(CLI::ExistingFile);
    e->add_option("--gt", ev.gt, "ground-truth labels BFG")->check(CLI::ExistingFile);
    e->add_option("--num-classes", ev.num_classes, "K for --pred/--gt");
    e->add_option("--baseline", ev.baseline, "baseline report for relative gain")->check(CLI::ExistingFile);
    e->add_option("--report", ev.report, "write key=value report");

    AmplifyArgs amp;
    auto* a = app.add_subcommand("amplify", "apply a checkpoint's amplifier to a BEV feature map");
    a->add_option("--in", amp.in, "input BFG")->required()->check(CLI::ExistingFile);
    a->add_option("--ckpt", amp.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    a->add_option("--out", amp.out, "output BFG")->required();

    ExportArgs ex;
    auto* x = app.add_subcommand("export-bev", "render one level of a BFG volume as PGM or PPM");
    x->add_option("--in", ex.in, "input BFG")->required()->check(CLI::ExistingFile);
    auto* ch = x->add_option("--channel", ex.channel, "channel to render as grayscale PGM");
    auto* am = x->add_flag("--argmax", ex.argmax, "render class ids as palette PPM");
    ch->excludes(am);
    x->add_option("--level", ex.level, "Z level (default 0)");
    x->add_option("--out", ex.out, "output image")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForVersion& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }

    try {
        if (*s) return run_synth_gen(synth);
        if (*d) return run_densify(dens);
        if (*t) return run_train(tr);
        if (*e) return run_eval(ev);
        if (*a) return run_amplify(amp);
        if (*x) return run_export(ex);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
