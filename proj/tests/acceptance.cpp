// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any
// criterion fails. Tolerances and sizes are fixed here, not tuned per run.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace radfuse;
using radfuse::testing::random_grid;
using radfuse::testing::random_matrix;
using radfuse::testing::random_volume;
using radfuse::testing::rel_err;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects the first failure message; later checks still run.
struct Check {
    bool pass = true;
    std::string first;
    void expect(bool ok, const std::string& what) {
        if (!ok && pass) first = what;
        pass = pass && ok;
    }
};

std::string num(double v, int digits = 3) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DensifierConfig random_densifier(Rng& rng, double cell) {
    DensifierConfig c;
    c.sigma_min = cell * rng.uniform(0.1, 0.8);
    c.sigma_base = c.sigma_min + cell * rng.uniform(0.0, 1.5);
    c.sigma_max = c.sigma_base + cell * rng.uniform(0.0, 3.0);
    c.rcs_ref = rng.uniform(-5, 10);
    c.rcs_gain = cell * rng.uniform(0.0, 0.2);
    c.window_radius = static_cast<int>(rng.below(5));
    return c;
}

Outcome densifier_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    const int grids = 150;
    int mismatched = 0;
    for (int trial = 0; trial < grids; ++trial) {
        const std::size_t h = 1 + rng.below(32), w = 1 + rng.below(32);
        const double cell = trial % 3 == 0 ? 0.5 : 1.0;
        const auto spec = GridSpec::make(0, static_cast<double>(w) * cell, 0, static_cast<double>(h) * cell, cell);
        auto grid = random_grid<float>(rng, spec, 1 + rng.below(8), rng.below(21));
        const auto cfg = random_densifier(rng, cell);
        const auto got = to_dense(densify(grid, cfg));
        const auto want = oracle::densify_gather(grid, cfg);
        if (!(got == want && got.data() == want.data())) ++mismatched;
    }
    const double t = seconds_since(t0);
    return {mismatched == 0 && t < 10.0,
            std::to_string(grids - mismatched) + "/" + std::to_string(grids) + " grids bit-exact, " + num(t) + " s (< 10 s)"};
}

Outcome normalization_conservation() {
    Rng rng(202);
    double worst_sum = 0, worst_mass = 0;
    const int configs = 150;
    for (int trial = 0; trial < configs; ++trial) {
        const double cell = rng.uniform(0.2, 2.0);
        const auto spec = GridSpec::make(0, 16 * cell, 0, 16 * cell, cell);
        const auto cfg = random_densifier(rng, cell);
        const double sigma = sigma_from_rcs(rng.uniform(-30, 40), cfg);
        auto win = gaussian_window<float>({8, 8}, sigma, spec, cfg.window_radius);
        double sum = 0;
        for (float x : win.weights) sum += x;
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

        // Sources restricted to cells whose whole window is in bounds.
        const int r = cfg.window_radius;
        const std::size_t side = 8 + 2 * static_cast<std::size_t>(r);
        const auto big = GridSpec::make(0, static_cast<double>(side) * cell, 0, static_cast<double>(side) * cell, cell);
        const auto inner = GridSpec::make(0, 8 * cell, 0, 8 * cell, cell);
        auto local = random_grid<float>(rng, inner, 1 + rng.below(8), 1 + rng.below(20));
        std::vector<PillarGrid<float>::Entry> entries;
        for (std::size_t k = 0; k < local.occupied(); ++k) {
            auto c = local.cell(k);
            entries.push_back({{c.row + static_cast<std::size_t>(r), c.col + static_cast<std::size_t>(r)},
                               {local.features(k).begin(), local.features(k).end()},
                               local.rcs(k)});
        }
        PillarGrid<float> g(big, local.channels(), entries);
        auto out = densify(g, cfg);
        for (std::size_t c = 0; c < g.channels(); ++c) {
            double in_sum = 0, out_sum = 0, scale = 0;
            for (std::size_t k = 0; k < g.occupied(); ++k) {
                in_sum += g.features(k)[c];
                scale += std::abs(g.features(k)[c]);
            }
            for (std::size_t k = 0; k < out.occupied(); ++k) out_sum += out.features(k)[c];
            // Added mass relative to the source mass magnitude.
            worst_mass = std::max(worst_mass, std::abs((out_sum - in_sum) - in_sum) / std::max(scale, 1e-12));
        }
    }
    return {worst_sum <= 1e-6 && worst_mass <= 1e-5,
            std::to_string(configs) + " configs, max |window sum - 1| = " + num(worst_sum) +
                " (<= 1e-6), max relative mass error = " + num(worst_mass) + " (<= 1e-5)"};
}

Outcome coverage() {
    Rng rng(303);
    int failures = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        const auto spec = GridSpec::make(0, 24, 0, 18, 1.0);
        auto g = random_grid<float>(rng, spec, 2, 1 + rng.below(12));
        const auto cfg = random_densifier(rng, 1.0);
        auto out = densify(g, cfg);
        const int r = cfg.window_radius;
        for (std::size_t k = 0; k < g.occupied(); ++k) {
            const auto s = g.cell(k);
            for (int di = -r; di <= r; ++di)
                for (int dj = -r; dj <= r; ++dj) {
                    const long i = static_cast<long>(s.row) + di, j = static_cast<long>(s.col) + dj;
                    if (i < 0 || j < 0 || i >= 18 || j >= 24) continue;
                    if (!out.find({static_cast<std::size_t>(i), static_cast<std::size_t>(j)})) ++failures;
                }
        }
    }
    return {failures == 0, std::to_string(trials) + " grids, " + std::to_string(failures) + " uncovered cells"};
}

Outcome sigma_monotone() {
    Rng rng(404);
    int violations = 0;
    for (int c = 0; c < 20; ++c) {
        const auto cfg = random_densifier(rng, rng.uniform(0.2, 2.0));
        double prev = -1;
        for (int k = 0; k < 1000; ++k) {
            const double s = sigma_from_rcs(-40.0 + 80.0 * k / 999.0, cfg);
            if (s < prev) ++violations;
            prev = s;
        }
    }
    return {violations == 0, "20 configs x 1000 RCS values, " + std::to_string(violations) + " decreases"};
}

Outcome amplifier_contracts() {
    Rng rng(505);
    Check ck;
    double worst_row = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 1 + rng.below(16), n = 1 + rng.below(20);
        auto p = AmplifierParams<float>::init(c, c, rng);
        for (auto* l : {&p.phi1, &p.phi2}) {
            l->init_glorot(rng);
            for (auto& b : l->bias) b = static_cast<float>(rng.uniform(-1, 1));
        }
        auto x = random_matrix<float>(rng, n, c, 5.0);
        auto probs = channel_probabilities(p, x);
        for (std::size_t r = 0; r < n; ++r) {
            double s = 0;
            for (float v : probs.row(r)) s += v;
            worst_row = std::max(worst_row, std::abs(s - 1.0));
        }
        // init() leaves proj = [I | 0].
        auto y = amplify(p, x);
        ck.expect(y.data() == x.data(), "identity projection not bit-exact");
    }
    ck.expect(worst_row <= 1e-6, "probability row sum off by " + num(worst_row));

    double worst_grad = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c = 1 + rng.below(4), n = 1 + rng.below(4);
        auto p = AmplifierParams<double>::init(c, c, rng);
        p.proj.init_glorot(rng);
        for (auto* l : {&p.phi1, &p.phi2, &p.proj})
            for (auto& b : l->bias) b = rng.uniform(-0.5, 0.5);
        auto x = random_matrix<double>(rng, n, c, 2.0);
        auto probe = random_matrix<double>(rng, n, c);
        auto loss = [&](const AmplifierParams<double>& q, const Matrix<double>& in) {
            auto y = amplify(q, in);
            double s = 0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * probe.data()[i];
            return s;
        };
        AmplifierCache<double> cache;
        amplify(p, x, &cache);
        p.zero_grad();
        auto gx = amplify_backward(p, cache, probe);
        const double h = 1e-5;
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto xp = x, xm = x;
            xp.data()[i] += h;
            xm.data()[i] -= h;
            worst_grad = std::max(worst_grad, rel_err((loss(p, xp) - loss(p, xm)) / (2 * h), gx.data()[i]));
        }
        std::vector<double> analytic;
        p.visit("amp", [&](ParamRef<double> r) { analytic.insert(analytic.end(), r.grads.begin(), r.grads.end()); });
        auto q = p;
        std::size_t idx = 0;
        q.visit("amp", [&](ParamRef<double> r) {
            for (std::size_t i = 0; i < r.values.size(); ++i, ++idx) {
                const double orig = r.values[i];
                r.values[i] = orig + h;
                const double up = loss(q, x);
                r.values[i] = orig - h;
                const double down = loss(q, x);
                r.values[i] = orig;
                worst_grad = std::max(worst_grad, rel_err((up - down) / (2 * h), analytic[idx]));
            }
        });
    }
    ck.expect(worst_grad <= 1e-6, "gradient relative error " + num(worst_grad));
    return {ck.pass, ck.pass ? "max |row sum - 1| = " + num(worst_row) + ", identity bit-exact, max gradient error = " +
                                   num(worst_grad) + " (<= 1e-6)"
                             : ck.first};
}

// Micro pipeline for the end-to-end gradient check.
PipelineConfig micro_config() {
    PipelineConfig c;
    c.spec = GridSpec::make(-3, 3, -3, 3, 1.0);
    c.depth = 2;
    c.num_classes = 2;
    c.radar_channels = 4;
    c.encoder_hidden = 8;
    c.camera_channels = 3;
    c.embed = 8;
    c.points = 2;
    c.fused_channels = 4;
    c.batch_size = 1;
    return c;
}

SceneConfig micro_scene_config() {
    SceneConfig s;
    s.spec = GridSpec::make(-3, 3, -3, 3, 1.0);
    s.depth = 2;
    s.classes = {{"car", 2, 3, 1, 2, 2, 10.0, 2.0, 5.0}, {"barrier", 1, 2, 1, 1, 1, 3.0, 1.5, 0.0}};
    s.min_objects = 2;
    s.max_objects = 3;
    s.radar_rate = 4;
    s.clutter_rate = 2;
    s.camera_channels = 3;
    s.condition = Condition::kNight;
    return s;
}

Outcome fusion_contracts() {
    Check ck;
    Rng rng(606);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t z = 1 + rng.below(4);
        auto f = random_volume<float>(rng, z * (1 + rng.below(8)), 1, 1 + rng.below(9), 1 + rng.below(9));
        auto back = collapse_height(height_reproject(f, z));
        ck.expect(back == f && back.data() == f.data(), "collapse(reproject) not bit-exact");
    }

    double worst_attn = 0, worst_oracle = 0;
    const FusionDims d{6, 5, 8, 2, 6, 3};
    for (int trial = 0; trial < 30; ++trial) {
        auto p = FusionParams<double>::init(d, rng);
        for (auto* l : {&p.offset_img, &p.offset_rad, &p.weight}) {
            l->init_glorot(rng);
            for (auto& w : l->weights.data()) w *= 3.0;
        }
        for (auto* l : {&p.query, &p.offset_img, &p.offset_rad, &p.weight, &p.value_img, &p.value_rad, &p.output})
            for (auto& b : l->bias) b = rng.uniform(-0.3, 0.3);
        auto img = random_volume<double>(rng, 6, 1, 4, 4), rad = random_volume<double>(rng, 5, 1, 4, 4);
        FusionCache<double> cache;
        auto got = cross_modal_fuse(img, rad, p, &cache);
        for (std::size_t r = 0; r < cache.attn.rows(); ++r) {
            double s = 0;
            for (double a : cache.attn.row(r)) s += a;
            worst_attn = std::max(worst_attn, std::abs(s - 1.0));
        }
        auto want = oracle::fuse_naive(img, rad, p);
        for (std::size_t i = 0; i < got.size(); ++i)
            worst_oracle = std::max(worst_oracle, rel_err(got.data()[i], want.data()[i]));
    }
    ck.expect(worst_attn <= 1e-6, "attention sum off by " + num(worst_attn));
    ck.expect(worst_oracle <= 1e-6, "oracle relative error " + num(worst_oracle));

    // End-to-end: 32 sampled parameters, float32 analytic gradient against
    // central differences of the same model evaluated in float64.
    auto cfg = micro_config();
    auto scene = generate_dataset(micro_scene_config(), 2, 8).train[0];
    auto pf = ModelParams<float>::init(cfg);
    Rng prng(8);
    for (auto* l : {&pf.fusion.offset_img, &pf.fusion.offset_rad, &pf.fusion.weight}) {
        l->init_glorot(prng);
        for (auto& b : l->bias) b = static_cast<float>(prng.uniform(-0.3, 0.3));
    }
    for (auto& w : pf.amplifier.phi1.weights.data()) w = static_cast<float>(prng.uniform(-0.5, 0.5));
    for (auto& w : pf.amplifier.proj.weights.data()) w += static_cast<float>(prng.uniform(-0.2, 0.2));
    auto pd = ModelParams<double>::init(cfg);
    {
        auto s = pf.refs();
        auto t = pd.refs();
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t k = 0; k < s[i].values.size(); ++k) t[i].values[k] = s[i].values[k];
    }
    const std::vector<const Scene*> batch{&scene};
    loss_and_gradients(pf, batch, cfg);
    auto rf = pf.refs();
    auto rd = pd.refs();
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t r = 0; r < rf.size(); ++r)
        for (std::size_t k = 0; k < rf[r].values.size(); ++k) all.emplace_back(r, k);
    Rng pick(909);
    double worst_e2e = 0;
    std::string worst_name;
    const double h = 1e-6;
    for (int n = 0; n < 32; ++n) {
        auto [r, k] = all[pick.below(all.size())];
        const double orig = rd[r].values[k];
        rd[r].values[k] = orig + h;
        const double up = voxel_cross_entropy(forward(scene, pd, cfg), scene.gt).loss;
        rd[r].values[k] = orig - h;
        const double down = voxel_cross_entropy(forward(scene, pd, cfg), scene.gt).loss;
        rd[r].values[k] = orig;
        const double e = rel_err(rf[r].grads[k], (up - down) / (2 * h));
        if (e > worst_e2e) {
            worst_e2e = e;
            worst_name = rf[r].name + "[" + std::to_string(k) + "]";
        }
    }
    ck.expect(worst_e2e <= 1e-3, "end-to-end gradient error " + num(worst_e2e) + " at " + worst_name);
    return {ck.pass, ck.pass ? "reproject bit-exact, max |attn sum - 1| = " + num(worst_attn) + ", oracle rel err = " +
                                   num(worst_oracle) + ", 32-param float32 gradient rel err = " + num(worst_e2e) +
                                   " (<= 1e-3)"
                             : ck.first};
}

Outcome metric_correctness() {
    Check ck;
    Rng rng(707);
    const int volumes = 300;
    for (int trial = 0; trial < volumes; ++trial) {
        const std::size_t z = 1 + rng.below(8), h = 1 + rng.below(8), w = 1 + rng.below(8);
        const int k = 1 + static_cast<int>(rng.below(6));
        OccupancyVolume gt(z, h, w, k), pred(z, h, w, k);
        for (auto& l : gt.labels) l = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(k + 1)));
        for (auto& l : pred.labels) l = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(k + 1)));
        const double got = miou(pred, gt).miou, want = oracle::miou_confusion(pred, gt);
        ck.expect(got == want || (std::isnan(got) && std::isnan(want)), "miou differs from confusion oracle");
    }
    const auto a = relative_gain(36.34, 41.80);
    const auto b = relative_gain(39.36, 42.90);
    ck.expect(std::abs(a.absolute - 5.46) <= 0.01 && std::abs(a.percent - 15.02) <= 0.01, "36.34 -> 41.80 gain wrong");
    ck.expect(std::abs(b.absolute - 3.54) <= 0.01 && std::abs(b.percent - 8.99) <= 0.01, "39.36 -> 42.90 gain wrong");
    return {ck.pass, ck.pass ? std::to_string(volumes) + " volumes exact; " + io::format_gain(a) + " and " +
                                   io::format_gain(b)
                             : ck.first};
}

Outcome overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineConfig cfg; // 16x16x4, K = 5, 500 steps, lr 4e-4, wd 1e-2
    auto ds = generate_dataset(SceneConfig{}, 4, 21);
    const std::vector<Scene> two(ds.train.begin(), ds.train.end());
    auto res = train<float>(two, cfg);
    const double m = evaluate(res.params, two, cfg).report.miou;
    const double t = seconds_since(t0);
    return {m >= 0.95 && t < 60.0 && cfg.steps <= 500,
            "train mIoU " + num(m, 4) + " (>= 0.95) after " + std::to_string(cfg.steps) + " steps, final loss " +
                num(res.loss_curve.back().second) + ", " + num(t) + " s (< 60 s)"};
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// Night-degraded camera. Each ablation trains its own model; medians over
// three seeds, each seed drawing its own dataset.
Outcome directional() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> models = {"camera-only", "no-enrichment", "densifier-only", "full"};
    std::vector<std::vector<double>> scores(models.size());
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SceneConfig sc;
        sc.condition = Condition::kNight;
        auto ds = generate_dataset(sc, 128, 1000 + seed);
        ds.train.resize(64);
        ds.val.resize(16);
        for (std::size_t m = 0; m < models.size(); ++m) {
            PipelineConfig cfg;
            cfg.steps = 2000;
            cfg.batch_size = 2;
            cfg.seed = seed;
            cfg.flags = AblationFlags::from_name(models[m]);
            auto res = train<float>(ds.train, cfg);
            scores[m].push_back(evaluate(res.params, ds.val, cfg).report.miou);
        }
    }
    const double cam = median3(scores[0]), none = median3(scores[1]), dens = median3(scores[2]),
                 full = median3(scores[3]);
    const double t = seconds_since(t0);
    const bool ok = full >= cam + 0.03 && full >= none + 0.01 && t < 600.0;
    return {ok, "median val mIoU: camera-only " + num(cam) + ", no-enrichment " + num(none) + ", densifier-only " +
                    num(dens) + ", full " + num(full) + "; full - camera = " + num(full - cam) +
                    " (>= 0.03), full - no-enrichment = " + num(full - none) + " (>= 0.01); " + num(t) +
                    " s (< 600 s)"};
}

Outcome determinism() {
    SceneConfig sc;
    sc.condition = Condition::kRain;
    auto ds = generate_dataset(sc, 8, 77);
    PipelineConfig cfg;
    cfg.steps = 60;
    cfg.batch_size = 2;
    cfg.seed = 5;
    auto run = [&] {
        auto res = train<float>(ds.train, cfg);
        const auto ckpt = io::encode_model(res.params, cfg, &res.optimizer);
        const auto report = io::format_report_kv(evaluate(res.params, ds.val, cfg).report);
        return std::make_pair(ckpt, report);
    };
    const auto a = run(), b = run();
    const bool ok = a.first == b.first && a.second == b.second;
    return {ok, std::string("checkpoints ") + (a.first == b.first ? "identical" : "differ") + " (" +
                    std::to_string(a.first.size()) + " bytes), metrics " + (a.second == b.second ? "identical" : "differ")};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"densifier oracle equivalence", densifier_oracle},
        {"weight normalization and conservation", normalization_conservation},
        {"densify coverage", coverage},
        {"sigma monotonicity", sigma_monotone},
        {"amplifier contracts", amplifier_contracts},
        {"fusion contracts", fusion_contracts},
        {"metric correctness", metric_correctness},
        {"overfit check", overfit},
        {"directional fusion experiment", directional},
        {"determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS  " : "FAIL  ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed ? 1 : 0;
}
