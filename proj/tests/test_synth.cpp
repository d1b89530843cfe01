#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace radfuse;

namespace {

SceneConfig noiseless() {
    SceneConfig cfg;
    cfg.clutter_rate = 0;
    cfg.radar_jitter = 0;
    cfg.camera_noise = 0;
    cfg.camera_dropout = 0;
    cfg.radar_rate = 6;
    return cfg;
}

bool same_points(const std::vector<RadarPoint>& a, const std::vector<RadarPoint>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].z != b[i].z || a[i].rcs != b[i].rcs || a[i].vx != b[i].vx ||
            a[i].vy != b[i].vy)
            return false;
    return true;
}

bool same_scene(const Scene& a, const Scene& b) {
    return same_points(a.points, b.points) && a.camera == b.camera && a.gt.labels == b.gt.labels;
}

TEST(SceneConfig, Validation) {
    SceneConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    auto bad = cfg;
    bad.classes.resize(1);
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.camera_dropout = 1.5;
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.clutter_rate = -1;
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.classes[0].max_len = 40;
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.classes[0].min_wid = 0;
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.classes[3].levels = 5;
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.max_objects = 1;
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.camera_channels = 5;
    EXPECT_THROW(bad.validate(), Error);
    EXPECT_THROW(generate_scene(bad, 1), Error);
}

TEST(SceneConfig, ConditionNames) {
    for (auto c : {Condition::kClear, Condition::kNight, Condition::kRain})
        EXPECT_EQ(condition_from_string(to_string(c)), c);
    EXPECT_THROW(condition_from_string("fog"), Error);
}

TEST(CameraCodes, OrthonormalRows) {
    for (double mixing : {0.0, 0.3}) {
        SceneConfig cfg;
        cfg.camera_code_mixing = mixing;
        auto e = camera_codes(cfg);
        ASSERT_EQ(e.rows(), 6u);
        for (std::size_t a = 0; a < e.rows(); ++a)
            for (std::size_t b = 0; b < e.rows(); ++b) {
                double d = 0;
                for (std::size_t c = 0; c < e.cols(); ++c) d += e(a, c) * e(b, c);
                EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-12);
            }
    }
    auto id = camera_codes(SceneConfig{});
    for (std::size_t a = 0; a < id.rows(); ++a)
        for (std::size_t c = 0; c < id.cols(); ++c) EXPECT_EQ(id(a, c), a == c ? 1.0 : 0.0);
}

TEST(GenerateScene, SameSeedBitIdentical) {
    SceneConfig cfg;
    cfg.condition = Condition::kRain;
    for (std::uint64_t s : {0ull, 1ull, 99ull}) EXPECT_TRUE(same_scene(generate_scene(cfg, s), generate_scene(cfg, s)));
    EXPECT_FALSE(same_scene(generate_scene(cfg, 5), generate_scene(cfg, 6)));
}

TEST(GenerateScene, ShapesAndLabels) {
    SceneConfig cfg;
    auto s = generate_scene(cfg, 3);
    EXPECT_EQ(s.camera.channels(), cfg.camera_channels);
    EXPECT_EQ(s.camera.depth(), cfg.depth);
    EXPECT_EQ(s.camera.height(), cfg.spec.height);
    EXPECT_EQ(s.camera.width(), cfg.spec.width);
    EXPECT_EQ(s.gt.depth, cfg.depth);
    EXPECT_EQ(s.gt.num_classes, cfg.num_classes());
    EXPECT_NO_THROW(s.gt.validate());
    EXPECT_EQ(s.gt.dynamic_ids, (std::vector<int>{0, 1, 3, 4}));
    for (const auto& p : s.points) EXPECT_TRUE(p.finite());
}

TEST(GenerateScene, ObjectsStandOnTheGroundAndRespectHeights) {
    SceneConfig cfg;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = generate_scene(cfg, seed);
        for (std::size_t i = 0; i < cfg.spec.height; ++i)
            for (std::size_t j = 0; j < cfg.spec.width; ++j) {
                const int base = s.gt.at(0, i, j);
                const int levels = base == s.gt.free_id() ? 0 : cfg.classes[static_cast<std::size_t>(base)].levels;
                for (std::size_t z = 0; z < cfg.depth; ++z)
                    EXPECT_EQ(s.gt.at(z, i, j), static_cast<int>(z) < levels ? base : s.gt.free_id());
            }
    }
}

TEST(GenerateScene, NoiselessLimit) {
    auto cfg = noiseless();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = generate_scene(cfg, seed);
        EXPECT_EQ(decode_camera(s.camera, cfg).labels, s.gt.labels);
        EXPECT_EQ(camera_reconstruction_error(s, cfg), 0.0);
        for (const auto& p : s.points) {
            auto c = cell_index(cfg.spec, p.x, p.y);
            ASSERT_TRUE(c);
            EXPECT_NE(s.gt.at(0, c->row, c->col), s.gt.free_id());
        }
    }
}

TEST(GenerateScene, RadarOccupancyWithinDilatedFootprints) {
    auto cfg = noiseless();
    cfg.radar_jitter = 0.1; // ten sigma below one cell
    const auto enc = radfuse::testing::identity_encoder<float>();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = generate_scene(cfg, seed);
        auto grid = pillarize(std::span<const RadarPoint>(s.points), cfg.spec, enc);
        const auto H = static_cast<long>(cfg.spec.height), W = static_cast<long>(cfg.spec.width);
        for (auto lin : grid.linear_cells()) {
            const long r = lin / W, c = lin % W;
            bool near_object = false;
            for (long dr = -1; dr <= 1; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < H && cc >= 0 && cc < W &&
                        s.gt.at(0, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) != s.gt.free_id())
                        near_object = true;
                }
            EXPECT_TRUE(near_object) << "seed " << seed << " cell " << lin;
        }
    }
}

TEST(GenerateScene, NoObjectsMeansAllFreeAndClutterOnly) {
    SceneConfig cfg;
    cfg.min_objects = cfg.max_objects = 0;
    cfg.clutter_rate = 10;
    auto s = generate_scene(cfg, 4);
    for (auto l : s.gt.labels) EXPECT_EQ(l, s.gt.free_id());
    EXPECT_FALSE(s.points.empty());
    // Clutter draws its RCS around the low clutter mean.
    double mean = 0;
    for (const auto& p : s.points) mean += p.rcs;
    EXPECT_LT(mean / static_cast<double>(s.points.size()), -5.0);

    cfg.clutter_rate = 0;
    EXPECT_TRUE(generate_scene(cfg, 4).points.empty());
}

TEST(GenerateScene, PerClassRcsMeans) {
    auto cfg = noiseless();
    std::vector<double> sum(cfg.classes.size(), 0);
    std::vector<int> n(cfg.classes.size(), 0);
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        auto s = generate_scene(cfg, seed);
        for (const auto& p : s.points) {
            auto c = cell_index(cfg.spec, p.x, p.y);
            const auto cls = static_cast<std::size_t>(s.gt.at(0, c->row, c->col));
            sum[cls] += p.rcs;
            ++n[cls];
        }
    }
    for (std::size_t k = 0; k < cfg.classes.size(); ++k) {
        ASSERT_GT(n[k], 30) << cfg.classes[k].name;
        EXPECT_NEAR(sum[k] / n[k], cfg.classes[k].rcs_mean, 4 * cfg.classes[k].rcs_spread / std::sqrt(n[k]))
            << cfg.classes[k].name;
    }
}

TEST(GenerateScene, NightAndRainDegradeCamera) {
    SceneConfig clear, night, rain;
    night.condition = Condition::kNight;
    rain.condition = Condition::kRain;
    double e_clear = 0, e_night = 0, e_rain = 0;
    const int seeds = 24;
    for (int s = 0; s < seeds; ++s) {
        e_clear += camera_reconstruction_error(generate_scene(clear, static_cast<std::uint64_t>(s)), clear);
        e_night += camera_reconstruction_error(generate_scene(night, static_cast<std::uint64_t>(s)), night);
        e_rain += camera_reconstruction_error(generate_scene(rain, static_cast<std::uint64_t>(s)), rain);
    }
    EXPECT_GT(e_night, e_clear);
    EXPECT_GT(e_rain, e_clear);
    EXPECT_GT(e_night, e_rain);
    EXPECT_GT(night.effective_dropout(), clear.effective_dropout());
    EXPECT_GT(night.effective_noise(), clear.effective_noise());
}

TEST(GenerateDataset, SplitsByParity) {
    SceneConfig cfg;
    auto ds = generate_dataset(cfg, 4, 11);
    ASSERT_EQ(ds.train.size(), 2u);
    ASSERT_EQ(ds.val.size(), 2u);
    EXPECT_EQ(ds.train[0].seed, scene_seed(11, 0));
    EXPECT_EQ(ds.val[0].seed, scene_seed(11, 1));
    EXPECT_EQ(ds.train[1].seed, scene_seed(11, 2));
    EXPECT_TRUE(same_scene(ds.train[1], generate_scene(cfg, scene_seed(11, 2))));
    EXPECT_FALSE(same_scene(ds.train[0], ds.val[0]));
    EXPECT_THROW(generate_dataset(cfg, 1, 11), Error);

    auto again = generate_dataset(cfg, 4, 11);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_TRUE(same_scene(ds.train[i], again.train[i]));
        EXPECT_TRUE(same_scene(ds.val[i], again.val[i]));
    }
    auto next = generate_dataset(cfg, 4, 12);
    EXPECT_FALSE(same_scene(ds.train[0], next.train[0]));
}

TEST(GenerateDataset, NoSeedSharedAcrossSplits) {
    auto ds = generate_dataset(SceneConfig{}, 40, 3);
    std::set<std::uint64_t> train;
    for (const auto& s : ds.train) train.insert(s.seed);
    for (const auto& s : ds.val) EXPECT_FALSE(train.contains(s.seed));
}

} // namespace
