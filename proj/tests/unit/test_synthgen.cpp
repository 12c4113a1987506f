#include "support.hpp"

#include "reprompt/error.hpp"
#include "reprompt/random.hpp"
#include "reprompt/synthgen.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <set>

using namespace reprompt;
using reprompt::testing::TempDir;

namespace {

std::string read_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(GenerateClip, StaticSceneRepeatsTheFirstMask)
{
    const Clip c = generate_clip(reprompt::testing::static_config(), 4);
    ASSERT_EQ(c.frame_count(), 60);
    for (const Mask& m : c.gt_masks) EXPECT_EQ(m, c.gt_masks.front());
}

TEST(GenerateClip, SameSeedIsBitIdentical)
{
    const ClipConfig cfg;
    EXPECT_EQ(generate_clip(cfg, 123), generate_clip(cfg, 123));
    EXPECT_FALSE(generate_clip(cfg, 123) == generate_clip(cfg, 124));
}

TEST(GenerateClip, DefaultMotionIsSmooth)
{
    const Clip c = generate_clip(ClipConfig{}, 1);
    int smooth = 0;
    for (int t = 1; t < c.frame_count(); ++t) smooth += dice(c.gt_masks[t - 1], c.gt_masks[t]) >= 0.85;
    EXPECT_GE(smooth, 0.9 * (c.frame_count() - 1));
}

TEST(GenerateClip, SmoothAcrossManySeeds)
{
    int smooth = 0, total = 0;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const Clip c = generate_clip(ClipConfig{}, s);
        for (int t = 1; t < c.frame_count(); ++t) {
            smooth += dice(c.gt_masks[t - 1], c.gt_masks[t]) >= 0.85;
            ++total;
        }
    }
    EXPECT_GE(smooth, 0.9 * total);
}

TEST(GenerateClip, LesionNeverEmptyAndStaysInFrame)
{
    const ClipConfig cfg;
    for (std::uint64_t s = 0; s < 30; ++s) {
        const Clip c = generate_clip(cfg, s);
        EXPECT_EQ(c.width, cfg.width);
        EXPECT_EQ(c.height, cfg.height);
        ASSERT_EQ(c.motion.size(), c.gt_masks.size());
        for (const Mask& m : c.gt_masks) {
            ASSERT_FALSE(m.empty());
            const BoxPrompt b = tight_box(m);
            EXPECT_GE(b.x_min, 0);
            EXPECT_LT(b.x_max, cfg.width);
        }
        EXPECT_GE(c.activity, std::exp(-cfg.activity_spread) - 1e-12);
        EXPECT_LE(c.activity, std::exp(cfg.activity_spread) + 1e-12);
    }
}

TEST(GenerateClip, RejectsInvalidConfig)
{
    ClipConfig cfg;
    cfg.frame_count = 1;
    EXPECT_THROW(generate_clip(cfg, 0), Error);
    cfg = ClipConfig{};
    cfg.radius_fraction = 0.6;
    EXPECT_THROW(generate_clip(cfg, 0), Error);
    cfg = ClipConfig{};
    cfg.activity_spread = 5.0;
    EXPECT_THROW(generate_clip(cfg, 0), Error);
}

TEST(GenerateDataset, SingleClipUsesTheDerivedSeed)
{
    const ClipConfig cfg;
    const auto ds = generate_dataset(cfg, 1, 77);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds[0], generate_clip(cfg, derive_seed(77, 0), ds[0].id));
}

TEST(GenerateDataset, RepeatableAndDistinct)
{
    const ClipConfig cfg;
    const auto a = generate_dataset(cfg, 200, 5);
    EXPECT_EQ(a, generate_dataset(cfg, 200, 5));
    std::set<std::string> ids;
    for (const Clip& c : a) ids.insert(c.id);
    EXPECT_EQ(ids.size(), 200u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            EXPECT_FALSE(a[i].gt_masks.front() == a[j].gt_masks.front()) << i << " " << j;
        }
    }
}

TEST(DatasetFile, RoundTripAndStableBytes)
{
    TempDir dir("dataset");
    Dataset ds;
    ds.config.frame_count = 12;
    ds.master_seed = 3;
    ds.clips = generate_dataset(ds.config, 4, 3);
    ds.provenance = {{"tool", "test"}};
    const auto p1 = dir.path() / "a.rpds", p2 = dir.path() / "b.rpds";
    write_dataset(p1, ds);
    write_dataset(p2, ds);
    EXPECT_EQ(read_bytes(p1), read_bytes(p2));

    const Dataset back = read_dataset(p1);
    EXPECT_EQ(back.config, ds.config);
    EXPECT_EQ(back.master_seed, ds.master_seed);
    EXPECT_EQ(back.clips, ds.clips);
    EXPECT_EQ(read_dataset_header(p1).at("clips").size(), 4u);
}

TEST(DatasetFile, CorruptMagicThrows)
{
    TempDir dir("badmagic");
    const auto p = dir.path() / "x.rpds";
    std::ofstream(p) << "NOPE and then some";
    EXPECT_THROW(read_dataset(p), Error);
}

TEST(ClipConfigJson, RoundTrip)
{
    ClipConfig c;
    c.motion_speed = 0.25;
    c.activity_spread = 0.4;
    EXPECT_EQ(nlohmann::json(c).get<ClipConfig>(), c);
}
