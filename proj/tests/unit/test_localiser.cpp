#include <gtest/gtest.h>

#include "cex/analytics.hpp"
#include "cex/error.hpp"
#include "cex/image_io.hpp"
#include "cex/localiser.hpp"
#include "cex/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cex;

namespace {

ConceptProbe random_probe(const ClassifierModel& model, const std::string& layer, std::uint64_t seed) {
    Rng rng(seed);
    ConceptProbe p;
    p.concept_name = "streaks";
    p.layer = layer;
    p.direction.resize(shape_product(model.layer_shape(layer)));
    double n = 0.0;
    for (auto& v : p.direction) {
        v = rng.normal();
        n += v * v;
    }
    for (auto& v : p.direction) v /= std::sqrt(n);
    p.bias = rng.uniform(-0.5, 0.5);
    return p;
}

ConceptLocalisationMap map_of(std::vector<double> values, int w, int h) {
    ConceptLocalisationMap m;
    m.width = w;
    m.height = h;
    m.values = std::move(values);
    return m;
}

}  // namespace

TEST(ClmConfig, ResolvedDefaultsAndValidation) {
    const auto c = ClmConfig{}.resolve(32, 32);
    EXPECT_EQ(c.window, 8);
    EXPECT_EQ(c.stride, 4);
    EXPECT_DOUBLE_EQ(c.mask_sigma, 8.0 / 3.0);
    ClmConfig bad;
    bad.window = 40;
    EXPECT_THROW(bad.resolve(32, 32), Error);
    bad.window = 8;
    bad.stride = 9;
    EXPECT_THROW(bad.resolve(32, 32), Error);
    bad.stride = 4;
    bad.percentile = 100.0;
    EXPECT_THROW(bad.resolve(32, 32), Error);
}

TEST(Windows, LastWindowClampedToEdge) {
    EXPECT_EQ(window_positions(32, 8, 4), (std::vector<int>{0, 4, 8, 12, 16, 20, 24}));
    EXPECT_EQ(window_positions(10, 4, 4), (std::vector<int>{0, 4, 6}));
    EXPECT_EQ(window_positions(5, 5, 1), (std::vector<int>{0}));
}

TEST(Blur, ConstantImageUnchangedBitForBit) {
    InputTensor x = fixture::random_input(1, 16, 16);
    std::fill(x.values.begin(), x.values.end(), 0.37);
    EXPECT_EQ(gaussian_blur(x, 4.0).values, x.values);
}

TEST(BlendMask, PeakIsOne) {
    const auto m = blend_mask(8, 8.0 / 3.0);
    EXPECT_EQ(*std::max_element(m.begin(), m.end()), 1.0);
    EXPECT_EQ(m.size(), 64u);
    const auto odd = blend_mask(5, 1.0);
    EXPECT_EQ(odd[12], 1.0);
}

TEST(Clm, ConstantImageGivesZeroMap) {
    const ReferenceNet net(fixture::random_weights(2));
    InputTensor x = fixture::random_input(1);
    std::fill(x.values.begin(), x.values.end(), 0.6);
    const auto map = compute_clm(net, random_probe(net, "conv2", 3), x, ClmConfig{});
    EXPECT_TRUE(map.is_zero());
    EXPECT_FALSE(argmax(map).has_value());
    EXPECT_TRUE(binarize(map, 80).empty());
}

TEST(Clm, StrideOneMatchesPerPositionLoopBitForBit) {
    const ReferenceNet net(fixture::random_weights(5));
    for (const char* layer : {"conv1", "conv2", "embedding"}) {
        const auto probe = random_probe(net, layer, 11);
        const auto x = fixture::random_input(21);
        for (SignMode sign : {SignMode::positive_only, SignMode::signed_delta}) {
            ClmConfig cfg;
            cfg.window = 6;
            cfg.stride = 1;
            cfg.sign = sign;
            const auto got = compute_clm(net, probe, x, cfg);
            const auto expected = oracle::per_position_clm(net, probe, x, cfg.resolve(32, 32));
            ASSERT_EQ(got.values.size(), expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i) {
                ASSERT_EQ(got.values[i], expected[i]) << layer << " pixel " << i;
            }
        }
    }
}

TEST(Clm, DefaultStrideMatchesPerPositionLoop) {
    const ReferenceNet net(fixture::random_weights(6));
    const auto probe = random_probe(net, "conv1", 4);
    const auto x = fixture::random_input(8);
    const auto got = compute_clm(net, probe, x, ClmConfig{});
    EXPECT_EQ(got.values, oracle::per_position_clm(net, probe, x, ClmConfig{}.resolve(32, 32)));
    EXPECT_DOUBLE_EQ(*std::max_element(got.values.begin(), got.values.end()), 1.0);
    EXPECT_DOUBLE_EQ(*std::min_element(got.values.begin(), got.values.end()), 0.0);
}

TEST(Clm, RejectsMismatchedProbe) {
    const ReferenceNet net(fixture::random_weights(6));
    auto probe = random_probe(net, "conv1", 4);
    probe.direction.pop_back();
    EXPECT_THROW(compute_clm(net, probe, fixture::random_input(1), ClmConfig{}), Error);
}

TEST(Binarize, UniformMapSelectsEverything) {
    const auto m = map_of(std::vector<double>(64, 1.0), 8, 8);
    for (double p : {1.0, 50.0, 80.0, 99.9}) EXPECT_EQ(binarize(m, p).count(), 64u);
}

TEST(Binarize, ZeroMapIsEmpty) {
    EXPECT_TRUE(binarize(map_of(std::vector<double>(64, 0.0), 8, 8), 80).empty());
    EXPECT_THROW(binarize(map_of(std::vector<double>(64, 0.0), 8, 8), 0.0), Error);
}

TEST(Binarize, MatchesSortOracle) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(32 * 32);
        for (auto& x : v) x = rng.uniform();
        const auto m = map_of(v, 32, 32);
        const auto mask = binarize(m, 80);
        EXPECT_EQ(mask, oracle::percentile_mask(v, 32, 32, 80));
        const double frac = static_cast<double>(mask.count()) / (32.0 * 32.0);
        EXPECT_GE(frac, 0.18);
        EXPECT_LE(frac, 0.22);
        const double p = rng.uniform(1, 99);
        EXPECT_EQ(binarize(m, p), oracle::percentile_mask(v, 32, 32, p));
    }
}

TEST(Binarize, MonotoneInPercentile) {
    Rng rng(3);
    std::vector<double> v(256);
    for (auto& x : v) x = std::round(rng.uniform() * 10) / 10;
    const auto m = map_of(v, 16, 16);
    EXPECT_GE(binarize(m, 80).count(), binarize(m, 90).count());
}

TEST(Iou, Examples) {
    Mask a(4, 4), b(4, 4);
    EXPECT_EQ(iou(a, b), 1.0);
    a.at(0, 0) = 1;
    EXPECT_EQ(iou(a, a), 1.0);
    b.at(3, 3) = 1;
    EXPECT_EQ(iou(a, b), 0.0);
    EXPECT_THROW(iou(a, Mask(3, 4)), Error);
}

TEST(Iou, MatchesSetCount) {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
        Mask a(10, 9), b(10, 9);
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < a.bits.size(); ++i) {
            a.bits[i] = rng.bernoulli(0.3);
            b.bits[i] = rng.bernoulli(0.4);
            inter += a.bits[i] && b.bits[i];
            uni += a.bits[i] || b.bits[i];
        }
        EXPECT_DOUBLE_EQ(iou(a, b), uni ? static_cast<double>(inter) / uni : 1.0);
    }
}

TEST(Dilate, ChebyshevSquare) {
    Mask m(7, 7);
    m.at(3, 3) = 1;
    const auto d = dilate(m, 2);
    EXPECT_EQ(d.count(), 25u);
    EXPECT_TRUE(d.at(1, 1));
    EXPECT_FALSE(d.at(0, 3));
}

TEST(ClmExport, SixteenBitPngAndSidecar) {
    const auto m = map_of({0.0, 0.25, 0.5, 1.0}, 2, 2);
    int w = 0, h = 0;
    const auto v = decode_png_gray16(clm_to_png(m), w, h);
    EXPECT_EQ(v, (std::vector<std::uint16_t>{0, 16384, 32768, 65535}));
    const auto j = clm_sidecar_json(m);
    for (const char* key : {"\"sample\"", "\"concept\"", "\"config\"", "\"baseline_margin\""}) {
        EXPECT_NE(j.find(key), std::string::npos) << key;
    }
}

TEST(BatchClm, EqualsSequentialLoop) {
    const auto& world = fixture::small_world();
    const ReferenceNet net(world.weights);
    const auto& probe = world.bundle.probes.front();
    const std::span<const ImageSample> ten(world.data.samples.data(), 10);
    const auto batch = batch_clm(net, probe, ten, ClmConfig{});
    ASSERT_EQ(batch.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto single = summarize_clm(compute_clm(net, probe, ten[i], ClmConfig{}), ten[i].metadata);
        EXPECT_EQ(batch[i].sample_id, single.sample_id);
        ASSERT_EQ(batch[i].peak.has_value(), single.peak.has_value());
        if (single.peak) {
            EXPECT_EQ(batch[i].peak->x, single.peak->x);
            EXPECT_EQ(batch[i].peak->y, single.peak->y);
        }
        EXPECT_EQ(batch[i].mass_in_lesion, single.mass_in_lesion);
    }
}

TEST(BatchClm, ConstantImagesHaveNoPeak) {
    const auto& world = fixture::small_world();
    const ReferenceNet net(world.weights);
    ImageSample s;
    s.id = "flat";
    s.image = Image(32, 32);
    std::fill(s.image.pixels.begin(), s.image.pixels.end(), 140);
    const std::vector<ImageSample> one = {s};
    const auto out = batch_clm(net, world.bundle.probes.front(), one, ClmConfig{});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_FALSE(out[0].peak.has_value());
}
