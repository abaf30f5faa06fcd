#include <gtest/gtest.h>

#include <filesystem>

#include "cex/error.hpp"
#include "cex/image_io.hpp"
#include "cex/manifest.hpp"
#include "cex/synthetic.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cex;

TEST(Rule, Examples) {
    EXPECT_EQ(evaluate_rule("streaks AND blue_veil", {{"streaks", true}, {"blue_veil", true}}), Label::melanoma);
    EXPECT_EQ(evaluate_rule("NOT streaks", {{"streaks", true}}), Label::nevus);
    EXPECT_EQ(Rule::parse("a or b and not c").names(), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Rule, PrecedenceNotAndOr) {
    const auto r = Rule::parse("a OR b AND NOT c");
    EXPECT_TRUE(r.evaluate({{"a", true}, {"b", false}, {"c", true}}));
    EXPECT_FALSE(r.evaluate({{"a", false}, {"b", true}, {"c", true}}));
    EXPECT_TRUE(r.evaluate({{"a", false}, {"b", true}, {"c", false}}));
}

TEST(Rule, ParseErrorsCarryPosition) {
    try {
        Rule::parse("streaks AND (blue_veil");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::parse);
    }
    EXPECT_THROW(Rule::parse(""), Error);
    EXPECT_THROW(Rule::parse("a AND"), Error);
    EXPECT_THROW(Rule::parse("a b"), Error);
}

TEST(Rule, RandomRulesMatchTruthTable) {
    const std::vector<std::string> names = {"streaks", "dots_globules", "blue_veil"};
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const auto expr = oracle::random_expr(seed, names, 3);
        const auto rule = Rule::parse(expr.text());
        for (int row = 0; row < 8; ++row) {
            std::map<std::string, bool> env;
            for (int k = 0; k < 3; ++k) env[names[k]] = (row >> k) & 1;
            ASSERT_EQ(rule.evaluate(env), expr.eval(env)) << expr.text() << " row " << row;
        }
    }
}

TEST(Generator, ZeroProbabilityGivesNevusAndEmptyMasks) {
    GeneratorConfig c;
    c.samples = 30;
    c.rule = "streaks AND blue_veil";
    c.default_probability = 0.0;
    const auto d = generate(c);
    for (const auto& s : d.samples) {
        EXPECT_EQ(*s.diagnosis, Label::nevus);
        for (const auto& [name, m] : s.concept_masks) {
            ASSERT_TRUE(m.has_value());
            EXPECT_TRUE(m->empty()) << name;
            EXPECT_EQ(s.annotation(name), Annotation::absent);
        }
    }
}

TEST(Generator, DeterministicByteIdentical) {
    GeneratorConfig c;
    c.samples = 40;
    fixture::TempDir a, b;
    write_dataset(generate(c), a.str());
    write_dataset(generate(c), b.str());
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), a.path());
        EXPECT_EQ(read_file(e.path().string()), read_file((b.path() / rel).string())) << rel;
        ++files;
    }
    EXPECT_GT(files, 40u);
}

TEST(Generator, ConceptFrequenciesNearHalf) {
    GeneratorConfig c;
    const auto d = generate(c);
    ASSERT_EQ(d.samples.size(), 500u);
    for (const auto& name : d.registry.names()) {
        std::size_t present = 0;
        for (const auto& s : d.samples) present += s.annotation(name) == Annotation::present;
        EXPECT_NEAR(static_cast<double>(present) / 500.0, 0.5, 0.08) << name;
    }
}

TEST(Generator, MasksMatchPresenceAndLabelsMatchRule) {
    GeneratorConfig c;
    c.samples = 120;
    const auto d = generate(c);
    const auto rule = Rule::parse(c.rule);
    for (const auto& s : d.samples) {
        s.validate(&d.registry);
        std::map<std::string, bool> presence;
        for (const auto& name : d.registry.names()) {
            const bool present = s.annotation(name) == Annotation::present;
            presence[name] = present;
            EXPECT_EQ(!s.concept_masks.at(name)->empty(), present) << s.id << " " << name;
        }
        EXPECT_EQ(*s.diagnosis, rule.classify(presence)) << s.id;
        EXPECT_TRUE(lesion_bbox(s.metadata).has_value());
    }
}

TEST(Generator, SplitIsStratifiedSixtyTwentyTwenty) {
    GeneratorConfig c;
    const auto d = generate(c);
    EXPECT_NEAR(d.manifest.in_split(Split::train).size(), 300.0, 15.0);
    EXPECT_NEAR(d.manifest.in_split(Split::validate).size(), 100.0, 15.0);
    EXPECT_NEAR(d.manifest.in_split(Split::test).size(), 100.0, 15.0);
    for (Split s : kAllSplits) {
        const auto counts = split_counts(d.manifest, s);
        EXPECT_GT(counts.at(Label::melanoma), 0u);
        EXPECT_GT(counts.at(Label::nevus), 0u);
    }
}

TEST(Generator, WrittenDatasetReloads) {
    GeneratorConfig c;
    c.samples = 25;
    const auto d = generate(c);
    fixture::TempDir dir;
    write_dataset(d, dir.str());
    const auto reg = load_registry((dir.path() / "registry.json").string());
    const auto m = load_manifest((dir.path() / "manifest.jsonl").string(), reg);
    ASSERT_EQ(m.entries.size(), 25u);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto s = load_sample(m, m.entries[i], &reg);
        EXPECT_EQ(s.image, d.samples[i].image);
        EXPECT_EQ(s.concept_masks, d.samples[i].concept_masks);
        EXPECT_EQ(s.diagnosis, d.samples[i].diagnosis);
    }
}

TEST(Generator, RejectsRulesOverUnknownConcepts) {
    GeneratorConfig c;
    c.rule = "streaks AND pigment_network";
    EXPECT_THROW(c.validate(), Error);
    c.rule = kDefaultRule;
    c.presence_probability["streaks"] = 1.5;
    EXPECT_THROW(c.validate(), Error);
}
