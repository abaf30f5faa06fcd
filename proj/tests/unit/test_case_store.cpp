#include <gtest/gtest.h>

#include <fstream>

#include "cex/case_store.hpp"
#include "cex/error.hpp"
#include "cex/image_io.hpp"
#include "cex/rng.hpp"
#include "fixtures.hpp"

using namespace cex;

namespace {

ExplanationRecord record(const std::string& id, const std::string& model = "m1", const std::string& bundle = "b1") {
    ExplanationRecord r;
    r.sample_id = id;
    r.predicted = Label::melanoma;
    r.probabilities = {0.25, 0.75};
    ConceptAssessment a;
    a.concept_name = "streaks";
    a.margin = 1.5;
    a.probability = 0.9;
    a.grade = Grade::strong;
    a.influence = Influence::supporting;
    r.assessments = {a};
    r.text = "Melanoma because of Streaks.";
    r.model_hash = model;
    r.bundle_hash = bundle;
    r.timestamp = "2026-01-01T00:00:00Z";
    return r;
}

std::vector<std::uint8_t> png(std::uint64_t seed) { return encode_png(fixture::random_image(seed, 16, 16)); }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(CaseStore, AppendAndReloadPreservesBytesAndOrder) {
    fixture::TempDir dir("store");
    std::vector<std::string> logged;
    {
        CaseStore store(dir.path());
        for (int i = 0; i < 5; ++i) {
            const auto c = store.append(png(i), record("c" + std::to_string(i)), {{"age", std::to_string(30 + i)}});
            logged.push_back(c.record_json);
        }
    }
    CaseStore back(dir.path());
    const auto all = back.all();
    ASSERT_EQ(all.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(all[i].id, "c" + std::to_string(i));
        EXPECT_EQ(all[i].record_json, logged[i]);
        EXPECT_EQ(all[i].record, record_from_json(logged[i]));
        EXPECT_EQ(all[i].meta.at("age"), std::to_string(30 + i));
        EXPECT_EQ(back.image_bytes(all[i]), png(i));
    }
}

TEST(CaseStore, ReplayIndexEqualsIncrementalIndex) {
    fixture::TempDir dir("store");
    CaseStore store(dir.path());
    Rng rng(42);
    for (int i = 0; i < 100; ++i) {
        const std::string id = "c" + std::to_string(rng.below(30));
        const std::string model = rng.bernoulli(0.5) ? "m1" : "m2";
        store.append(png(rng.below(5)), record(id, model));
    }
    const auto replayed = CaseStore::replay(dir.path() / "records.jsonl");
    EXPECT_EQ(CaseStore::build_index(replayed), store.index());
    CaseStore fresh(dir.path());
    EXPECT_EQ(fresh.index(), store.index());
    EXPECT_EQ(fresh.size(), 100u);
}

TEST(CaseStore, LookupByKeyAndId) {
    fixture::TempDir dir("store");
    CaseStore store(dir.path());
    store.append(png(1), record("x", "m1"));
    store.append(png(1), record("x", "m2"));
    EXPECT_TRUE(store.find({"x", "m1", "b1"}).has_value());
    EXPECT_FALSE(store.find({"x", "m3", "b1"}).has_value());
    EXPECT_EQ(store.find_id("x").size(), 2u);
    EXPECT_TRUE(store.find_id("y").empty());
}

TEST(CaseStore, ReadOnlyRejectsAppend) {
    fixture::TempDir dir("store");
    {
        CaseStore store(dir.path());
        store.append(png(1), record("a"));
    }
    CaseStore ro(dir.path(), true);
    EXPECT_EQ(ro.size(), 1u);
    try {
        ro.append(png(2), record("b"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::read_only);
    }
    EXPECT_EQ(CaseStore(dir.path()).size(), 1u);
}

TEST(CaseStore, TornTrailingLineIsIgnored) {
    fixture::TempDir dir("store");
    {
        CaseStore store(dir.path());
        store.append(png(1), record("a"));
        store.append(png(2), record("b"));
    }
    const auto log = dir.path() / "records.jsonl";
    const auto good = slurp(log);
    {
        std::ofstream out(log, std::ios::app | std::ios::binary);
        out << "{\"id\":\"c\",\"rec";
    }
    CaseStore back(dir.path());
    EXPECT_EQ(back.size(), 2u);
    back.append(png(3), record("c"));
    CaseStore again(dir.path());
    EXPECT_EQ(again.size(), 3u);
    EXPECT_EQ(again.all().back().id, "c");
}
