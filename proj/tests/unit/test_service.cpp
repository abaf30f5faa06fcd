#include <gtest/gtest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cex/error.hpp"
#include "cex/explainer.hpp"
#include "cex/hash.hpp"
#include "cex/image_io.hpp"
#include "cex/service.hpp"
#include "fixtures.hpp"

using namespace cex;
using nlohmann::json;

namespace {

struct Running {
    std::unique_ptr<Service> service;
    std::unique_ptr<httplib::Client> client;

    Running(const fixture::TempDir& store, bool read_only = false) {
        const auto& world = fixture::small_world();
        ServiceConfig cfg;
        cfg.port = 0;
        cfg.model_path = world.model_path();
        cfg.bundle_path = world.bundle_path();
        cfg.data_dir = world.dir.string();
        cfg.store_dir = store.str();
        cfg.read_only = read_only;
        cfg.threads = 2;
        service = std::make_unique<Service>(cfg);
        const int port = service->start();
        service->wait_ready();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        client->set_read_timeout(60, 0);
    }
    ~Running() { service->stop(); }

    json get(const std::string& path, int expected = 200) {
        auto res = client->Get(path);
        EXPECT_TRUE(res) << path;
        if (!res) return {};
        EXPECT_EQ(res->status, expected) << path << " " << res->body;
        return json::parse(res->body);
    }
    httplib::Result post_image(const std::string& path, const std::vector<std::uint8_t>& png,
                               const json& meta = json::object()) {
        json body;
        body["image"] = base64_encode(png);
        body["meta"] = meta;
        return client->Post(path, body.dump(), "application/json");
    }
};

std::vector<std::uint8_t> upload(std::uint64_t seed) { return encode_png(fixture::random_image(seed)); }

}  // namespace

TEST(Service, HealthAndConcepts) {
    fixture::TempDir store("svc");
    Running run(store);
    const auto& world = fixture::small_world();
    const auto h = run.get("/api/health");
    EXPECT_EQ(h["status"], "ok");
    EXPECT_EQ(h["bundle_hash"], world.bundle.hash);
    const auto c = run.get("/api/concepts");
    ASSERT_EQ(c["concepts"].size(), world.bundle.registry.size());
    for (const auto& item : c["concepts"]) {
        EXPECT_TRUE(item.contains("thresholds"));
        EXPECT_FALSE(item["tcav"].empty());
    }
}

TEST(Service, PredictMatchesLibraryExplain) {
    fixture::TempDir store("svc");
    Running run(store);
    const auto& world = fixture::small_world();
    const auto png = upload(7);
    auto res = run.post_image("/api/predict", png);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto rec = record_from_json(res->body);
    const ReferenceNet net(world.weights);
    const auto direct = explain(world.bundle, net, net.prepare(decode_png(png)), rec.sample_id);
    EXPECT_EQ(rec.text, direct.text);
    EXPECT_EQ(rec.assessments, direct.assessments);
    EXPECT_EQ(rec.text, render_text(rec.predicted, rec.assessments, world.bundle.registry));
    EXPECT_EQ(rec.sample_id, "upload-" + sha256_hex(std::span<const std::uint8_t>(png)).substr(0, 12));
}

TEST(Service, ErrorsCarryCodes) {
    fixture::TempDir store("svc");
    Running run(store);
    EXPECT_EQ(run.get("/api/cases/nope/clm/streaks", 404)["code"], "case_not_found");
    const auto first = run.get("/api/cases")["cases"][0]["id"].get<std::string>();
    EXPECT_EQ(run.get("/api/cases/" + first + "/clm/sparkles", 404)["code"], "concept_not_found");
    EXPECT_EQ(run.get("/api/cases?filter=annotations.foo%20%3D%20present", 400)["code"], "bad_request");
    EXPECT_EQ(run.get("/api/cases?filter=diagnosis%20melanoma", 400)["code"], "bad_request");
    EXPECT_EQ(run.get("/api/latent?dims=4", 400)["code"], "bad_request");

    json bad;
    bad["image"] = base64_encode(std::vector<std::uint8_t>{1, 2, 3, 4});
    auto res = run.client->Post("/api/predict", bad.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    res = run.client->Post("/api/predict", "not json", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    EXPECT_EQ(json::parse(res->body)["code"], "bad_request");
}

TEST(Service, DatasetCasesAndClm) {
    fixture::TempDir store("svc");
    Running run(store);
    const auto& world = fixture::small_world();
    const auto all = run.get("/api/cases");
    EXPECT_EQ(all["count"], world.data.samples.size());
    const auto mel = run.get("/api/cases?filter=prediction%20%3D%20melanoma&highlight=prediction%20%3D%20melanoma");
    for (const auto& c : mel["cases"]) {
        EXPECT_EQ(c["record"]["diagnosis"], "melanoma");
        EXPECT_TRUE(c["highlight"]["flag"].get<bool>());
        EXPECT_EQ(c["highlight"]["accordance"], c["ground_truth"] == "melanoma" ? "agree" : "disagree");
    }

    const std::string id = all["cases"][0]["id"];
    auto png = run.client->Get("/api/cases/" + id + "/clm/streaks?percentile=80");
    ASSERT_TRUE(png);
    ASSERT_EQ(png->status, 200);
    EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(png->get_header_value("X-CLM-Percentile"), "80");
    int w = 0, h = 0;
    decode_png_gray16(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(png->body.data()),
                                                    png->body.size()),
                      w, h);
    EXPECT_EQ(w, 32);
    EXPECT_EQ(h, 32);

    auto j = run.client->Get("/api/cases/" + id + "/clm/streaks", {{"Accept", "application/json"}});
    ASSERT_TRUE(j);
    const auto body = json::parse(j->body);
    EXPECT_EQ(body["values"].size(), 32u * 32u);
    std::size_t count = 0;
    for (int b : body["mask"]) count += b;
    EXPECT_EQ(std::to_string(count), png->get_header_value("X-CLM-Mask-Count"));
}

TEST(Service, PostCasesIsIdempotentAndSurvivesRestart) {
    fixture::TempDir store("svc");
    const auto png = upload(11);
    std::string id, record;
    json listing;
    {
        Running run(store);
        auto res = run.post_image("/api/cases", png, {{"age", 52}});
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 201) << res->body;
        const auto created = json::parse(res->body);
        EXPECT_TRUE(created["created"].get<bool>());
        id = created["id"];
        record = created["record"].dump();

        res = run.post_image("/api/cases", png);
        ASSERT_TRUE(res);
        EXPECT_EQ(res->status, 200);
        EXPECT_FALSE(json::parse(res->body)["created"].get<bool>());
        EXPECT_EQ(json::parse(res->body)["record"].dump(), record);

        const auto one = run.get("/api/cases/" + id);
        EXPECT_EQ(one["record"].dump(), record);
        EXPECT_EQ(one["meta"]["age"], "52");
        listing = run.get("/api/cases?filter=id%20%3D%20" + id);
        EXPECT_EQ(listing["count"], 1);
    }
    Running again(store);
    EXPECT_EQ(again.get("/api/cases/" + id)["record"].dump(), record);
    EXPECT_EQ(again.get("/api/cases?filter=id%20%3D%20" + id), listing);
}

TEST(Service, ReadOnlyRejectsWrites) {
    fixture::TempDir store("svc");
    Running run(store, true);
    auto res = run.post_image("/api/cases", upload(3));
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 403);
    EXPECT_EQ(json::parse(res->body)["code"], "read_only");
    res = run.post_image("/api/predict", upload(3));
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
}

TEST(Service, StatsAndLatent) {
    fixture::TempDir store("svc");
    Running run(store);
    const auto& world = fixture::small_world();
    const auto s = run.get("/api/stats?split=test");
    std::size_t test_count = 0;
    for (const auto& e : world.data.manifest.entries) test_count += e.split == Split::test;
    EXPECT_EQ(s["count"], test_count);
    EXPECT_EQ(s["metrics"]["n"], test_count);
    EXPECT_EQ(run.get("/api/stats?split=holdout", 400)["code"], "bad_request");

    const auto l = run.get("/api/latent?dims=3&filter=split%20%3D%20train");
    EXPECT_EQ(l["dims"], 3);
    EXPECT_EQ(l["coordinates"].size(), l["ids"].size());
    EXPECT_EQ(l["coordinates"][0].size(), 3u);
    double sum = 0;
    for (double r : l["explained_variance_ratio"]) sum += r;
    EXPECT_LE(sum, 1.0 + 1e-9);
}

TEST(Service, GetsAreRepeatable) {
    fixture::TempDir store("svc");
    Running run(store);
    for (const char* path : {"/api/concepts", "/api/cases", "/api/stats", "/api/latent"}) {
        EXPECT_EQ(run.get(path), run.get(path)) << path;
    }
}

TEST(Service, StaleBundleRefusesToStart) {
    const auto& world = fixture::small_world();
    fixture::TempDir dir("svc");
    auto other = world.weights;
    other.layers.front().bias[0] += 0.5;
    seal(other);
    save_weights(other, (dir.path() / "model.json").string());
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.model_path = (dir.path() / "model.json").string();
    cfg.bundle_path = world.bundle_path();
    cfg.store_dir = dir.str();
    try {
        Service svc(cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::hash_mismatch);
    }
}
