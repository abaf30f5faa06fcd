#include "cex/service.hpp"

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <filesystem>
#include <iostream>
#include <map>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cex/analytics.hpp"
#include "cex/case_store.hpp"
#include "cex/error.hpp"
#include "cex/hash.hpp"
#include "cex/image_io.hpp"
#include "cex/manifest.hpp"

namespace cex {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct ApiError {
    int status;
    std::string code;
    std::string message;
};

[[noreturn]] void api_fail(int status, std::string code, std::string message) {
    throw ApiError{status, std::move(code), std::move(message)};
}

ApiError map_error(const Error& e) {
    switch (e.code()) {
        case Errc::parse:
        case Errc::validation:
        case Errc::shape:
        case Errc::type_mismatch:
        case Errc::insufficient_data:
            return {400, "bad_request", e.what()};
        case Errc::not_found: return {404, "case_not_found", e.what()};
        case Errc::hash_mismatch:
        case Errc::version_mismatch: return {409, "bundle_stale", e.what()};
        case Errc::read_only: return {403, "read_only", e.what()};
        default: return {500, "internal", e.what()};
    }
}

void send_json(httplib::Response& res, const ojson& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ApiError& e) {
    ojson body;
    body["code"] = e.code;
    body["message"] = e.message;
    send_json(res, body, e.status);
}

ojson record_json(const ExplanationRecord& r) { return ojson::parse(record_to_json(r)); }

std::string param(const httplib::Request& req, const std::string& name) {
    return req.has_param(name) ? req.get_param_value(name) : std::string();
}

double parse_double(const std::string& text, const std::string& what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        api_fail(400, "bad_request", what + " must be a number, got '" + text + "'");
    }
    return v;
}

}  // namespace

struct Service::Impl {
    ServiceConfig config;
    std::unique_ptr<ReferenceNet> model;
    ProbeBundle bundle;
    std::unique_ptr<CaseStore> store;

    // Dataset cases, immutable once ready.
    std::vector<ImageSample> samples;
    std::vector<CaseRecord> dataset_cases;
    std::map<std::string, std::size_t> dataset_ids;

    std::atomic<bool> is_ready{false};
    mutable std::mutex ready_mutex;
    mutable std::condition_variable ready_cv;
    std::string load_error;

    httplib::Server server;
    std::thread listener;
    std::thread loader;
    int port = 0;

    explicit Impl(ServiceConfig cfg) : config(std::move(cfg)) {
        if (config.model_path.empty() || config.bundle_path.empty()) {
            fail(Errc::validation, "serve needs a model and a bundle");
        }
        model = std::make_unique<ReferenceNet>(load_weights(config.model_path));
        bundle = load_bundle(config.bundle_path);
        if (bundle.model_hash != model->hash()) {
            fail(Errc::hash_mismatch, "bundle " + config.bundle_path + " was trained against model " +
                                          bundle.model_hash + ", loaded model is " + model->hash());
        }
        if (!bundle.calibrated()) fail(Errc::validation, "bundle " + config.bundle_path + " is not calibrated");
        config.clm.resolve(model->input_height(), model->input_width());

        std::string store_dir = config.store_dir;
        if (store_dir.empty()) store_dir = config.data_dir.empty() ? "cases" : (fs::path(config.data_dir) / "cases").string();
        store = std::make_unique<CaseStore>(store_dir, config.read_only);
        register_routes();
    }

    ~Impl() { shutdown(); }

    void shutdown() {
        server.stop();
        if (listener.joinable()) listener.join();
        if (loader.joinable()) loader.join();
    }

    void load_dataset() {
        try {
            if (!config.data_dir.empty()) {
                const fs::path manifest_path = fs::path(config.data_dir) / "manifest.jsonl";
                if (fs::exists(manifest_path)) {
                    const auto manifest = load_manifest(manifest_path.string(), bundle.registry);
                    for (const auto& entry : manifest.entries) {
                        samples.push_back(load_sample(manifest, entry, &bundle.registry));
                        const auto& s = samples.back();
                        CaseRecord c;
                        c.id = s.id;
                        c.split = entry.split;
                        c.meta = s.metadata;
                        c.diagnosis = s.diagnosis;
                        c.annotations = s.concept_annotations;
                        c.explanation = cex::explain(bundle, *model, model->prepare(s.image), s.id);
                        dataset_ids[c.id] = dataset_cases.size();
                        dataset_cases.push_back(std::move(c));
                    }
                }
            }
        } catch (const std::exception& e) {
            load_error = e.what();
            std::cerr << "dataset load failed: " << e.what() << "\n";
        }
        {
            std::lock_guard lock(ready_mutex);
            is_ready = true;
        }
        ready_cv.notify_all();
    }

    void require_ready() const {
        if (!is_ready) api_fail(503, "not_ready", "service is still indexing cases");
    }

    CaseRecord stored_record(const StoredCase& c) const {
        CaseRecord r;
        r.id = c.id;
        r.meta = c.meta;
        r.explanation = c.record;
        return r;
    }

    // Dataset cases then stored cases explained by the loaded artifacts.
    std::vector<CaseRecord> all_cases() const {
        std::vector<CaseRecord> out = dataset_cases;
        std::map<std::string, std::size_t> latest;
        for (const auto& c : store->all()) {
            if (c.record.model_hash != model->hash() || c.record.bundle_hash != bundle.hash) continue;
            if (dataset_ids.count(c.id)) continue;
            auto it = latest.find(c.id);
            if (it == latest.end()) {
                latest[c.id] = out.size();
                out.push_back(stored_record(c));
            } else {
                out[it->second] = stored_record(c);
            }
        }
        return out;
    }

    struct ResolvedCase {
        CaseRecord record;
        std::optional<std::string> record_json;  // stored cases: the logged bytes
        Image image;
    };

    ResolvedCase resolve_case(const std::string& id) const {
        if (auto it = dataset_ids.find(id); it != dataset_ids.end()) {
            return {dataset_cases[it->second], std::nullopt, samples[it->second].image};
        }
        if (auto c = store->find({id, model->hash(), bundle.hash})) {
            return {stored_record(*c), c->record_json, decode_png(store->image_bytes(*c))};
        }
        if (!store->find_id(id).empty()) {
            api_fail(409, "bundle_stale", "case '" + id + "' was explained by other model or bundle versions");
        }
        api_fail(404, "case_not_found", "no case '" + id + "'");
    }

    ojson case_json(const CaseRecord& c, const std::optional<std::string>& logged = std::nullopt) const {
        ojson j;
        j["id"] = c.id;
        j["split"] = c.split ? ojson(std::string(to_string(*c.split))) : ojson(nullptr);
        j["ground_truth"] = c.diagnosis ? ojson(std::string(to_string(*c.diagnosis))) : ojson(nullptr);
        j["meta"] = c.meta;
        ojson ann = ojson::object();
        for (const auto& [k, v] : c.annotations) ann[k] = std::string(to_string(v));
        j["annotations"] = std::move(ann);
        j["record"] = logged ? ojson::parse(*logged) : record_json(c.explanation);
        return j;
    }

    std::vector<std::uint8_t> request_image(const httplib::Request& req, Metadata* meta) const {
        std::string bytes;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("image")) api_fail(400, "bad_request", "multipart body has no 'image' part");
            bytes = req.get_file_value("image").content;
            if (meta && req.has_file("meta")) *meta = parse_meta(req.get_file_value("meta").content);
        } else if (req.get_header_value("Content-Type").starts_with("image/")) {
            bytes = req.body;
        } else {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const std::exception& e) {
                api_fail(400, "bad_request", std::string("request body is not JSON: ") + e.what());
            }
            if (!body.is_object() || !body.contains("image") || !body["image"].is_string()) {
                api_fail(400, "bad_request", "expected a base64 'image' field");
            }
            const auto decoded = base64_decode(body["image"].get<std::string>());
            bytes.assign(decoded.begin(), decoded.end());
            if (meta && body.contains("meta")) *meta = parse_meta(body["meta"].dump());
        }
        if (bytes.empty()) api_fail(400, "bad_request", "empty image");
        return {bytes.begin(), bytes.end()};
    }

    static Metadata parse_meta(const std::string& text) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const std::exception& e) {
            api_fail(400, "bad_request", std::string("meta is not JSON: ") + e.what());
        }
        if (!j.is_object()) api_fail(400, "bad_request", "meta must be an object");
        Metadata meta;
        for (const auto& [k, v] : j.items()) meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
        return meta;
    }

    Image decode_upload(std::span<const std::uint8_t> bytes) const {
        Image image;
        try {
            image = decode_png(bytes);
        } catch (const Error& e) {
            api_fail(400, "bad_request", std::string("malformed image: ") + e.what());
        }
        if (image.width < kMinImageSide || image.height < kMinImageSide) {
            api_fail(400, "bad_request", "image must be at least 16x16");
        }
        return image;
    }

    FilterPredicate filter_param(const httplib::Request& req, const std::string& name) const {
        const std::string text = param(req, name);
        return parse_filter(text, bundle.registry);
    }

    template <typename F>
    httplib::Server::Handler wrap(F&& f) {
        return [this, f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const ApiError& e) {
                send_error(res, e);
            } catch (const Error& e) {
                send_error(res, map_error(e));
            } catch (const std::exception& e) {
                send_error(res, {500, "internal", e.what()});
            }
        };
    }

    void register_routes() {
        server.Get("/api/health", wrap([this](const httplib::Request&, httplib::Response& res) {
            ojson j;
            j["status"] = is_ready ? "ok" : "starting";
            j["model_hash"] = model->hash();
            j["bundle_hash"] = bundle.hash;
            send_json(res, j);
        }));

        server.Get("/api/concepts", wrap([this](const httplib::Request&, httplib::Response& res) {
            ojson list = ojson::array();
            for (const auto& info : bundle.registry.concepts()) {
                ojson c;
                c["name"] = info.name;
                c["display_name"] = info.display_name;
                c["polarity_note"] = info.polarity_note ? ojson(*info.polarity_note) : ojson(nullptr);
                if (const auto* p = bundle.find(info.name)) {
                    c["layer"] = p->layer;
                    c["validation_score"] = p->validation_score;
                    c["thresholds"] = {{"moderate", p->thresholds->moderate}, {"strong", p->thresholds->strong}};
                    c["normalization"] = {{"q_pos", p->normalization->q_pos}, {"q_neg", p->normalization->q_neg}};
                }
                ojson tcav = ojson::array();
                for (const auto& t : bundle.tcav) {
                    if (t.concept_name != info.name) continue;
                    tcav.push_back({{"target", std::string(to_string(t.target))},
                                    {"score", t.score},
                                    {"sample_count", t.sample_count}});
                }
                c["tcav"] = std::move(tcav);
                list.push_back(std::move(c));
            }
            ojson j;
            j["concepts"] = std::move(list);
            send_json(res, j);
        }));

        server.Post("/api/predict", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const auto bytes = request_image(req, nullptr);
            const Image image = decode_upload(bytes);
            const std::string id = "upload-" + sha256_hex(std::span<const std::uint8_t>(bytes)).substr(0, 12);
            send_json(res, record_json(cex::explain(bundle, *model, model->prepare(image), id)));
        }));

        server.Post("/api/cases", wrap([this](const httplib::Request& req, httplib::Response& res) {
            if (store->read_only()) api_fail(403, "read_only", "the case store is read-only");
            Metadata meta;
            const auto bytes = request_image(req, &meta);
            const Image image = decode_upload(bytes);
            const std::string id = "case-" + sha256_hex(std::span<const std::uint8_t>(bytes)).substr(0, 12);
            if (auto existing = store->find({id, model->hash(), bundle.hash})) {
                send_json(res, {{"id", id}, {"created", false}, {"record", ojson::parse(existing->record_json)}});
                return;
            }
            const auto record = cex::explain(bundle, *model, model->prepare(image), id);
            const auto stored = store->append(bytes, record, meta);
            send_json(res, {{"id", id}, {"created", true}, {"record", ojson::parse(stored.record_json)}}, 201);
        }));

        server.Get("/api/cases", wrap([this](const httplib::Request& req, httplib::Response& res) {
            require_ready();
            const auto filter = filter_param(req, "filter");
            const bool want_highlight = req.has_param("highlight");
            const auto hl = filter_param(req, "highlight");
            const auto cases = all_cases();
            const auto selected = apply_filter(std::span<const CaseRecord>(cases), filter);
            std::vector<HighlightResult> flags;
            if (want_highlight) flags = highlight(selected, hl);
            ojson list = ojson::array();
            for (std::size_t i = 0; i < selected.size(); ++i) {
                ojson c = case_json(*selected[i]);
                if (want_highlight) {
                    c["highlight"] = {{"flag", flags[i].flag},
                                      {"accordance", flags[i].accordance
                                                         ? ojson(std::string(to_string(*flags[i].accordance)))
                                                         : ojson(nullptr)}};
                }
                list.push_back(std::move(c));
            }
            ojson j;
            j["count"] = selected.size();
            j["cases"] = std::move(list);
            send_json(res, j);
        }));

        server.Get(R"(/api/cases/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
            require_ready();
            const auto c = resolve_case(req.matches[1]);
            send_json(res, case_json(c.record, c.record_json));
        }));

        server.Get(R"(/api/cases/([^/]+)/clm/([^/]+))", wrap([this](const httplib::Request& req,
                                                                     httplib::Response& res) {
            require_ready();
            const std::string id = req.matches[1];
            const std::string name = req.matches[2];
            const auto c = resolve_case(id);
            const auto* probe = bundle.find(name);
            if (!probe) api_fail(404, "concept_not_found", "no concept '" + name + "'");
            ClmConfig cfg = config.clm;
            if (req.has_param("percentile")) {
                cfg.percentile = parse_double(param(req, "percentile"), "percentile");
                if (!(cfg.percentile >= 0.0 && cfg.percentile <= 100.0)) {
                    api_fail(400, "bad_request", "percentile must lie in [0, 100]");
                }
            }
            ImageSample sample;
            sample.id = id;
            sample.image = c.image;
            const auto map = compute_clm(*model, *probe, sample, cfg);
            const Mask mask = binarize(map, cfg.percentile);
            if (req.get_header_value("Accept").find("application/json") != std::string::npos) {
                ojson j = ojson::parse(clm_sidecar_json(map));
                j["width"] = map.width;
                j["height"] = map.height;
                j["values"] = map.values;
                j["mask"] = mask.bits;
                send_json(res, j);
                return;
            }
            const auto png = clm_to_png(map);
            res.set_header("X-CLM-Percentile", canonical_number(cfg.percentile));
            res.set_header("X-CLM-Mask-Count", std::to_string(mask.count()));
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));

        server.Get("/api/stats", wrap([this](const httplib::Request& req, httplib::Response& res) {
            require_ready();
            auto filter = filter_param(req, "filter");
            const std::string split = param(req, "split");
            if (!split.empty()) {
                try {
                    parse_split(split);
                } catch (const Error&) {
                    api_fail(400, "bad_request", "unknown split '" + split + "'");
                }
                filter = filter.conjoin(parse_filter("split = " + split, bundle.registry));
            }
            const auto cases = all_cases();
            const auto selected = apply_filter(std::span<const CaseRecord>(cases), filter);
            ojson j;
            j["count"] = selected.size();
            bool labelled = false;
            for (const auto* c : selected) labelled |= c->diagnosis.has_value();
            if (labelled) {
                const auto m = evaluate_records(selected);
                auto cls = [](const ClassMetrics& c) {
                    return ojson{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
                };
                j["metrics"] = {{"n", m.n},
                                {"tp", m.tp},
                                {"fp", m.fp},
                                {"tn", m.tn},
                                {"fn", m.fn},
                                {"accuracy", m.accuracy},
                                {"precision", m.precision},
                                {"recall", m.recall},
                                {"macro_f1", m.macro_f1},
                                {"auc", m.auc ? ojson(*m.auc) : ojson(nullptr)},
                                {"melanoma", cls(m.melanoma)},
                                {"nevus", cls(m.nevus)}};
            } else {
                j["metrics"] = nullptr;
            }
            j["histogram"] = distribution(selected);
            send_json(res, j);
        }));

        server.Get("/api/latent", wrap([this](const httplib::Request& req, httplib::Response& res) {
            require_ready();
            const std::string layer = req.has_param("layer") ? param(req, "layer") : "embedding";
            if (!model->has_layer(layer)) api_fail(400, "bad_request", "unknown layer '" + layer + "'");
            int dims = 2;
            if (req.has_param("dims")) {
                const std::string d = param(req, "dims");
                if (d != "2" && d != "3") api_fail(400, "bad_request", "dims must be 2 or 3");
                dims = d[0] - '0';
            }
            const auto filter = filter_param(req, "filter");
            const auto cases = all_cases();
            const auto selected = apply_filter(std::span<const CaseRecord>(cases), filter);
            std::vector<ImageSample> inputs;
            ojson ids = ojson::array();
            for (const auto* c : selected) {
                ImageSample s;
                s.id = c->id;
                s.image = resolve_case(c->id).image;
                inputs.push_back(std::move(s));
                ids.push_back(c->id);
            }
            const auto p = latent_projection(*model, inputs, layer, dims);
            ojson j;
            j["layer"] = layer;
            j["dims"] = dims;
            j["ids"] = std::move(ids);
            j["coordinates"] = p.coordinates;
            j["explained_variance_ratio"] = p.explained_variance_ratio;
            j["degenerate"] = p.degenerate;
            send_json(res, j);
        }));

        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.status == 404 && res.body.empty()) send_error(res, {404, "not_found", "no such endpoint"});
        });
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::start() {
    const int threads = std::max(1, impl_->config.threads);
    impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    int port = impl_->config.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(impl_->config.host);
        if (port < 0) fail(Errc::io, "cannot bind " + impl_->config.host);
    } else if (!impl_->server.bind_to_port(impl_->config.host, port)) {
        fail(Errc::io, "port " + std::to_string(port) + " on " + impl_->config.host + " is busy");
    }
    impl_->port = port;
    impl_->loader = std::thread([this] { impl_->load_dataset(); });
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void Service::stop() { impl_->shutdown(); }

void Service::run() {
    start();
    if (impl_->listener.joinable()) impl_->listener.join();
}

bool Service::ready() const { return impl_->is_ready; }

void Service::wait_ready() const {
    std::unique_lock lock(impl_->ready_mutex);
    impl_->ready_cv.wait(lock, [this] { return impl_->is_ready.load(); });
}

const std::string& Service::model_hash() const { return impl_->model->hash(); }
const std::string& Service::bundle_hash() const { return impl_->bundle.hash; }

}  // namespace cex
