// cex: synthetic data, training, calibration, explanation and serving.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cex/analytics.hpp"
#include "cex/error.hpp"
#include "cex/explainer.hpp"
#include "cex/image_io.hpp"
#include "cex/localiser.hpp"
#include "cex/manifest.hpp"
#include "cex/model.hpp"
#include "cex/probe.hpp"
#include "cex/rng.hpp"
#include "cex/service.hpp"
#include "cex/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string data_dir = "data";
    json config = json::object();

    json section(const char* name) const {
        return config.contains(name) ? config.at(name) : json::object();
    }
    std::string path_in_data(const std::string& given, const char* fallback) const {
        return given.empty() ? (fs::path(data_dir) / fallback).string() : given;
    }
};

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

cex::ConceptRegistry dataset_registry(const Globals& g) {
    const fs::path p = fs::path(g.data_dir) / "registry.json";
    return fs::exists(p) ? cex::load_registry(p.string()) : cex::default_registry();
}

cex::DatasetManifest dataset_manifest(const Globals& g, const cex::ConceptRegistry& registry) {
    return cex::load_manifest((fs::path(g.data_dir) / "manifest.jsonl").string(), registry);
}

cex::ClmConfig clm_config(const Globals& g) {
    cex::ClmConfig c;
    const json j = g.section("clm");
    take(j, "window", c.window);
    take(j, "stride", c.stride);
    take(j, "blur_sigma", c.blur_sigma);
    take(j, "mask_sigma", c.mask_sigma);
    take(j, "percentile", c.percentile);
    if (j.contains("sign_mode")) {
        const auto s = j.at("sign_mode").get<std::string>();
        if (s == "signed") c.sign = cex::SignMode::signed_delta;
        else if (s == "positive_only") c.sign = cex::SignMode::positive_only;
        else cex::fail(cex::Errc::validation, "clm.sign_mode must be positive_only or signed");
    }
    return c;
}

void print_metrics(const cex::MetricsReport& m) {
    std::printf("n=%zu accuracy=%.4f precision=%.4f recall=%.4f macro_f1=%.4f", m.n, m.accuracy, m.precision,
                m.recall, m.macro_f1);
    if (m.auc) std::printf(" auc=%.4f", *m.auc);
    std::printf("\n");
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept-based explanations for a skin lesion classifier"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed_value = 0;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed_value, "master seed");
    app.add_option("--data-dir", g.data_dir, "dataset and artifact directory")->capture_default_str();

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "write a seeded synthetic dataset to the data dir");
    int gen_samples = 0, gen_size = 0;
    std::string gen_rule;
    gen->add_option("--samples", gen_samples, "number of samples");
    gen->add_option("--size", gen_size, "image side in pixels");
    gen->add_option("--rule", gen_rule, "diagnosis rule over concept names");

    // train-model
    auto* train = app.add_subcommand("train-model", "train the reference network");
    std::string model_out;
    int epochs = 0;
    train->add_option("--out", model_out, "weights file (default <data-dir>/model.json)");
    train->add_option("--epochs", epochs, "training epochs");

    // train-cavs
    auto* cavs = app.add_subcommand("train-cavs", "train one concept probe per registry concept");
    std::string model_path, bundle_path;
    int runs = 0;
    std::vector<std::string> layers;
    cavs->add_option("--model", model_path, "weights file (default <data-dir>/model.json)");
    cavs->add_option("--out", bundle_path, "bundle file (default <data-dir>/bundle.json)");
    cavs->add_option("--runs", runs, "probe runs per layer");
    cavs->add_option("--layers", layers, "candidate layers");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "fit normalization and evidence thresholds");
    std::string cal_split = "train";
    cal->add_option("--model", model_path, "weights file");
    cal->add_option("--split", cal_split, "calibration split")->capture_default_str();
    cal->add_option("--bundle", bundle_path, "bundle file, updated in place");

    // explain
    auto* expl = app.add_subcommand("explain", "explain one image");
    std::string image_path, out_dir = "explanation";
    bool no_clm = false;
    expl->add_option("image", image_path, "PNG image")->required()->check(CLI::ExistingFile);
    expl->add_option("--model", model_path, "weights file");
    expl->add_option("--bundle", bundle_path, "calibrated bundle");
    expl->add_option("--out-dir", out_dir, "directory for record.json and CLM maps")->capture_default_str();
    expl->add_flag("--no-clm", no_clm, "skip localisation maps");

    // tcav
    auto* tcav = app.add_subcommand("tcav", "global TCAV scores per concept and class; stored in the bundle");
    std::string tcav_split = "test";
    tcav->add_option("--model", model_path, "weights file");
    tcav->add_option("--bundle", bundle_path, "bundle file, updated in place");
    tcav->add_option("--split", tcav_split, "dataset split")->capture_default_str();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "classification metrics on a split");
    std::string eval_split = "test";
    eval->add_option("--model", model_path, "weights file");
    eval->add_option("--split", eval_split, "dataset split")->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "run the HTTP API");
    cex::ServiceConfig scfg;
    serve->add_option("--host", scfg.host)->capture_default_str();
    serve->add_option("--port", scfg.port)->capture_default_str();
    serve->add_option("--model", model_path, "weights file");
    serve->add_option("--bundle", bundle_path, "calibrated bundle");
    serve->add_option("--store", scfg.store_dir, "case store directory (default <data-dir>/cases)");
    serve->add_option("--threads", scfg.threads)->capture_default_str();
    serve->add_flag("--read-only", scfg.read_only, "reject new cases");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!g.config_path.empty()) {
            std::ifstream in(g.config_path);
            try {
                g.config = json::parse(in);
            } catch (const json::exception& e) {
                cex::fail(cex::Errc::parse, g.config_path + ": " + e.what());
            }
        }
        if (*seed_opt) g.seed = seed_value;
        if (g.config.contains("data_dir") && app.get_option("--data-dir")->count() == 0) {
            g.data_dir = g.config.at("data_dir").get<std::string>();
        }
        const auto seed_for = [&](const char* label, std::uint64_t fallback) {
            return g.seed ? cex::derive_seed(*g.seed, label) : fallback;
        };
        model_path = g.path_in_data(model_path, "model.json");
        bundle_path = g.path_in_data(bundle_path, "bundle.json");

        if (*gen) {
            cex::GeneratorConfig c;
            const json j = g.section("generator");
            take(j, "samples", c.samples);
            take(j, "width", c.width);
            take(j, "height", c.height);
            take(j, "rule", c.rule);
            take(j, "seed", c.seed);
            take(j, "default_probability", c.default_probability);
            take(j, "presence_probability", c.presence_probability);
            if (gen_samples) c.samples = gen_samples;
            if (gen_size) c.width = c.height = gen_size;
            if (!gen_rule.empty()) c.rule = gen_rule;
            if (g.seed) c.seed = *g.seed;
            const auto ds = cex::generate(c);
            cex::write_dataset(ds, g.data_dir);
            for (cex::Split s : cex::kAllSplits) {
                const auto counts = cex::split_counts(ds.manifest, s);
                std::printf("%-8s melanoma=%zu nevus=%zu\n", std::string(cex::to_string(s)).c_str(),
                            counts.count(cex::Label::melanoma) ? counts.at(cex::Label::melanoma) : 0,
                            counts.count(cex::Label::nevus) ? counts.at(cex::Label::nevus) : 0);
            }
            std::printf("wrote %zu samples to %s\n", ds.samples.size(), g.data_dir.c_str());
        } else if (*train) {
            cex::TrainConfig c;
            const json j = g.section("train");
            take(j, "lr", c.lr);
            take(j, "epochs", c.epochs);
            take(j, "momentum", c.momentum);
            take(j, "batch_size", c.batch_size);
            take(j, "weight_decay", c.weight_decay);
            take(j, "crop_fraction", c.crop_fraction);
            take(j, "crop_probability", c.crop_probability);
            take(j, "flip", c.flip);
            take(j, "cosine_decay", c.cosine_decay);
            take(j, "keep_best", c.keep_best);
            take(j, "seed", c.seed);
            if (epochs) c.epochs = epochs;
            c.seed = seed_for("train", c.seed);
            const auto registry = dataset_registry(g);
            const auto result = cex::train_reference_net(dataset_manifest(g, registry), c);
            for (const auto& e : result.history) {
                std::printf("epoch %3d loss=%.4f train_acc=%.4f val_acc=%.4f\n", e.epoch, e.train_loss,
                            e.train_accuracy, e.validation_accuracy);
            }
            const std::string out = g.path_in_data(model_out, "model.json");
            cex::save_weights(result.weights, out);
            std::printf("model %s -> %s\n", result.weights.hash.c_str(), out.c_str());
        } else if (*cavs) {
            cex::ProbeTrainingConfig c;
            const json j = g.section("probes");
            take(j, "runs", c.runs);
            take(j, "lr", c.lr);
            take(j, "max_epochs", c.max_epochs);
            take(j, "patience", c.patience);
            take(j, "validation_fraction", c.validation_fraction);
            take(j, "candidate_layers", c.candidate_layers);
            take(j, "seed", c.seed);
            if (runs) c.runs = runs;
            if (!layers.empty()) c.candidate_layers = layers;
            c.seed = seed_for("probes", c.seed);
            const auto registry = dataset_registry(g);
            const auto manifest = dataset_manifest(g, registry);
            const cex::ReferenceNet model(cex::load_weights(model_path));
            const auto samples = cex::load_samples(manifest, cex::Split::train);
            const auto bundle = cex::train_bundle(model, samples, registry, c);
            for (const auto& p : bundle.probes) {
                std::printf("%-16s layer=%-10s val_bacc=%.4f runs=%d\n", p.concept_name.c_str(), p.layer.c_str(),
                            p.validation_score, p.run_count);
            }
            cex::save_bundle(bundle, bundle_path);
            std::printf("bundle %s -> %s\n", bundle.hash.c_str(), bundle_path.c_str());
        } else if (*cal) {
            const auto registry = dataset_registry(g);
            const auto manifest = dataset_manifest(g, registry);
            const cex::ReferenceNet model(cex::load_weights(model_path));
            auto bundle = cex::load_bundle(bundle_path);
            const auto samples = cex::load_samples(manifest, cex::parse_split(cal_split));
            const auto results = cex::calibrate_bundle(bundle, model, samples);
            for (std::size_t i = 0; i < results.size(); ++i) {
                const auto& r = results[i];
                std::printf("%-16s moderate=%.4f strong=%.4f tpr=%.3f fpr=%.3f%s%s%s\n",
                            bundle.probes[i].concept_name.c_str(), r.thresholds.moderate, r.thresholds.strong,
                            r.report.tpr_at_moderate, r.report.fpr_at_strong,
                            r.report.moderate_fallback ? " [moderate fallback]" : "",
                            r.report.strong_fallback ? " [strong fallback]" : "",
                            r.report.degenerate ? " [degenerate]" : "");
            }
            cex::save_bundle(bundle, bundle_path);
            std::printf("bundle %s -> %s\n", bundle.hash.c_str(), bundle_path.c_str());
        } else if (*expl) {
            const cex::ReferenceNet model(cex::load_weights(model_path));
            const auto bundle = cex::load_bundle(bundle_path);
            cex::ImageSample sample;
            sample.id = fs::path(image_path).stem().string();
            sample.image = cex::read_png(image_path);
            const auto record = cex::explain(bundle, model, model.prepare(sample.image), sample.id);
            fs::create_directories(out_dir);
            cex::write_text((fs::path(out_dir) / "record.json").string(), cex::record_to_json(record) + "\n");
            if (!no_clm) {
                const auto cfg = clm_config(g);
                for (const auto& p : bundle.probes) {
                    const auto map = cex::compute_clm(model, p, sample, cfg);
                    const auto base = fs::path(out_dir) / ("clm_" + p.concept_name);
                    cex::write_file(base.string() + ".png", cex::clm_to_png(map));
                    cex::write_text(base.string() + ".json", cex::clm_sidecar_json(map) + "\n");
                }
            }
            std::printf("%s\n", record.text.c_str());
        } else if (*tcav) {
            const auto registry = dataset_registry(g);
            const auto manifest = dataset_manifest(g, registry);
            const cex::ReferenceNet model(cex::load_weights(model_path));
            auto bundle = cex::load_bundle(bundle_path);
            if (bundle.model_hash != model.hash()) cex::fail(cex::Errc::hash_mismatch, "bundle does not match model");
            const auto samples = cex::load_samples(manifest, cex::parse_split(tcav_split));
            bundle.tcav = cex::global_tcav_table(bundle, model, samples);
            for (const auto& t : bundle.tcav) {
                std::printf("%-16s %-9s %.4f (n=%zu)\n", t.concept_name.c_str(),
                            std::string(cex::to_string(t.target)).c_str(), t.score, t.sample_count);
            }
            cex::seal(bundle);
            cex::save_bundle(bundle, bundle_path);
        } else if (*eval) {
            const auto registry = dataset_registry(g);
            const auto manifest = dataset_manifest(g, registry);
            const cex::ReferenceNet model(cex::load_weights(model_path));
            const auto samples = cex::load_samples(manifest, cex::parse_split(eval_split));
            print_metrics(cex::evaluate_model(model, samples));
        } else if (*serve) {
            scfg.model_path = model_path;
            scfg.bundle_path = bundle_path;
            if (fs::exists(fs::path(g.data_dir) / "manifest.jsonl")) scfg.data_dir = g.data_dir;
            if (scfg.store_dir.empty()) scfg.store_dir = (fs::path(g.data_dir) / "cases").string();
            scfg.clm = clm_config(g);
            cex::Service service(scfg);
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            const int port = service.start();
            std::printf("serving on http://%s:%d/api (model %s, bundle %s)\n", scfg.host.c_str(), port,
                        service.model_hash().c_str(), service.bundle_hash().c_str());
            std::fflush(stdout);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
            service.stop();
        }
    } catch (const cex::Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", std::string(cex::to_string(e.code())).c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
