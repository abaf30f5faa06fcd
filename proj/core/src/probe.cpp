#include "cex/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cex/error.hpp"
#include "cex/hash.hpp"
#include "cex/image_io.hpp"
#include "cex/rng.hpp"

namespace cex {

void ProbeTrainingConfig::validate() const {
    if (runs < 1) fail(Errc::validation, "probe training: runs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
        fail(Errc::validation, "probe training: validation fraction must lie in (0, 0.5]");
    }
    if (!(lr > 0.0)) fail(Errc::validation, "probe training: lr must be positive");
    if (max_epochs < 1 || patience < 1) fail(Errc::validation, "probe training: epochs and patience must be positive");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// log(1 + exp(-z)) for label 1, log(1 + exp(z)) for label 0, without overflow.
double log_loss(double z, int y) {
    const double m = y ? -z : z;
    return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double balanced_accuracy(std::span<const double> scores, std::span<const int> labels) {
    std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > 0.0;
        if (labels[i]) {
            ++pos;
            tp += predicted ? 1 : 0;
        } else {
            ++neg;
            tn += predicted ? 0 : 1;
        }
    }
    if (pos == 0 && neg == 0) return 0.0;
    if (pos == 0) return static_cast<double>(tn) / static_cast<double>(neg);
    if (neg == 0) return static_cast<double>(tp) / static_cast<double>(pos);
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

struct RunFit {
    std::vector<double> weights;  // standardized units
    double bias = 0.0;
    double validation_score = 0.0;
};

// SGD preconditioning: features are centred and divided by one global scale,
// the RMS norm of the centred rows. A single scale keeps the geometry of the
// activation space, so the averaged normal stays a meaningful direction.
struct Standardizer {
    std::vector<double> mean, inv;

    explicit Standardizer(const ActivationMatrix& X) : mean(X.cols, 0.0), inv(X.cols, 0.0) {
        const auto n = static_cast<double>(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) {
            const auto r = X.row(i);
            for (std::size_t k = 0; k < X.cols; ++k) mean[k] += r[k];
        }
        for (auto& m : mean) m /= n;
        double sq = 0.0;
        for (std::size_t i = 0; i < X.rows; ++i) {
            const auto r = X.row(i);
            for (std::size_t k = 0; k < X.cols; ++k) sq += (r[k] - mean[k]) * (r[k] - mean[k]);
        }
        const double rms = std::sqrt(sq / n);
        if (!(rms > 0.0)) fail(Errc::degenerate, "probe training: activations have zero variance");
        std::fill(inv.begin(), inv.end(), 1.0 / rms);
    }

    std::vector<double> apply(const ActivationMatrix& X) const {
        std::vector<double> z(X.values.size());
        for (std::size_t i = 0; i < X.rows; ++i) {
            for (std::size_t k = 0; k < X.cols; ++k) z[i * X.cols + k] = (X.values[i * X.cols + k] - mean[k]) * inv[k];
        }
        return z;
    }
};

// One stratified split + SGD with early stopping on validation log-loss,
// on standardized rows Z.
RunFit fit_run(const std::vector<double>& Z, std::size_t rows, std::size_t d, std::span<const int> y,
               std::span<const int> strata, const ProbeTrainingConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < rows; ++i) cells[{y[i], strata[i]}].push_back(i);
    std::vector<std::size_t> train, val;
    for (auto& [_, members] : cells) {
        rng.shuffle(members.begin(), members.end());
        const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(members.size()) + 0.5));
        for (std::size_t k = 0; k < members.size(); ++k) (k < n_val ? val : train).push_back(members[k]);
    }
    if (val.empty()) {
        val.push_back(train.back());
        train.pop_back();
    }

    const auto row = [&](std::size_t i) { return std::span<const double>(Z.data() + i * d, d); };
    std::vector<double> w(d, 0.0), best_w(d, 0.0);
    double b = 0.0, best_b = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;

    const auto val_loss = [&]() {
        double s = 0.0;
        for (std::size_t i : val) s += log_loss(dot(w, row(i)) + b, y[i]);
        return s / static_cast<double>(val.size());
    };

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng.shuffle(train.begin(), train.end());
        for (std::size_t i : train) {
            const auto x = row(i);
            const double g = sigmoid(dot(w, x) + b) - y[i];
            const double step = config.lr * g;
            for (std::size_t k = 0; k < d; ++k) w[k] -= step * x[k];
            b -= step;
        }
        const double loss = val_loss();
        if (loss < best_loss) {
            best_loss = loss;
            best_w = w;
            best_b = b;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    RunFit fit;
    fit.weights = std::move(best_w);
    fit.bias = best_b;
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i : val) {
        scores.push_back(dot(fit.weights, row(i)) + fit.bias);
        labels.push_back(y[i]);
    }
    fit.validation_score = balanced_accuracy(scores, labels);
    return fit;
}

}  // namespace

LayerProbeFit fit_layer_probe(const ActivationMatrix& X, std::span<const int> concept_labels,
                              std::span<const int> strata, const ProbeTrainingConfig& config, std::uint64_t seed) {
    config.validate();
    if (X.rows != concept_labels.size() || X.rows != strata.size()) {
        fail(Errc::shape, "probe training: label count does not match activation rows");
    }
    if (X.rows < 2) fail(Errc::insufficient_data, "probe training: need at least two samples");

    const Standardizer st(X);
    const std::vector<double> Z = st.apply(X);
    const std::size_t d = X.cols;

    std::vector<double> sum_w(d, 0.0), sum_w_all(d, 0.0);
    double sum_b = 0.0, sum_b_all = 0.0, score_sum = 0.0;
    int kept = 0;
    for (int r = 0; r < config.runs; ++r) {
        const RunFit fit = fit_run(Z, X.rows, d, concept_labels, strata, config, derive_seed(seed, static_cast<std::uint64_t>(r)));
        score_sum += fit.validation_score;
        for (std::size_t k = 0; k < d; ++k) sum_w_all[k] += fit.weights[k];
        sum_b_all += fit.bias;
        if (fit.validation_score >= config.min_run_accuracy) {
            for (std::size_t k = 0; k < d; ++k) sum_w[k] += fit.weights[k];
            sum_b += fit.bias;
            ++kept;
        }
    }
    if (kept == 0) {
        // Nothing passed the guard; average everything rather than fail.
        sum_w = sum_w_all;
        sum_b = sum_b_all;
        kept = config.runs;
    }

    // Back to activation units: w.z + b = (w * inv).x + (b - (w * inv).mean).
    std::vector<double> w(d);
    double b = sum_b / kept;
    for (std::size_t k = 0; k < d; ++k) {
        w[k] = sum_w[k] / kept * st.inv[k];
        b -= w[k] * st.mean[k];
    }

    LayerProbeFit out;
    out.runs_total = config.runs;
    out.runs_used = kept;
    out.validation_score = score_sum / config.runs;
    double norm = 0.0;
    for (double v : w) norm += v * v;
    norm = std::sqrt(norm);
    out.direction.resize(d);
    if (norm == 0.0) {
        // All-zero average: fall back to e_0 so the unit-norm invariant holds.
        out.direction[0] = 1.0;
        out.bias = 0.0;
        out.validation_score = 0.0;
        return out;
    }
    for (std::size_t k = 0; k < d; ++k) out.direction[k] = w[k] / norm;
    // Averaged hyperplane mean(w).a + mean(b) = 0, rescaled to the unit normal.
    out.bias = b / norm;
    return out;
}

ActivationCache::ActivationCache(const ClassifierModel& model, std::span<const ImageSample> samples,
                                 const std::vector<std::string>& layers)
    : layers_(layers), count_(samples.size()) {
    matrices_.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!model.has_layer(layers[l])) fail(Errc::not_found, "model has no layer '" + layers[l] + "'");
        matrices_[l].rows = samples.size();
        matrices_[l].cols = shape_product(model.layer_shape(layers[l]));
        matrices_[l].values.reserve(matrices_[l].rows * matrices_[l].cols);
    }
    for (const auto& s : samples) {
        const InputTensor x = model.prepare(s.image);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto a = model.forward(x, layers[l]);
            matrices_[l].values.insert(matrices_[l].values.end(), a.values.begin(), a.values.end());
        }
    }
}

const ActivationMatrix& ActivationCache::layer(const std::string& name) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l] == name) return matrices_[l];
    }
    fail(Errc::not_found, "activation cache has no layer '" + name + "'");
}

std::vector<std::string> default_candidate_layers(const ClassifierModel& model) {
    std::vector<std::string> out;
    for (auto& l : model.layer_names()) {
        if (l != reference_net::kLogits) out.push_back(l);
    }
    return out;
}

namespace {

std::string training_provenance(const ClassifierModel& model, std::span<const ImageSample> samples,
                                 const std::string& concept_name, const std::string& layer,
                                 const ProbeTrainingConfig& config) {
    std::string s = model.hash() + "|" + concept_name + "|" + layer + "|" + std::to_string(config.runs) + "|" +
                    canonical_number(config.lr) + "|" + std::to_string(config.max_epochs) + "|" +
                    std::to_string(config.patience) + "|" + canonical_number(config.validation_fraction) + "|" +
                    std::to_string(config.seed);
    for (const auto& sample : samples) s += "|" + sample.id;
    return sha256_hex(s);
}

}  // namespace

ConceptProbe train_probe(const ClassifierModel& model, std::span<const ImageSample> samples,
                         const ActivationCache& cache, const std::string& concept_name,
                         const ProbeTrainingConfig& config) {
    config.validate();
    if (cache.sample_count() != samples.size()) fail(Errc::shape, "activation cache does not match samples");

    std::vector<std::size_t> rows;
    std::vector<int> labels, strata;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Annotation a = samples[i].annotation(concept_name);
        if (a == Annotation::unknown) continue;
        rows.push_back(i);
        labels.push_back(a == Annotation::present ? 1 : 0);
        strata.push_back(samples[i].diagnosis ? encode(*samples[i].diagnosis) : -1);
        (a == Annotation::present ? pos : neg)++;
    }
    if (pos < 5 || neg < 5) {
        fail(Errc::insufficient_data, "concept '" + concept_name + "': need >= 5 present and >= 5 absent samples, have " +
                                          std::to_string(pos) + " / " + std::to_string(neg));
    }

    const auto layers = config.candidate_layers.empty() ? default_candidate_layers(model) : config.candidate_layers;
    std::optional<LayerProbeFit> best;
    std::string best_layer;
    for (const auto& layer : layers) {
        const ActivationMatrix& full = cache.layer(layer);
        ActivationMatrix X;
        X.rows = rows.size();
        X.cols = full.cols;
        X.values.reserve(X.rows * X.cols);
        for (std::size_t r : rows) {
            const auto row = full.row(r);
            X.values.insert(X.values.end(), row.begin(), row.end());
        }
        LayerProbeFit fit;
        try {
            fit = fit_layer_probe(X, labels, strata, config, derive_seed(config.seed, concept_name + "/" + layer));
        } catch (const Error& e) {
            if (e.code() == Errc::degenerate) continue;
            throw;
        }
        if (!best || fit.validation_score > best->validation_score) {
            best = std::move(fit);
            best_layer = layer;
        }
    }
    if (!best) fail(Errc::degenerate, "concept '" + concept_name + "': activations have zero variance at every candidate layer");

    ConceptProbe probe;
    probe.concept_name = concept_name;
    probe.layer = best_layer;
    probe.direction = std::move(best->direction);
    probe.bias = best->bias;
    probe.run_count = best->runs_used;
    probe.validation_score = best->validation_score;
    probe.training_hash = training_provenance(model, samples, concept_name, best_layer, config);
    return probe;
}

ConceptProbe train_probe(const ClassifierModel& model, std::span<const ImageSample> samples,
                         const std::string& concept_name, const ProbeTrainingConfig& config) {
    const auto layers = config.candidate_layers.empty() ? default_candidate_layers(model) : config.candidate_layers;
    const ActivationCache cache(model, samples, layers);
    return train_probe(model, samples, cache, concept_name, config);
}

ConceptProbe train_probe(const ClassifierModel& model, const DatasetManifest& manifest, const std::string& concept_name,
                         const ProbeTrainingConfig& config) {
    const auto samples = load_samples(manifest, Split::train);
    return train_probe(model, samples, concept_name, config);
}

double concept_margin(const ConceptProbe& probe, std::span<const double> activation) {
    if (activation.size() != probe.direction.size()) {
        fail(Errc::shape, "probe '" + probe.concept_name + "' expects " + std::to_string(probe.direction.size()) +
                              " activations, got " + std::to_string(activation.size()));
    }
    return dot(probe.direction, activation) + probe.bias;
}

double concept_margin(const ConceptProbe& probe, const ClassifierModel& model, const InputTensor& input) {
    if (!model.has_layer(probe.layer)) fail(Errc::validation, "probe layer '" + probe.layer + "' not in model");
    return concept_margin(probe, model.forward(input, probe.layer).values);
}

double concept_margin(const ConceptProbe& probe, const ClassifierModel& model, const ImageSample& sample) {
    return concept_margin(probe, model, model.prepare(sample.image));
}

double directional_derivative(const ConceptProbe& probe, const ClassifierModel& model, const InputTensor& input,
                              Label cls) {
    const auto grad = model.grad_class_wrt_layer(input, cls, probe.layer);
    if (grad.values.size() != probe.direction.size()) fail(Errc::shape, "probe and gradient shapes differ");
    return dot(grad.values, probe.direction);
}

Influence concept_influence(const ConceptProbe& probe, const ClassifierModel& model, const InputTensor& input,
                            Label predicted) {
    return directional_derivative(probe, model, input, predicted) > 0.0 ? Influence::supporting
                                                                        : Influence::contraindicating;
}

TcavResult tcav_score(const ConceptProbe& probe, const ClassifierModel& model, std::span<const InputTensor> inputs,
                      Label target) {
    if (inputs.empty()) fail(Errc::insufficient_data, "TCAV score needs at least one sample");
    std::size_t positive = 0;
    for (const auto& x : inputs) positive += directional_derivative(probe, model, x, target) > 0.0 ? 1 : 0;
    return {probe.concept_name, target, static_cast<double>(positive) / static_cast<double>(inputs.size()), inputs.size()};
}

TcavResult tcav_score(const ConceptProbe& probe, const ClassifierModel& model, std::span<const ImageSample> samples,
                      Label target) {
    std::vector<InputTensor> inputs;
    inputs.reserve(samples.size());
    for (const auto& s : samples) inputs.push_back(model.prepare(s.image));
    return tcav_score(probe, model, inputs, target);
}

// ---------------------------------------------------------------------------
// Persistence

const ConceptProbe* ProbeBundle::find(const std::string& concept_name) const {
    for (const auto& p : probes) {
        if (p.concept_name == concept_name) return &p;
    }
    return nullptr;
}

bool ProbeBundle::calibrated() const {
    return !probes.empty() && std::all_of(probes.begin(), probes.end(), [](const auto& p) { return p.calibrated(); });
}

namespace {

using nlohmann::json;

std::string canonical_probe(const ConceptProbe& p) {
    std::string s = "{\"concept\":\"" + p.concept_name + "\",\"layer\":\"" + p.layer + "\",\"direction\":[";
    for (std::size_t i = 0; i < p.direction.size(); ++i) s += (i ? "," : "") + canonical_number(p.direction[i]);
    s += "],\"bias\":" + canonical_number(p.bias) + ",\"run_count\":" + std::to_string(p.run_count) +
         ",\"validation_score\":" + canonical_number(p.validation_score) + ",\"normalization\":";
    s += p.normalization ? "{\"q_pos\":" + canonical_number(p.normalization->q_pos) +
                               ",\"q_neg\":" + canonical_number(p.normalization->q_neg) + "}"
                         : "null";
    s += ",\"thresholds\":";
    s += p.thresholds ? "{\"moderate\":" + canonical_number(p.thresholds->moderate) +
                            ",\"strong\":" + canonical_number(p.thresholds->strong) + "}"
                      : "null";
    return s + ",\"training_hash\":\"" + p.training_hash + "\"}";
}

json probe_json(const ConceptProbe& p) {
    json j{{"concept", p.concept_name},
           {"layer", p.layer},
           {"direction", p.direction},
           {"bias", p.bias},
           {"run_count", p.run_count},
           {"validation_score", p.validation_score},
           {"normalization", nullptr},
           {"thresholds", nullptr},
           {"training_hash", p.training_hash},
           {"hash", probe_hash(p)}};
    if (p.normalization) j["normalization"] = {{"q_pos", p.normalization->q_pos}, {"q_neg", p.normalization->q_neg}};
    if (p.thresholds) j["thresholds"] = {{"moderate", p.thresholds->moderate}, {"strong", p.thresholds->strong}};
    return j;
}

ConceptProbe probe_from(const json& j) {
    ConceptProbe p;
    p.concept_name = j.at("concept").get<std::string>();
    p.layer = j.at("layer").get<std::string>();
    p.direction = j.at("direction").get<std::vector<double>>();
    p.bias = j.at("bias").get<double>();
    p.run_count = j.value("run_count", 0);
    p.validation_score = j.value("validation_score", 0.0);
    if (j.contains("normalization") && j["normalization"].is_object()) {
        p.normalization = NormalizationParams{j["normalization"].at("q_pos").get<double>(),
                                              j["normalization"].at("q_neg").get<double>()};
    }
    if (j.contains("thresholds") && j["thresholds"].is_object()) {
        p.thresholds = EvidenceThresholds{j["thresholds"].at("moderate").get<double>(),
                                          j["thresholds"].at("strong").get<double>()};
    }
    p.training_hash = j.value("training_hash", "");
    if (j.contains("hash")) {
        const auto stored = j["hash"].get<std::string>();
        if (stored != probe_hash(p)) fail(Errc::hash_mismatch, "probe '" + p.concept_name + "': hash mismatch");
    }
    return p;
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(Errc::parse, what + ": " + e.what());
    }
}

}  // namespace

std::string probe_hash(const ConceptProbe& probe) { return sha256_hex(canonical_probe(probe)); }

std::string bundle_hash(const ProbeBundle& bundle) {
    std::string s = "{\"version\":" + std::to_string(bundle.version) + ",\"model_hash\":\"" + bundle.model_hash +
                    "\",\"registry\":[";
    for (std::size_t i = 0; i < bundle.registry.concepts().size(); ++i) {
        const auto& c = bundle.registry.concepts()[i];
        s += (i ? ",\"" : "\"") + c.name + "|" + c.display_name + "|" + c.polarity_note.value_or("") + "\"";
    }
    s += "],\"probes\":[";
    for (std::size_t i = 0; i < bundle.probes.size(); ++i) s += (i ? "," : "") + canonical_probe(bundle.probes[i]);
    s += "],\"tcav\":[";
    for (std::size_t i = 0; i < bundle.tcav.size(); ++i) {
        const auto& t = bundle.tcav[i];
        s += (i ? ",\"" : "\"") + t.concept_name + "|" + std::string(to_string(t.target)) + "|" + canonical_number(t.score) +
             "|" + std::to_string(t.sample_count) + "\"";
    }
    return sha256_hex(s + "]}");
}

ProbeBundle train_bundle(const ClassifierModel& model, std::span<const ImageSample> samples,
                         const ConceptRegistry& registry, const ProbeTrainingConfig& config) {
    const auto layers = config.candidate_layers.empty() ? default_candidate_layers(model) : config.candidate_layers;
    const ActivationCache cache(model, samples, layers);
    ProbeBundle bundle;
    bundle.model_hash = model.hash();
    bundle.registry = registry;
    for (const auto& name : registry.names()) bundle.probes.push_back(train_probe(model, samples, cache, name, config));
    seal(bundle);
    return bundle;
}

void seal(ProbeBundle& bundle) { bundle.hash = bundle_hash(bundle); }

std::string probe_to_json(const ConceptProbe& probe) { return probe_json(probe).dump(); }

ConceptProbe probe_from_json(const std::string& text) {
    try {
        return probe_from(parse_json(text, "probe file"));
    } catch (const json::exception& e) {
        fail(Errc::parse, std::string("probe file: ") + e.what());
    }
}

void save_probe(const ConceptProbe& probe, const std::string& path) { write_text(path, probe_to_json(probe)); }

ConceptProbe load_probe(const std::string& path) {
    const auto bytes = read_file(path);
    return probe_from_json(std::string(bytes.begin(), bytes.end()));
}

std::string bundle_to_json(const ProbeBundle& bundle) {
    json concepts = json::array();
    for (const auto& c : bundle.registry.concepts()) {
        json item{{"name", c.name}, {"display_name", c.display_name}};
        if (c.polarity_note) item["polarity_note"] = *c.polarity_note;
        concepts.push_back(std::move(item));
    }
    json probes = json::array();
    for (const auto& p : bundle.probes) probes.push_back(probe_json(p));
    json tcav = json::array();
    for (const auto& t : bundle.tcav) {
        tcav.push_back({{"concept", t.concept_name}, {"target", std::string(to_string(t.target))}, {"score", t.score},
                        {"sample_count", t.sample_count}});
    }
    return json{{"version", bundle.version},
                {"model_hash", bundle.model_hash},
                {"registry", {{"concepts", concepts}}},
                {"probes", probes},
                {"tcav", tcav},
                {"hash", bundle.hash.empty() ? bundle_hash(bundle) : bundle.hash}}
        .dump();
}

ProbeBundle bundle_from_json(const std::string& text) {
    const json j = parse_json(text, "probe bundle");
    ProbeBundle b;
    try {
        b.version = j.at("version").get<int>();
        if (b.version != 1) fail(Errc::version_mismatch, "unsupported bundle version " + std::to_string(b.version));
        b.model_hash = j.at("model_hash").get<std::string>();
        std::vector<ConceptInfo> concepts;
        for (const auto& c : j.at("registry").at("concepts")) {
            ConceptInfo info{c.at("name").get<std::string>(), c.value("display_name", ""), std::nullopt};
            if (c.contains("polarity_note") && c["polarity_note"].is_string()) info.polarity_note = c["polarity_note"].get<std::string>();
            concepts.push_back(std::move(info));
        }
        b.registry = ConceptRegistry(std::move(concepts));
        for (const auto& p : j.at("probes")) b.probes.push_back(probe_from(p));
        if (j.contains("tcav")) {
            for (const auto& t : j["tcav"]) {
                b.tcav.push_back({t.at("concept").get<std::string>(), parse_label(t.at("target").get<std::string>()),
                                  t.at("score").get<double>(), t.at("sample_count").get<std::size_t>()});
            }
        }
        b.hash = j.at("hash").get<std::string>();
    } catch (const json::exception& e) {
        fail(Errc::parse, std::string("probe bundle: ") + e.what());
    }
    if (b.hash != bundle_hash(b)) fail(Errc::hash_mismatch, "probe bundle hash mismatch");
    return b;
}

void save_bundle(const ProbeBundle& bundle, const std::string& path) { write_text(path, bundle_to_json(bundle)); }

ProbeBundle load_bundle(const std::string& path) {
    const auto bytes = read_file(path);
    return bundle_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace cex
