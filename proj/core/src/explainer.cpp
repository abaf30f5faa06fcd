#include "cex/explainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>

#include <nlohmann/json.hpp>

#include "cex/error.hpp"
#include "cex/stats.hpp"

namespace cex {

double normalize_margin(const NormalizationParams& params, double d) {
    if (d >= 0.0) return 0.5 + 0.5 * std::min(d / params.q_pos, 1.0);
    return 0.5 - 0.5 * std::min(-d / params.q_neg, 1.0);
}

NormalizationParams fit_normalization(std::span<const double> present, std::span<const double> absent) {
    if (present.empty() || absent.empty()) fail(Errc::insufficient_data, "normalization needs present and absent margins");
    std::vector<double> negated(absent.size());
    std::transform(absent.begin(), absent.end(), negated.begin(), [](double m) { return -m; });
    return {std::max(percentile(present, 95.0), kScaleFloor), std::max(percentile(negated, 95.0), kScaleFloor)};
}

namespace {

double rate_at(std::span<const double> probabilities, double t) {
    if (probabilities.empty()) return 0.0;
    const auto n = std::count_if(probabilities.begin(), probabilities.end(), [t](double p) { return p >= t; });
    return static_cast<double>(n) / static_cast<double>(probabilities.size());
}

}  // namespace

EvidenceThresholds fit_thresholds(std::span<const double> present, std::span<const double> absent,
                                  const ThresholdPolicy& policy, ThresholdReport* report) {
    std::set<double> unique;
    for (double p : present) if (p > 0.5) unique.insert(p);
    for (double p : absent) if (p > 0.5) unique.insert(p);
    const std::vector<double> candidates(unique.begin(), unique.end());

    ThresholdReport r;
    EvidenceThresholds t;

    std::optional<double> moderate;
    for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
        if (rate_at(present, *it) >= policy.min_tpr) {
            moderate = *it;
            break;
        }
    }
    std::optional<double> strong;
    for (double c : candidates) {
        if (rate_at(absent, c) <= policy.max_fpr) {
            strong = c;
            break;
        }
    }
    r.moderate_fallback = !moderate;
    r.strong_fallback = !strong;
    t.moderate = moderate.value_or(0.5);
    if (strong) {
        t.strong = *strong;
    } else {
        const double max_negative = absent.empty() ? 0.5 : *std::max_element(absent.begin(), absent.end());
        t.strong = 0.5 * (std::max(max_negative, 0.5) + 1.0);
    }
    t.moderate = std::min(t.moderate, t.strong);
    r.tpr_at_moderate = rate_at(present, t.moderate);
    r.fpr_at_strong = rate_at(absent, t.strong);
    if (report) *report = r;
    return t;
}

CalibrationResult calibrate_margins(std::span<const double> present, std::span<const double> absent,
                                    const ThresholdPolicy& policy) {
    if (present.size() < 5 || absent.size() < 5) {
        fail(Errc::insufficient_data, "calibration needs >= 5 present and >= 5 absent samples, have " +
                                          std::to_string(present.size()) + " / " + std::to_string(absent.size()));
    }
    CalibrationResult out;
    out.present = present.size();
    out.absent = absent.size();
    const double first = present.front();
    const bool identical = std::all_of(present.begin(), present.end(), [&](double m) { return m == first; }) &&
                           std::all_of(absent.begin(), absent.end(), [&](double m) { return m == first; });
    if (identical) {
        out.normalization = fit_normalization(present, absent);
        out.thresholds = EvidenceThresholds{0.5, 0.95};
        out.report.degenerate = true;
        return out;
    }
    out.normalization = fit_normalization(present, absent);
    std::vector<double> pp, pa;
    for (double m : present) pp.push_back(normalize_margin(out.normalization, m));
    for (double m : absent) pa.push_back(normalize_margin(out.normalization, m));
    out.thresholds = fit_thresholds(pp, pa, policy, &out.report);
    return out;
}

CalibrationResult calibrate(const ConceptProbe& probe, const ClassifierModel& model,
                            std::span<const ImageSample> samples, const ThresholdPolicy& policy) {
    std::vector<double> present, absent;
    for (const auto& s : samples) {
        const Annotation a = s.annotation(probe.concept_name);
        if (a == Annotation::unknown) continue;
        const double m = concept_margin(probe, model, s);
        (a == Annotation::present ? present : absent).push_back(m);
    }
    return calibrate_margins(present, absent, policy);
}

std::vector<CalibrationResult> calibrate_bundle(ProbeBundle& bundle, const ClassifierModel& model,
                                                std::span<const ImageSample> samples, const ThresholdPolicy& policy) {
    if (bundle.model_hash != model.hash()) fail(Errc::hash_mismatch, "bundle was trained against a different model");
    std::vector<CalibrationResult> out;
    for (auto& probe : bundle.probes) {
        auto r = calibrate(probe, model, samples, policy);
        probe.normalization = r.normalization;
        probe.thresholds = r.thresholds;
        out.push_back(r);
    }
    seal(bundle);
    return out;
}

Grade grade_of(double p, const EvidenceThresholds& t) {
    if (p >= t.strong) return Grade::strong;
    if (p >= t.moderate) return Grade::moderate;
    return Grade::absent;
}

std::string_view to_string(Grade g) noexcept {
    switch (g) {
        case Grade::absent: return "absent";
        case Grade::moderate: return "moderate";
        case Grade::strong: return "strong";
    }
    return "absent";
}

std::string_view to_string(Influence i) noexcept {
    return i == Influence::supporting ? "supporting" : "contraindicating";
}

Grade parse_grade(std::string_view text) {
    if (text == "absent") return Grade::absent;
    if (text == "moderate") return Grade::moderate;
    if (text == "strong") return Grade::strong;
    fail(Errc::parse, "unknown grade '" + std::string(text) + "'");
}

Influence parse_influence(std::string_view text) {
    if (text == "supporting") return Influence::supporting;
    if (text == "contraindicating") return Influence::contraindicating;
    fail(Errc::parse, "unknown influence '" + std::string(text) + "'");
}

std::vector<ConceptAssessment> assess(const ProbeBundle& bundle, const ClassifierModel& model, const InputTensor& input,
                                      Label predicted) {
    if (bundle.model_hash != model.hash()) {
        fail(Errc::hash_mismatch, "probe bundle is stale: trained against model " + bundle.model_hash);
    }
    std::vector<ConceptAssessment> out;
    for (const auto& probe : bundle.probes) {
        if (!probe.calibrated()) fail(Errc::validation, "probe '" + probe.concept_name + "' is not calibrated");
        ConceptAssessment a;
        a.concept_name = probe.concept_name;
        a.margin = concept_margin(probe, model, input);
        a.probability = normalize_margin(*probe.normalization, a.margin);
        a.grade = grade_of(a.probability, *probe.thresholds);
        if (a.grade != Grade::absent) a.influence = concept_influence(probe, model, input, predicted);
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
        out += items[i];
    }
    return out;
}

std::vector<std::string> phrases(std::vector<const ConceptAssessment*> list, const ConceptRegistry& registry) {
    std::stable_sort(list.begin(), list.end(), [&](const ConceptAssessment* a, const ConceptAssessment* b) {
        if (a->probability != b->probability) return a->probability > b->probability;
        return registry.index_of(a->concept_name) < registry.index_of(b->concept_name);
    });
    std::vector<std::string> out;
    for (const auto* a : list) {
        out.push_back(std::string(to_string(a->grade)) + " evidence of " + registry.at(a->concept_name).display_name);
    }
    return out;
}

}  // namespace

std::string render_text(Label predicted, std::span<const ConceptAssessment> assessments,
                        const ConceptRegistry& registry) {
    std::vector<const ConceptAssessment*> supporting, contra;
    for (const auto& a : assessments) {
        if (a.grade == Grade::absent) continue;
        (a.influence == Influence::contraindicating ? contra : supporting).push_back(&a);
    }
    const std::string head = "The lesion was classified as " + std::string(display_name(predicted));
    const auto s = phrases(supporting, registry);
    const auto d = phrases(contra, registry);
    if (s.empty() && d.empty()) return head + ", although no dermoscopic evidence was detected.";
    if (s.empty()) return head + " despite " + join(d) + ".";
    if (d.empty()) return head + " because of " + join(s) + ".";
    return head + " because of " + join(s) + ", despite " + join(d) + ".";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ExplanationRecord explain(const ProbeBundle& bundle, const ClassifierModel& model, const InputTensor& input,
                          const std::string& sample_id) {
    ExplanationRecord r;
    r.sample_id = sample_id;
    r.probabilities = model.class_probabilities(input);
    r.predicted = r.probabilities[encode(Label::melanoma)] > r.probabilities[encode(Label::nevus)] ? Label::melanoma
                                                                                                  : Label::nevus;
    r.assessments = assess(bundle, model, input, r.predicted);
    r.text = render_text(r.predicted, r.assessments, bundle.registry);
    r.model_hash = model.hash();
    r.bundle_hash = bundle.hash;
    r.timestamp = utc_timestamp();
    return r;
}

bool text_consistent(const ExplanationRecord& record, const ConceptRegistry& registry) {
    return record.text == render_text(record.predicted, record.assessments, registry);
}

std::string record_to_json(const ExplanationRecord& r) {
    nlohmann::ordered_json j;
    j["sample"] = r.sample_id;
    j["diagnosis"] = std::string(to_string(r.predicted));
    j["probabilities"] = {{"melanoma", r.probabilities[encode(Label::melanoma)]},
                          {"nevus", r.probabilities[encode(Label::nevus)]}};
    auto concepts = nlohmann::ordered_json::array();
    for (const auto& a : r.assessments) {
        nlohmann::ordered_json c;
        c["name"] = a.concept_name;
        c["margin"] = a.margin;
        c["probability"] = a.probability;
        c["grade"] = std::string(to_string(a.grade));
        c["influence"] = a.influence ? nlohmann::ordered_json(std::string(to_string(*a.influence))) : nlohmann::ordered_json(nullptr);
        concepts.push_back(std::move(c));
    }
    j["concepts"] = std::move(concepts);
    j["text"] = r.text;
    j["model_hash"] = r.model_hash;
    j["bundle_hash"] = r.bundle_hash;
    j["timestamp"] = r.timestamp;
    return j.dump();
}

ExplanationRecord record_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ExplanationRecord r;
        r.sample_id = j.at("sample").get<std::string>();
        r.predicted = parse_label(j.at("diagnosis").get<std::string>());
        r.probabilities[encode(Label::melanoma)] = j.at("probabilities").at("melanoma").get<double>();
        r.probabilities[encode(Label::nevus)] = j.at("probabilities").at("nevus").get<double>();
        for (const auto& c : j.at("concepts")) {
            ConceptAssessment a;
            a.concept_name = c.at("name").get<std::string>();
            a.margin = c.at("margin").get<double>();
            a.probability = c.at("probability").get<double>();
            a.grade = parse_grade(c.at("grade").get<std::string>());
            if (c.contains("influence") && c["influence"].is_string()) a.influence = parse_influence(c["influence"].get<std::string>());
            r.assessments.push_back(std::move(a));
        }
        r.text = j.at("text").get<std::string>();
        r.model_hash = j.at("model_hash").get<std::string>();
        r.bundle_hash = j.at("bundle_hash").get<std::string>();
        r.timestamp = j.value("timestamp", "");
        return r;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, std::string("explanation record: ") + e.what());
    }
}

}  // namespace cex
