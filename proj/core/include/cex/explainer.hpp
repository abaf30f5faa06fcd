#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cex/evidence.hpp"
#include "cex/model.hpp"
#include "cex/probe.hpp"
#include "cex/types.hpp"

namespace cex {

// Two-sided clamped linear map of a margin to a probability centred at 0.5.
double normalize_margin(const NormalizationParams& params, double margin);

// 95th percentiles of present-sample margins and of negated absent-sample
// margins, floored at kScaleFloor.
NormalizationParams fit_normalization(std::span<const double> present_margins,
                                      std::span<const double> absent_margins);

struct ThresholdPolicy {
    double min_tpr = 0.90;  // moderate: high-recall threshold
    double max_fpr = 0.05;  // strong: low-false-alarm threshold
};

struct ThresholdReport {
    double tpr_at_moderate = 0.0;
    double fpr_at_strong = 0.0;
    bool moderate_fallback = false;
    bool strong_fallback = false;
    bool degenerate = false;
};

// Candidates are the distinct probabilities above 0.5. moderate = largest
// candidate with TPR >= min_tpr, strong = smallest candidate with
// FPR <= max_fpr; see the fallbacks in the implementation.
EvidenceThresholds fit_thresholds(std::span<const double> present_probabilities,
                                  std::span<const double> absent_probabilities,
                                  const ThresholdPolicy& policy = {}, ThresholdReport* report = nullptr);

struct CalibrationResult {
    NormalizationParams normalization;
    EvidenceThresholds thresholds;
    ThresholdReport report;
    std::size_t present = 0;
    std::size_t absent = 0;
};

// Needs >= 5 present and >= 5 absent annotated samples.
CalibrationResult calibrate(const ConceptProbe& probe, const ClassifierModel& model,
                            std::span<const ImageSample> samples, const ThresholdPolicy& policy = {});
CalibrationResult calibrate_margins(std::span<const double> present_margins,
                                    std::span<const double> absent_margins,
                                    const ThresholdPolicy& policy = {});

// Calibrates every probe in place and reseals the bundle.
std::vector<CalibrationResult> calibrate_bundle(ProbeBundle& bundle, const ClassifierModel& model,
                                                std::span<const ImageSample> samples,
                                                const ThresholdPolicy& policy = {});

Grade grade_of(double probability, const EvidenceThresholds& thresholds);
std::string_view to_string(Grade grade) noexcept;
std::string_view to_string(Influence influence) noexcept;
Grade parse_grade(std::string_view text);
Influence parse_influence(std::string_view text);

struct ConceptAssessment {
    std::string concept_name;
    double margin = 0.0;
    double probability = 0.5;
    Grade grade = Grade::absent;
    std::optional<Influence> influence;  // set only for graded concepts

    bool operator==(const ConceptAssessment&) const = default;
};

// Throws hash_mismatch for a bundle trained against another model and
// validation for uncalibrated probes.
std::vector<ConceptAssessment> assess(const ProbeBundle& bundle, const ClassifierModel& model,
                                      const InputTensor& input, Label predicted);

std::string render_text(Label predicted, std::span<const ConceptAssessment> assessments,
                        const ConceptRegistry& registry);

struct ExplanationRecord {
    std::string sample_id;
    Label predicted = Label::nevus;
    Probabilities probabilities{0.5, 0.5};
    std::vector<ConceptAssessment> assessments;
    std::string text;
    std::string model_hash;
    std::string bundle_hash;
    std::string timestamp;  // ISO-8601 UTC

    bool operator==(const ExplanationRecord&) const = default;
};

ExplanationRecord explain(const ProbeBundle& bundle, const ClassifierModel& model, const InputTensor& input,
                          const std::string& sample_id);

bool text_consistent(const ExplanationRecord& record, const ConceptRegistry& registry);

std::string utc_timestamp();

// Fixed key order: sample, diagnosis, probabilities, concepts, text,
// model_hash, bundle_hash, timestamp.
std::string record_to_json(const ExplanationRecord& record);
ExplanationRecord record_from_json(const std::string& text);

}  // namespace cex
