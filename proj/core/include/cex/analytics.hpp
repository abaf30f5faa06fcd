#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cex/explainer.hpp"
#include "cex/localiser.hpp"
#include "cex/model.hpp"
#include "cex/probe.hpp"
#include "cex/types.hpp"

namespace cex {

// One explained case: ground truth (when known) next to the model's output.
struct CaseRecord {
    std::string id;
    std::optional<Split> split;
    Metadata meta;
    std::optional<Label> diagnosis;
    std::map<std::string, Annotation> annotations;
    ExplanationRecord explanation;

    const ConceptAssessment* assessment(const std::string& concept_name) const;
    std::optional<bool> correct() const;
};

// ---------------------------------------------------------------------------
// Metrics (melanoma is the positive class)

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    std::size_t n = 0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    double precision = 0.0;  // melanoma
    double recall = 0.0;     // melanoma
    ClassMetrics melanoma;
    ClassMetrics nevus;
    double macro_f1 = 0.0;
    std::optional<double> auc;  // absent for single-class data
};

// Trapezoidal ROC area over the distinct score thresholds; nullopt when
// only one class is present.
std::optional<double> roc_auc(std::span<const double> melanoma_scores, std::span<const Label> truth);

MetricsReport compute_metrics(std::span<const double> melanoma_scores, std::span<const Label> truth,
                              std::span<const Label> predicted);
MetricsReport evaluate_model(const ClassifierModel& model, std::span<const ImageSample> samples);
MetricsReport evaluate_records(std::span<const CaseRecord* const> records);

// ---------------------------------------------------------------------------
// Filter language: `field op value` atoms joined by AND.
//   fields: id, split, diagnosis, prediction, correct, melanoma_probability,
//           meta.<key>, annotations.<concept>, grades.<concept>,
//           concepts.<concept> (predicted present/absent),
//           probabilities.<concept>, influence.<concept>
//   ops:    = != < <= > >= has   (also the unicode forms of != <= >=)

enum class FilterOp { eq, ne, lt, le, gt, ge, has };

struct FilterValue {
    enum class Kind { string, number, boolean } kind = Kind::string;
    std::string text;
    double number = 0.0;
    bool boolean = false;
};

struct FilterAtom {
    std::string field;
    FilterOp op = FilterOp::eq;
    FilterValue value;
};

struct FilterPredicate {
    std::vector<FilterAtom> atoms;  // conjunction; empty = always true

    FilterPredicate conjoin(const FilterPredicate& other) const;
};

// Throws parse for malformed syntax and validation for unresolvable fields.
FilterPredicate parse_filter(const std::string& text, const ConceptRegistry& registry);
std::string to_string(const FilterPredicate& predicate);

// Throws type_mismatch when an atom compares incompatible types.
bool matches(const CaseRecord& record, const FilterPredicate& predicate);

std::vector<const CaseRecord*> apply_filter(std::span<const CaseRecord> records, const FilterPredicate& predicate);
std::vector<const CaseRecord*> apply_filter(std::span<const CaseRecord* const> records,
                                            const FilterPredicate& predicate);

enum class Accordance { agree, disagree, unknown };
std::string_view to_string(Accordance a) noexcept;

struct HighlightResult {
    bool flag = false;
    // Set when the predicate references a predicted attribute with a
    // ground-truth counterpart (prediction/diagnosis, concepts or grades/annotations).
    std::optional<Accordance> accordance;
};

std::vector<HighlightResult> highlight(std::span<const CaseRecord* const> records, const FilterPredicate& predicate);

// Distribution counts for the dashboard: field -> value -> count.
using Histogram = std::map<std::string, std::map<std::string, std::size_t>>;
Histogram distribution(std::span<const CaseRecord* const> records);

// ---------------------------------------------------------------------------
// Localisation over a dataset

struct ClmSummary {
    std::string sample_id;
    std::optional<GridPoint> peak;          // nullopt for an all-zero map
    std::optional<double> mass_in_lesion;   // share of map mass inside the lesion box
};

ClmSummary summarize_clm(const ConceptLocalisationMap& map, const Metadata& meta);
std::vector<ClmSummary> batch_clm(const ClassifierModel& model, const ConceptProbe& probe,
                                  std::span<const ImageSample> samples, const ClmConfig& config);

// ---------------------------------------------------------------------------
// Latent projection

struct Projection {
    int dims = 2;
    std::vector<std::vector<double>> coordinates;   // per record
    std::vector<double> explained_variance_ratio;   // nonincreasing
    std::vector<std::vector<double>> components;    // dims x features, unit norm
    bool degenerate = false;                        // zero-variance input
};

// PCA on centred rows. Sign convention: each component's largest-magnitude
// coordinate is positive.
Projection pca(const ActivationMatrix& activations, int dims);
Projection latent_projection(const ClassifierModel& model, std::span<const ImageSample> samples,
                             const std::string& layer, int dims);

// ---------------------------------------------------------------------------
// Global TCAV table over (concept, class).

std::vector<TcavResult> global_tcav_table(const ProbeBundle& bundle, const ClassifierModel& model,
                                          std::span<const ImageSample> samples);

}  // namespace cex
