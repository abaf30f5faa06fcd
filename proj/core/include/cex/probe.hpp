#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cex/evidence.hpp"
#include "cex/manifest.hpp"
#include "cex/model.hpp"
#include "cex/types.hpp"

namespace cex {

// Concept activation vector: a linear concept classifier in one layer's
// activation space with a unit-norm normal.
struct ConceptProbe {
    std::string concept_name;
    std::string layer;
    std::vector<double> direction;
    double bias = 0.0;
    int run_count = 0;
    double validation_score = 0.0;  // mean validation balanced accuracy
    std::optional<NormalizationParams> normalization;
    std::optional<EvidenceThresholds> thresholds;
    std::string training_hash;

    bool calibrated() const noexcept { return normalization.has_value() && thresholds.has_value(); }
    bool operator==(const ConceptProbe&) const = default;
};

struct ProbeTrainingConfig {
    int runs = 200;
    double lr = 0.2;
    int max_epochs = 100;
    int patience = 10;
    double validation_fraction = 0.2;
    std::uint64_t seed = 11;
    std::vector<std::string> candidate_layers;  // empty: every non-logit layer
    double min_run_accuracy = 0.55;             // runs below this are left out of the average

    void validate() const;
};

// Samples x features, row-major.
struct ActivationMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

struct LayerProbeFit {
    std::vector<double> direction;  // unit norm
    double bias = 0.0;              // in units of the unit direction
    double validation_score = 0.0;
    int runs_used = 0;
    int runs_total = 0;
};

// Multi-run logistic regression on one activation matrix. `strata` carries a
// secondary label (the diagnosis) used alongside the concept label to
// stratify each run's train/validation split. Throws degenerate when every
// feature has zero variance.
LayerProbeFit fit_layer_probe(const ActivationMatrix& activations, std::span<const int> concept_labels,
                              std::span<const int> strata, const ProbeTrainingConfig& config,
                              std::uint64_t seed);

// Activations of several layers over a fixed sample list, computed once.
class ActivationCache {
public:
    ActivationCache(const ClassifierModel& model, std::span<const ImageSample> samples,
                    const std::vector<std::string>& layers);

    const ActivationMatrix& layer(const std::string& name) const;
    const std::vector<std::string>& layers() const noexcept { return layers_; }
    std::size_t sample_count() const noexcept { return count_; }

private:
    std::vector<std::string> layers_;
    std::vector<ActivationMatrix> matrices_;
    std::size_t count_ = 0;
};

std::vector<std::string> default_candidate_layers(const ClassifierModel& model);

ConceptProbe train_probe(const ClassifierModel& model, std::span<const ImageSample> samples,
                         const std::string& concept_name, const ProbeTrainingConfig& config);
ConceptProbe train_probe(const ClassifierModel& model, std::span<const ImageSample> samples,
                         const ActivationCache& cache, const std::string& concept_name,
                         const ProbeTrainingConfig& config);
// Uses the manifest's train split.
ConceptProbe train_probe(const ClassifierModel& model, const DatasetManifest& manifest,
                         const std::string& concept_name, const ProbeTrainingConfig& config);

// direction . activation + bias
double concept_margin(const ConceptProbe& probe, std::span<const double> activation);
double concept_margin(const ConceptProbe& probe, const ClassifierModel& model, const InputTensor& input);
double concept_margin(const ConceptProbe& probe, const ClassifierModel& model, const ImageSample& sample);

// Directional derivative of the class logit along the probe direction.
double directional_derivative(const ConceptProbe& probe, const ClassifierModel& model,
                              const InputTensor& input, Label cls);

Influence concept_influence(const ConceptProbe& probe, const ClassifierModel& model,
                            const InputTensor& input, Label predicted);

struct TcavResult {
    std::string concept_name;
    Label target = Label::melanoma;
    double score = 0.0;
    std::size_t sample_count = 0;
};

// Fraction of samples with a strictly positive directional derivative.
TcavResult tcav_score(const ConceptProbe& probe, const ClassifierModel& model,
                      std::span<const InputTensor> inputs, Label target);
TcavResult tcav_score(const ConceptProbe& probe, const ClassifierModel& model,
                      std::span<const ImageSample> samples, Label target);

// ---------------------------------------------------------------------------
// Persistence

struct ProbeBundle {
    int version = 1;
    std::string model_hash;
    ConceptRegistry registry;
    std::vector<ConceptProbe> probes;  // registry order
    std::vector<TcavResult> tcav;      // optional precomputed global table
    std::string hash;

    const ConceptProbe* find(const std::string& concept_name) const;
    bool calibrated() const;
};

// One probe per registry concept over a shared activation cache, sealed
// against the model hash. Uncalibrated.
ProbeBundle train_bundle(const ClassifierModel& model, std::span<const ImageSample> samples,
                         const ConceptRegistry& registry, const ProbeTrainingConfig& config);

std::string probe_hash(const ConceptProbe& probe);
std::string bundle_hash(const ProbeBundle& bundle);
void seal(ProbeBundle& bundle);

std::string probe_to_json(const ConceptProbe& probe);
ConceptProbe probe_from_json(const std::string& text);
void save_probe(const ConceptProbe& probe, const std::string& path);
ConceptProbe load_probe(const std::string& path);

std::string bundle_to_json(const ProbeBundle& bundle);
ProbeBundle bundle_from_json(const std::string& text);
void save_bundle(const ProbeBundle& bundle, const std::string& path);
// Verifies the stored hash.
ProbeBundle load_bundle(const std::string& path);

}  // namespace cex
