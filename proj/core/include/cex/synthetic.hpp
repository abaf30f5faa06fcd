#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cex/manifest.hpp"
#include "cex/types.hpp"

namespace cex {

// Boolean expression over concept names: identifiers, AND, OR, NOT and
// parentheses. NOT binds tighter than AND, AND tighter than OR. Keywords are
// case-insensitive.
class Rule {
public:
    static Rule parse(const std::string& text);

    bool evaluate(const std::map<std::string, bool>& presence) const;
    Label classify(const std::map<std::string, bool>& presence) const {
        return evaluate(presence) ? Label::melanoma : Label::nevus;
    }

    const std::string& text() const noexcept { return text_; }
    // Referenced names in first-occurrence order.
    const std::vector<std::string>& names() const noexcept { return names_; }

    struct Node;

private:
    std::string text_;
    std::vector<std::string> names_;
    std::shared_ptr<const Node> root_;
};

// Melanoma iff the expression is true. Parse errors carry the 0-based
// character position.
Label evaluate_rule(const std::string& rule, const std::map<std::string, bool>& presence);

inline constexpr const char* kDefaultRule = "(streaks AND blue_veil) OR (streaks AND dots_globules)";

struct GeneratorConfig {
    int width = 32;
    int height = 32;
    int samples = 500;
    std::uint64_t seed = 2021;
    double default_probability = 0.5;
    std::map<std::string, double> presence_probability;  // overrides per concept
    std::string rule = kDefaultRule;
    std::vector<std::string> nuisance = {"ruler_artifact"};
    ConceptRegistry registry = default_registry();

    double probability(const std::string& concept_name) const;
    void validate() const;
};

struct SyntheticDataset {
    DatasetManifest manifest;
    std::vector<ImageSample> samples;  // same order as manifest entries
    ConceptRegistry registry;
};

// Pure function of the config. Every registry concept receives a mask;
// masks are non-empty exactly for present concepts.
SyntheticDataset generate(const GeneratorConfig& config);

// Renders one sample with its own derived seed. The split is assigned by
// generate(), not here.
ImageSample generate_sample(const GeneratorConfig& config, const Rule& rule, int index);

// Writes images/, masks/, manifest.jsonl and registry.json under dir and
// returns the manifest rooted there.
DatasetManifest write_dataset(const SyntheticDataset& dataset, const std::string& dir);

// Parses "x0,y0,x1,y1" (inclusive) from sample metadata key "lesion_bbox".
struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
    bool contains(int x, int y) const noexcept { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};
std::optional<BoundingBox> lesion_bbox(const Metadata& meta);

}  // namespace cex
