#include "cex/types.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cex/error.hpp"

namespace cex {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::parse: return "parse";
        case Errc::validation: return "validation";
        case Errc::io: return "io";
        case Errc::shape: return "shape";
        case Errc::numeric: return "numeric";
        case Errc::hash_mismatch: return "hash_mismatch";
        case Errc::version_mismatch: return "version_mismatch";
        case Errc::not_found: return "not_found";
        case Errc::insufficient_data: return "insufficient_data";
        case Errc::degenerate: return "degenerate";
        case Errc::type_mismatch: return "type_mismatch";
        case Errc::read_only: return "read_only";
    }
    return "unknown";
}

Label decode_label(int index) {
    if (index == 0) return Label::nevus;
    if (index == 1) return Label::melanoma;
    fail(Errc::validation, "label index out of range: " + std::to_string(index));
}

std::string_view to_string(Label label) noexcept {
    return label == Label::melanoma ? "melanoma" : "nevus";
}

std::string_view display_name(Label label) noexcept {
    return label == Label::melanoma ? "Melanoma" : "Nevus";
}

Label parse_label(std::string_view text) {
    if (text == "melanoma") return Label::melanoma;
    if (text == "nevus") return Label::nevus;
    fail(Errc::validation, "unknown diagnosis '" + std::string(text) + "'");
}

std::string_view to_string(Annotation a) noexcept {
    switch (a) {
        case Annotation::present: return "present";
        case Annotation::absent: return "absent";
        case Annotation::unknown: return "unknown";
    }
    return "unknown";
}

Annotation parse_annotation(std::string_view text) {
    if (text == "present") return Annotation::present;
    if (text == "absent") return Annotation::absent;
    if (text == "unknown") return Annotation::unknown;
    fail(Errc::validation, "unknown annotation value '" + std::string(text) + "'");
}

std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::validate: return "validate";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "validate") return Split::validate;
    if (text == "test") return Split::test;
    fail(Errc::validation, "unknown split '" + std::string(text) + "'");
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                  [](std::uint8_t b) { return b != 0; }));
}

ConceptRegistry::ConceptRegistry(std::vector<ConceptInfo> concepts) : concepts_(std::move(concepts)) {
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        const auto& c = concepts_[i];
        if (!valid_name(c.name)) {
            fail(Errc::validation, "invalid concept name '" + c.name + "' (expected lowercase snake case)");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (concepts_[j].name == c.name) fail(Errc::validation, "duplicate concept '" + c.name + "'");
        }
    }
}

bool ConceptRegistry::valid_name(std::string_view name) noexcept {
    if (name.empty() || name.front() == '_' || name.back() == '_') return false;
    if (!(name.front() >= 'a' && name.front() <= 'z')) return false;
    for (char c : name) {
        if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
    }
    return name.find("__") == std::string_view::npos;
}

bool ConceptRegistry::contains(std::string_view name) const noexcept {
    return std::any_of(concepts_.begin(), concepts_.end(), [&](const auto& c) { return c.name == name; });
}

const ConceptInfo& ConceptRegistry::at(std::string_view name) const { return concepts_[index_of(name)]; }

std::size_t ConceptRegistry::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        if (concepts_[i].name == name) return i;
    }
    fail(Errc::not_found, "unknown concept '" + std::string(name) + "'");
}

std::vector<std::string> ConceptRegistry::names() const {
    std::vector<std::string> out;
    out.reserve(concepts_.size());
    for (const auto& c : concepts_) out.push_back(c.name);
    return out;
}

ConceptRegistry default_registry() {
    return ConceptRegistry({
        {"streaks", "Streaks", "irregular"},
        {"dots_globules", "Dots & Globules", "irregular"},
        {"blue_veil", "Blue-Whitish Veil", std::nullopt},
        {"ruler_artifact", "Ruler Artifact", std::nullopt},
    });
}

ConceptRegistry load_registry(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::not_found, "cannot open registry " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, "registry " + path + ": " + e.what());
    }
    if (!j.contains("concepts") || !j["concepts"].is_array()) {
        fail(Errc::parse, "registry " + path + ": missing \"concepts\" array");
    }
    std::vector<ConceptInfo> concepts;
    for (const auto& c : j["concepts"]) {
        ConceptInfo info;
        info.name = c.at("name").get<std::string>();
        info.display_name = c.value("display_name", info.name);
        if (c.contains("polarity_note") && c["polarity_note"].is_string()) {
            info.polarity_note = c["polarity_note"].get<std::string>();
        }
        concepts.push_back(std::move(info));
    }
    return ConceptRegistry(std::move(concepts));
}

void save_registry(const ConceptRegistry& registry, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : registry.concepts()) {
        nlohmann::json item{{"name", c.name}, {"display_name", c.display_name}};
        if (c.polarity_note) item["polarity_note"] = *c.polarity_note;
        arr.push_back(std::move(item));
    }
    std::ofstream out(path);
    if (!out) fail(Errc::io, "cannot write registry " + path);
    out << nlohmann::json{{"concepts", arr}}.dump(2) << '\n';
}

Annotation ImageSample::annotation(const std::string& concept_name) const {
    auto it = concept_annotations.find(concept_name);
    return it == concept_annotations.end() ? Annotation::unknown : it->second;
}

void ImageSample::validate(const ConceptRegistry* registry) const {
    if (image.width < kMinImageSide || image.height < kMinImageSide) {
        fail(Errc::validation, "sample " + id + ": image smaller than 16x16");
    }
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        fail(Errc::validation, "sample " + id + ": pixel buffer length does not match H*W*3");
    }
    for (const auto& [concept_name, mask] : concept_masks) {
        if (mask && (mask->width != image.width || mask->height != image.height)) {
            fail(Errc::shape, "sample " + id + ": mask for '" + concept_name + "' has shape " +
                                  std::to_string(mask->width) + "x" + std::to_string(mask->height) +
                                  ", image is " + std::to_string(image.width) + "x" +
                                  std::to_string(image.height));
        }
    }
    if (registry) {
        for (const auto& [concept_name, _] : concept_annotations) {
            if (!registry->contains(concept_name)) {
                fail(Errc::validation, "sample " + id + ": unknown concept '" + concept_name + "'");
            }
        }
    }
}

}  // namespace cex
