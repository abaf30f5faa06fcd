#include "cex/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cex/error.hpp"
#include "cex/image_io.hpp"

namespace cex {
namespace fs = std::filesystem;
using nlohmann::json;

std::vector<const ManifestEntry*> DatasetManifest::in_split(Split split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
        if (e.split == split) out.push_back(&e);
    }
    return out;
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
    for (const auto& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

std::string DatasetManifest::resolve(const std::string& relative) const {
    return (fs::path(root) / relative).string();
}

ClassCounts split_counts(const DatasetManifest& manifest, Split split) {
    ClassCounts counts{{Label::melanoma, 0}, {Label::nevus, 0}};
    for (const auto& e : manifest.entries) {
        if (e.split == split && e.diagnosis) ++counts[*e.diagnosis];
    }
    return counts;
}

ClassCounts total_counts(const DatasetManifest& manifest) {
    ClassCounts counts{{Label::melanoma, 0}, {Label::nevus, 0}};
    for (const auto& e : manifest.entries) {
        if (e.diagnosis) ++counts[*e.diagnosis];
    }
    return counts;
}

namespace {

ManifestEntry entry_from_json(const json& j, const ConceptRegistry& registry) {
    if (!j.is_object()) fail(Errc::parse, "entry is not a JSON object");
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    if (e.id.empty()) fail(Errc::validation, "empty sample id");
    e.image = j.at("image").get<std::string>();
    if (j.contains("diagnosis") && !j["diagnosis"].is_null()) {
        e.diagnosis = parse_label(j["diagnosis"].get<std::string>());
    }
    e.split = parse_split(j.at("split").get<std::string>());

    std::vector<std::string> unknown;
    if (j.contains("annotations")) {
        for (const auto& [name, value] : j["annotations"].items()) {
            if (!registry.contains(name)) {
                unknown.push_back(name);
                continue;
            }
            e.annotations[name] = parse_annotation(value.get<std::string>());
        }
    }
    if (j.contains("masks")) {
        for (const auto& [name, value] : j["masks"].items()) {
            if (!registry.contains(name)) {
                unknown.push_back(name);
                continue;
            }
            if (!value.is_null()) e.masks[name] = value.get<std::string>();
        }
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
        fail(Errc::validation, "sample " + e.id + ": unknown concept(s): " + list);
    }
    if (j.contains("meta")) {
        for (const auto& [k, v] : j["meta"].items()) {
            e.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    return e;
}

json entry_to_json(const ManifestEntry& e) {
    json annotations = json::object();
    for (const auto& [k, v] : e.annotations) annotations[k] = std::string(to_string(v));
    json masks = json::object();
    for (const auto& [k, v] : e.masks) masks[k] = v;
    json meta = json::object();
    for (const auto& [k, v] : e.meta) meta[k] = v;
    return json{{"id", e.id},
                {"image", e.image},
                {"diagnosis", e.diagnosis ? json(std::string(to_string(*e.diagnosis))) : json(nullptr)},
                {"split", std::string(to_string(e.split))},
                {"annotations", annotations},
                {"masks", masks},
                {"meta", meta}};
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const ConceptRegistry& registry,
                               const std::string& root) {
    DatasetManifest manifest;
    manifest.root = root;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            fail(Errc::parse, "manifest line " + std::to_string(line_no) + ": malformed JSON: " + ex.what());
        }
        ManifestEntry e;
        try {
            e = entry_from_json(j, registry);
        } catch (const json::exception& ex) {
            fail(Errc::parse, "manifest line " + std::to_string(line_no) + ": " + ex.what());
        } catch (const Error& ex) {
            fail(ex.code(), "manifest line " + std::to_string(line_no) + ": " + ex.what());
        }
        if (!seen.insert(e.id).second) {
            fail(Errc::validation, "manifest line " + std::to_string(line_no) + ": duplicate id '" + e.id + "'");
        }
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

DatasetManifest load_manifest(const std::string& path, const ConceptRegistry& registry,
                              ManifestOptions options) {
    std::ifstream in(path);
    if (!in) fail(Errc::not_found, "cannot open manifest " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto root = fs::path(path).parent_path();
    DatasetManifest manifest = parse_manifest(buffer.str(), registry, root.empty() ? "." : root.string());
    if (options.check_files) {
        for (const auto& e : manifest.entries) {
            if (!fs::exists(manifest.resolve(e.image))) {
                fail(Errc::not_found, "sample " + e.id + ": missing image file " + e.image);
            }
            for (const auto& [concept_name, mask] : e.masks) {
                if (!fs::exists(manifest.resolve(mask))) {
                    fail(Errc::not_found, "sample " + e.id + ": missing mask file " + mask);
                }
            }
        }
    }
    return manifest;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
    std::string out;
    for (const auto& e : manifest.entries) {
        out += entry_to_json(e).dump();
        out += '\n';
    }
    return out;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    write_text(path, serialize_manifest(manifest));
}

ImageSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                        const ConceptRegistry* registry) {
    ImageSample s;
    s.id = entry.id;
    s.image = read_png(manifest.resolve(entry.image));
    s.metadata = entry.meta;
    s.diagnosis = entry.diagnosis;
    s.concept_annotations = entry.annotations;
    for (const auto& [concept_name, path] : entry.masks) s.concept_masks[concept_name] = read_mask_png(manifest.resolve(path));
    s.validate(registry);
    return s;
}

std::vector<ImageSample> load_samples(const DatasetManifest& manifest, Split split,
                                      const ConceptRegistry* registry) {
    std::vector<ImageSample> out;
    for (const auto* e : manifest.in_split(split)) out.push_back(load_sample(manifest, *e, registry));
    return out;
}

}  // namespace cex
