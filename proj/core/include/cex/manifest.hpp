#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cex/types.hpp"

namespace cex {

struct ManifestEntry {
    std::string id;
    std::string image;  // relative to the manifest directory
    std::optional<Label> diagnosis;
    Split split = Split::train;
    std::map<std::string, Annotation> annotations;
    std::map<std::string, std::string> masks;  // concept -> relative path
    Metadata meta;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::string root;  // directory paths are resolved against
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> in_split(Split split) const;
    const ManifestEntry* find(const std::string& id) const;
    std::string resolve(const std::string& relative) const;

    bool operator==(const DatasetManifest& other) const { return entries == other.entries; }
};

using ClassCounts = std::map<Label, std::size_t>;

ClassCounts split_counts(const DatasetManifest& manifest, Split split);
ClassCounts total_counts(const DatasetManifest& manifest);

struct ManifestOptions {
    bool check_files = true;
};

// JSON-lines, one object per entry. Throws Errc::parse with the 1-based line
// number, Errc::validation for duplicate ids and unknown concepts, and
// Errc::not_found for missing image files.
DatasetManifest load_manifest(const std::string& path, const ConceptRegistry& registry,
                              ManifestOptions options = {});
DatasetManifest parse_manifest(const std::string& text, const ConceptRegistry& registry,
                               const std::string& root = ".");
std::string serialize_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

// Reads image and masks for one entry. Grayscale images are replicated to RGB.
// Mask shapes are checked against the image.
ImageSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                        const ConceptRegistry* registry = nullptr);
std::vector<ImageSample> load_samples(const DatasetManifest& manifest, Split split,
                                      const ConceptRegistry* registry = nullptr);

}  // namespace cex
