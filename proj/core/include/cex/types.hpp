#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cex {

// Melanoma is the positive class everywhere.
enum class Label : int { nevus = 0, melanoma = 1 };

inline constexpr int kClassCount = 2;

constexpr int encode(Label label) noexcept { return static_cast<int>(label); }
Label decode_label(int index);
std::string_view to_string(Label label) noexcept;
std::string_view display_name(Label label) noexcept;  // "Melanoma" / "Nevus"
Label parse_label(std::string_view text);
constexpr Label other(Label label) noexcept {
    return label == Label::melanoma ? Label::nevus : Label::melanoma;
}

enum class Annotation { present, absent, unknown };

std::string_view to_string(Annotation a) noexcept;
Annotation parse_annotation(std::string_view text);

enum class Split { train, validate, test };

inline constexpr Split kAllSplits[] = {Split::train, Split::validate, Split::test};

std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view text);

// 8-bit interleaved RGB, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool operator==(const Image&) const = default;
};

// Binary H x W grid stored as 0/1 bytes.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }

    std::size_t count() const;
    bool empty() const { return count() == 0; }

    bool operator==(const Mask&) const = default;
};

struct ConceptInfo {
    std::string name;
    std::string display_name;
    std::optional<std::string> polarity_note;

    bool operator==(const ConceptInfo&) const = default;
};

// Ordered concept set. Order is the canonical tie-break order.
class ConceptRegistry {
public:
    ConceptRegistry() = default;
    explicit ConceptRegistry(std::vector<ConceptInfo> concepts);

    const std::vector<ConceptInfo>& concepts() const noexcept { return concepts_; }
    std::size_t size() const noexcept { return concepts_.size(); }

    bool contains(std::string_view name) const noexcept;
    const ConceptInfo& at(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;
    std::vector<std::string> names() const;

    static bool valid_name(std::string_view name) noexcept;

    bool operator==(const ConceptRegistry&) const = default;

private:
    std::vector<ConceptInfo> concepts_;
};

// The dermoscopic concepts planted by the synthetic generator, with the
// nuisance ruler concept last.
ConceptRegistry default_registry();

ConceptRegistry load_registry(const std::string& path);
void save_registry(const ConceptRegistry& registry, const std::string& path);

using Metadata = std::map<std::string, std::string>;

struct ImageSample {
    std::string id;
    Image image;
    Metadata metadata;
    std::optional<Label> diagnosis;
    std::map<std::string, Annotation> concept_annotations;
    std::map<std::string, std::optional<Mask>> concept_masks;

    int width() const noexcept { return image.width; }
    int height() const noexcept { return image.height; }

    Annotation annotation(const std::string& concept_name) const;

    // Throws validation errors on size, buffer or mask-shape violations,
    // and on annotation keys outside the registry when one is given.
    void validate(const ConceptRegistry* registry = nullptr) const;
};

inline constexpr int kMinImageSide = 16;

}  // namespace cex
