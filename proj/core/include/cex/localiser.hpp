#pragma once

#include <string>
#include <vector>

#include "cex/model.hpp"
#include "cex/probe.hpp"
#include "cex/types.hpp"

namespace cex {

enum class SignMode { positive_only, signed_delta };

// Zero-valued fields take image-dependent defaults in resolve():
// window = H/4 rounded to even, stride = window/2, mask sigma = window/3.
struct ClmConfig {
    int window = 0;
    int stride = 0;
    double blur_sigma = 4.0;
    double mask_sigma = 0.0;
    SignMode sign = SignMode::positive_only;
    double percentile = 80.0;

    ClmConfig resolve(int height, int width) const;
    void validate(int height, int width) const;
};

struct ConceptLocalisationMap {
    std::string concept_name;
    std::string sample_id;
    int width = 0;
    int height = 0;
    std::vector<double> values;  // min-max rescaled to [0, 1]
    std::vector<double> raw;     // accumulated margin drops before rescaling
    double baseline_margin = 0.0;
    ClmConfig config;            // resolved

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    bool is_zero() const;
};

// Window origins along one axis; the last window is clamped to the edge so
// every pixel is covered.
std::vector<int> window_positions(int size, int window, int stride);

// Separable Gaussian blur of a planar image with edge clamping. Written in
// difference form, so a constant image is returned bit-identical.
InputTensor gaussian_blur(const InputTensor& input, double sigma);

// window x window blend weights, Gaussian in distance from the window centre,
// scaled so the peak is exactly 1.
std::vector<double> blend_mask(int window, double sigma);

ConceptLocalisationMap compute_clm(const ClassifierModel& model, const ConceptProbe& probe,
                                   const InputTensor& input, const ClmConfig& config,
                                   const std::string& sample_id = {});
ConceptLocalisationMap compute_clm(const ClassifierModel& model, const ConceptProbe& probe,
                                   const ImageSample& sample, const ClmConfig& config);

// values >= P-th percentile; an all-zero map gives an empty mask.
Mask binarize(const ConceptLocalisationMap& map, double percentile);

// |a & b| / |a | b|, 1 when both are empty.
double iou(const Mask& a, const Mask& b);

// Square dilation by `radius` pixels (Chebyshev distance).
Mask dilate(const Mask& mask, int radius);

struct GridPoint {
    int x = 0;
    int y = 0;
};
// First maximum in row-major order; nullopt for an all-zero map.
std::optional<GridPoint> argmax(const ConceptLocalisationMap& map);

// 16-bit grayscale PNG with value = round(65535 * map).
std::vector<std::uint8_t> clm_to_png(const ConceptLocalisationMap& map);
std::string clm_sidecar_json(const ConceptLocalisationMap& map);
std::string to_string(SignMode mode);

}  // namespace cex
