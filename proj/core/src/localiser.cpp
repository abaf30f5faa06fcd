#include "cex/localiser.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cex/error.hpp"
#include "cex/image_io.hpp"

namespace cex {

namespace {
constexpr double kWeightFloor = 1e-12;
}

ClmConfig ClmConfig::resolve(int height, int width) const {
    ClmConfig c = *this;
    if (c.window <= 0) {
        c.window = std::max(2, static_cast<int>(std::lround(height / 4.0 / 2.0)) * 2);
    }
    if (c.stride <= 0) c.stride = std::max(1, c.window / 2);
    if (c.mask_sigma <= 0.0) c.mask_sigma = c.window / 3.0;
    c.validate(height, width);
    return c;
}

void ClmConfig::validate(int height, int width) const {
    if (window > std::min(height, width)) fail(Errc::validation, "CLM window larger than the image");
    if (stride < 1 || stride > window) fail(Errc::validation, "CLM stride must satisfy 1 <= stride <= window");
    if (!(blur_sigma > 0.0) || !(mask_sigma > 0.0)) fail(Errc::validation, "CLM sigmas must be positive");
    if (!(percentile > 0.0 && percentile < 100.0)) fail(Errc::validation, "CLM percentile must lie in (0, 100)");
}

bool ConceptLocalisationMap::is_zero() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

std::vector<int> window_positions(int size, int window, int stride) {
    std::vector<int> out;
    for (int p = 0; p + window <= size; p += stride) out.push_back(p);
    if (out.empty() || out.back() + window < size) out.push_back(size - window);
    return out;
}

InputTensor gaussian_blur(const InputTensor& input, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double v = std::exp(-(k * k) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(k + radius)] = v;
        sum += v;
    }
    for (auto& v : kernel) v /= sum;

    const int h = input.height, w = input.width;
    InputTensor tmp = input, out = input;
    for (int c = 0; c < input.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double centre = input.at(c, y, x);
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int xx = std::clamp(x + k, 0, w - 1);
                    acc += kernel[static_cast<std::size_t>(k + radius)] * (input.at(c, y, xx) - centre);
                }
                tmp.at(c, y, x) = centre + acc;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double centre = tmp.at(c, y, x);
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int yy = std::clamp(y + k, 0, h - 1);
                    acc += kernel[static_cast<std::size_t>(k + radius)] * (tmp.at(c, yy, x) - centre);
                }
                out.at(c, y, x) = centre + acc;
            }
        }
    }
    return out;
}

std::vector<double> blend_mask(int window, double sigma) {
    std::vector<double> m(static_cast<std::size_t>(window) * window);
    const double centre = (window - 1) / 2.0;
    double peak = 0.0;
    for (int y = 0; y < window; ++y) {
        for (int x = 0; x < window; ++x) {
            const double dy = y - centre, dx = x - centre;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            m[static_cast<std::size_t>(y) * window + x] = v;
            peak = std::max(peak, v);
        }
    }
    for (auto& v : m) v /= peak;
    return m;
}

ConceptLocalisationMap compute_clm(const ClassifierModel& model, const ConceptProbe& probe, const InputTensor& input,
                                   const ClmConfig& config, const std::string& sample_id) {
    if (!model.has_layer(probe.layer)) fail(Errc::validation, "probe layer '" + probe.layer + "' not in model");
    if (shape_product(model.layer_shape(probe.layer)) != probe.direction.size()) {
        fail(Errc::shape, "probe '" + probe.concept_name + "' does not match the model's '" + probe.layer + "' layer");
    }
    const int h = input.height, w = input.width;
    const ClmConfig cfg = config.resolve(h, w);

    ConceptLocalisationMap map;
    map.concept_name = probe.concept_name;
    map.sample_id = sample_id;
    map.width = w;
    map.height = h;
    map.config = cfg;
    map.baseline_margin = concept_margin(probe, model, input);

    const InputTensor blurred = gaussian_blur(input, cfg.blur_sigma);
    const std::vector<double> mask = blend_mask(cfg.window, cfg.mask_sigma);
    const auto ys = window_positions(h, cfg.window, cfg.stride);
    const auto xs = window_positions(w, cfg.window, cfg.stride);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> acc(plane, 0.0), weight(plane, 0.0);

    InputTensor perturbed = input;
    for (int py : ys) {
        for (int px : xs) {
            for (int c = 0; c < input.channels; ++c) {
                for (int dy = 0; dy < cfg.window; ++dy) {
                    for (int dx = 0; dx < cfg.window; ++dx) {
                        const double m = mask[static_cast<std::size_t>(dy) * cfg.window + dx];
                        const int y = py + dy, x = px + dx;
                        perturbed.at(c, y, x) = input.at(c, y, x) + m * (blurred.at(c, y, x) - input.at(c, y, x));
                    }
                }
            }
            const double delta = map.baseline_margin - concept_margin(probe, model, perturbed);
            const double contribution = cfg.sign == SignMode::positive_only ? std::max(delta, 0.0) : delta;
            for (int dy = 0; dy < cfg.window; ++dy) {
                for (int dx = 0; dx < cfg.window; ++dx) {
                    const double m = mask[static_cast<std::size_t>(dy) * cfg.window + dx];
                    const std::size_t idx = static_cast<std::size_t>(py + dy) * w + (px + dx);
                    acc[idx] += contribution * m;
                    weight[idx] += m;
                }
            }
            // Restore the window for the next position.
            for (int c = 0; c < input.channels; ++c) {
                for (int dy = 0; dy < cfg.window; ++dy) {
                    for (int dx = 0; dx < cfg.window; ++dx) {
                        perturbed.at(c, py + dy, px + dx) = input.at(c, py + dy, px + dx);
                    }
                }
            }
        }
    }

    map.raw.resize(plane);
    for (std::size_t i = 0; i < plane; ++i) map.raw[i] = acc[i] / std::max(weight[i], kWeightFloor);
    const auto [lo, hi] = std::minmax_element(map.raw.begin(), map.raw.end());
    map.values.assign(plane, 0.0);
    if (*hi > *lo) {
        const double span = *hi - *lo;
        for (std::size_t i = 0; i < plane; ++i) map.values[i] = (map.raw[i] - *lo) / span;
    }
    return map;
}

ConceptLocalisationMap compute_clm(const ClassifierModel& model, const ConceptProbe& probe, const ImageSample& sample,
                                   const ClmConfig& config) {
    return compute_clm(model, probe, model.prepare(sample.image), config, sample.id);
}

Mask binarize(const ConceptLocalisationMap& map, double p) {
    if (!(p > 0.0 && p < 100.0)) fail(Errc::validation, "binarization percentile must lie in (0, 100)");
    Mask mask(map.width, map.height);
    if (map.is_zero()) return mask;
    // Selection instead of a full sort; same interpolation as percentile().
    std::vector<double> v = map.values;
    const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double lo_value = v[lo];
    double hi_value = lo_value;
    if (lo + 1 < v.size()) hi_value = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    const double threshold = lo_value + (hi_value - lo_value) * frac;
    for (std::size_t i = 0; i < map.values.size(); ++i) mask.bits[i] = map.values[i] >= threshold ? 1 : 0;
    return mask;
}

double iou(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height) fail(Errc::shape, "IoU of masks with different shapes");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask dilate(const Mask& mask, int radius) {
    Mask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            for (int yy = std::max(0, y - radius); yy <= std::min(mask.height - 1, y + radius); ++yy) {
                for (int xx = std::max(0, x - radius); xx <= std::min(mask.width - 1, x + radius); ++xx) out.at(xx, yy) = 1;
            }
        }
    }
    return out;
}

std::optional<GridPoint> argmax(const ConceptLocalisationMap& map) {
    if (map.is_zero()) return std::nullopt;
    const auto it = std::max_element(map.values.begin(), map.values.end());
    const auto idx = static_cast<int>(it - map.values.begin());
    return GridPoint{idx % map.width, idx / map.width};
}

std::vector<std::uint8_t> clm_to_png(const ConceptLocalisationMap& map) {
    std::vector<std::uint16_t> v(map.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<std::uint16_t>(std::lround(65535.0 * std::clamp(map.values[i], 0.0, 1.0)));
    }
    return encode_png_gray16(map.width, map.height, v);
}

std::string to_string(SignMode mode) { return mode == SignMode::positive_only ? "positive_only" : "signed"; }

std::string clm_sidecar_json(const ConceptLocalisationMap& map) {
    nlohmann::ordered_json j;
    j["sample"] = map.sample_id;
    j["concept"] = map.concept_name;
    j["config"] = {{"window", map.config.window},
                   {"stride", map.config.stride},
                   {"blur_sigma", map.config.blur_sigma},
                   {"mask_sigma", map.config.mask_sigma},
                   {"sign_mode", to_string(map.config.sign)},
                   {"percentile", map.config.percentile}};
    j["baseline_margin"] = map.baseline_margin;
    return j.dump(2);
}

}  // namespace cex
