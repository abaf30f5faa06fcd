#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cex/manifest.hpp"
#include "cex/rng.hpp"
#include "cex/types.hpp"

namespace cex {

// Activation of one named layer. Shape is (channels, height, width) for
// spatial layers and (features,) for vector layers.
struct ActivationTensor {
    std::string layer;
    std::vector<int> shape;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
};

std::size_t shape_product(std::span<const int> shape);

// Planar (channel-major) float image in [0, 1], the network input format.
struct InputTensor {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

InputTensor to_input(const Image& image);
InputTensor to_input(const Image& image, int height, int width);

using Probabilities = std::array<double, kClassCount>;

// Numerically stable softmax over two logits.
Probabilities softmax(std::span<const double> logits);

// The adapter surface every explanation module is written against.
class ClassifierModel {
public:
    virtual ~ClassifierModel() = default;

    virtual int input_height() const = 0;
    virtual int input_width() const = 0;
    virtual std::vector<std::string> layer_names() const = 0;
    virtual std::vector<int> layer_shape(std::string_view layer) const = 0;
    virtual const std::string& hash() const = 0;

    virtual ActivationTensor forward(const InputTensor& input, std::string_view layer) const = 0;

    // Gradient of the class logit with respect to the named layer's output.
    virtual ActivationTensor grad_class_wrt_layer(const InputTensor& input, Label cls,
                                                  std::string_view layer) const = 0;

    // Logits computed from an activation injected at the named layer. Used for
    // finite-difference checks and counterfactual probing.
    virtual std::vector<double> logits_from(std::string_view layer,
                                            std::span<const double> activation) const = 0;

    bool has_layer(std::string_view layer) const;

    InputTensor prepare(const Image& image) const {
        return to_input(image, input_height(), input_width());
    }
    ActivationTensor forward(const ImageSample& sample, std::string_view layer) const {
        return forward(prepare(sample.image), layer);
    }
    Probabilities class_probabilities(const InputTensor& input) const;
    Probabilities class_probabilities(const ImageSample& sample) const {
        return class_probabilities(prepare(sample.image));
    }
    Label predict(const InputTensor& input) const;
};

enum class LayerKind { conv, dense };

struct LayerWeights {
    std::string name;
    LayerKind kind = LayerKind::conv;
    std::vector<int> shape;  // conv: (out, in, kh, kw); dense: (out, in)
    std::vector<double> weights;
    std::vector<double> bias;

    bool operator==(const LayerWeights&) const = default;
};

struct ModelWeights {
    int version = 1;
    int input_height = 32;
    int input_width = 32;
    int input_channels = 3;
    std::vector<LayerWeights> layers;
    std::string hash;

    const LayerWeights& layer(std::string_view name) const;
    LayerWeights& layer(std::string_view name);
    int class_count() const;

    bool operator==(const ModelWeights&) const = default;
};

// Fixed desk-scale architecture:
//   conv1 (8 @ 3x3, same padding) + ReLU -> maxpool 2x2
//   conv2 (16 @ 3x3, same padding) + ReLU -> maxpool 2x2
//   global average pool ("embedding", 16) -> dense -> 2 logits
// Named layers expose conv1 and conv2 after their ReLU, before pooling.
// conv1 is applied to (input - kInputCentre) with zero padding.
namespace reference_net {
inline constexpr int kConv1Filters = 8;
inline constexpr int kConv2Filters = 16;
inline constexpr int kKernel = 3;
inline constexpr int kDefaultInput = 32;
inline constexpr double kInputCentre = 0.5;
inline constexpr std::string_view kConv1 = "conv1";
inline constexpr std::string_view kConv2 = "conv2";
inline constexpr std::string_view kEmbedding = "embedding";
inline constexpr std::string_view kLogits = "logits";

std::vector<std::string> layer_names();
// Statically computed (C, H, W) / (N,) shape chain for a given input size.
std::vector<int> layer_shape(std::string_view layer, int height, int width);

// Uniform in +-sqrt(6 / fan_in) per layer, seeded; dense rows are then
// centred across classes.
ModelWeights init_weights(std::uint64_t seed, int height = kDefaultInput, int width = kDefaultInput);
ModelWeights zero_weights(int height = kDefaultInput, int width = kDefaultInput);
}  // namespace reference_net

class ReferenceNet final : public ClassifierModel {
public:
    explicit ReferenceNet(ModelWeights weights);

    const ModelWeights& weights() const noexcept { return weights_; }

    int input_height() const override { return weights_.input_height; }
    int input_width() const override { return weights_.input_width; }
    std::vector<std::string> layer_names() const override { return reference_net::layer_names(); }
    std::vector<int> layer_shape(std::string_view layer) const override;
    const std::string& hash() const override { return weights_.hash; }

    ActivationTensor forward(const InputTensor& input, std::string_view layer) const override;
    ActivationTensor grad_class_wrt_layer(const InputTensor& input, Label cls,
                                          std::string_view layer) const override;
    std::vector<double> logits_from(std::string_view layer,
                                    std::span<const double> activation) const override;

    using ClassifierModel::forward;

    // Full pass with every intermediate kept; the training loop and the
    // gradient routine both run off this.
    struct Trace {
        std::vector<double> conv1_pre, conv1, pool1;
        std::vector<int> pool1_arg;
        std::vector<double> conv2_pre, conv2, pool2;
        std::vector<int> pool2_arg;
        std::vector<double> embedding, logits;
    };
    Trace trace(const InputTensor& input, std::string_view stop_after = reference_net::kLogits) const;

    // Parameter gradients of a loss given dLoss/dlogits, accumulated into
    // a weights-shaped buffer (same layer order as weights().layers).
    void accumulate_parameter_gradients(const InputTensor& input, const Trace& trace,
                                        std::span<const double> dlogits,
                                        std::vector<LayerWeights>& grads) const;

private:
    void check_input(const InputTensor& input) const;

    ModelWeights weights_;
    const LayerWeights* conv1_ = nullptr;
    const LayerWeights* conv2_ = nullptr;
    const LayerWeights* dense_ = nullptr;
};

struct TrainConfig {
    double lr = 0.05;
    int epochs = 100;
    double momentum = 0.9;
    std::uint64_t seed = 7;
    double crop_fraction = 0.85;
    double crop_probability = 0.5;  // share of draws that are cropped; the rest keep full scale
    bool flip = true;
    int batch_size = 16;
    double weight_decay = 1e-4;
    bool cosine_decay = true;  // lr * (1 + cos(pi * t)) / 2 over the run
    bool keep_best = true;     // return the epoch with the best validation accuracy
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;  // NaN when the manifest has no validate split
};

struct TrainResult {
    ModelWeights weights;
    std::vector<EpochStats> history;
    int best_epoch = 0;  // epoch whose weights were returned
};

// Deterministic given config.seed. Loads train and validate images from the
// manifest. Throws insufficient_data for single-class training data and
// numeric when the loss goes non-finite.
TrainResult train_reference_net(const DatasetManifest& manifest, const TrainConfig& config);
TrainResult train_reference_net(const std::vector<ImageSample>& train,
                                const std::vector<ImageSample>& validation, const TrainConfig& config);

// Augmentation: with crop_probability, a random crop to crop_fraction of each
// side resized back by nearest neighbour; then random horizontal and vertical flips.
InputTensor augment(const InputTensor& input, double crop_fraction, bool flip, Rng& rng,
                    double crop_probability = 1.0);

std::string canonical_weights(const ModelWeights& weights);
std::string compute_hash(const ModelWeights& weights);
void seal(ModelWeights& weights);  // sets weights.hash

std::string weights_to_json(const ModelWeights& weights);
ModelWeights weights_from_json(const std::string& text);
void save_weights(const ModelWeights& weights, const std::string& path);
ModelWeights load_weights(const std::string& path);

}  // namespace cex
