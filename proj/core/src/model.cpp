#include "cex/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cex/error.hpp"
#include "cex/hash.hpp"
#include "cex/image_io.hpp"

namespace cex {

std::size_t shape_product(std::span<const int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

InputTensor to_input(const Image& image) { return to_input(image, image.height, image.width); }

InputTensor to_input(const Image& image, int height, int width) {
    Image resampled;
    const Image* img = &image;
    if (image.width != width || image.height != height) {
        resampled = resample_nearest(image, width, height);
        img = &resampled;
    }
    InputTensor t;
    t.channels = 3;
    t.height = height;
    t.width = width;
    t.values.resize(static_cast<std::size_t>(3) * height * width);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) t.at(c, y, x) = img->at(x, y, c) / 255.0;
        }
    }
    return t;
}

Probabilities softmax(std::span<const double> logits) {
    if (logits.size() != kClassCount) fail(Errc::shape, "softmax expects two logits");
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    const double s = e0 + e1;
    return {e0 / s, e1 / s};
}

bool ClassifierModel::has_layer(std::string_view layer) const {
    const auto names = layer_names();
    return std::find(names.begin(), names.end(), layer) != names.end();
}

Probabilities ClassifierModel::class_probabilities(const InputTensor& input) const {
    return softmax(forward(input, reference_net::kLogits).values);
}

Label ClassifierModel::predict(const InputTensor& input) const {
    const auto p = class_probabilities(input);
    return p[encode(Label::melanoma)] > p[encode(Label::nevus)] ? Label::melanoma : Label::nevus;
}

const LayerWeights& ModelWeights::layer(std::string_view name) const {
    for (const auto& l : layers) {
        if (l.name == name) return l;
    }
    fail(Errc::not_found, "model has no layer '" + std::string(name) + "'");
}

LayerWeights& ModelWeights::layer(std::string_view name) {
    return const_cast<LayerWeights&>(std::as_const(*this).layer(name));
}

int ModelWeights::class_count() const {
    if (layers.empty()) return 0;
    return layers.back().shape.empty() ? 0 : layers.back().shape[0];
}

namespace reference_net {

std::vector<std::string> layer_names() {
    return {std::string(kConv1), std::string(kConv2), std::string(kEmbedding), std::string(kLogits)};
}

std::vector<int> layer_shape(std::string_view layer, int height, int width) {
    if (layer == kConv1) return {kConv1Filters, height, width};
    if (layer == kConv2) return {kConv2Filters, height / 2, width / 2};
    if (layer == kEmbedding) return {kConv2Filters};
    if (layer == kLogits) return {kClassCount};
    fail(Errc::not_found, "unknown layer '" + std::string(layer) + "'");
}

namespace {
LayerWeights make_layer(std::string_view name, LayerKind kind, std::vector<int> shape) {
    LayerWeights l;
    l.name = std::string(name);
    l.kind = kind;
    l.weights.assign(shape_product(shape), 0.0);
    l.bias.assign(static_cast<std::size_t>(shape[0]), 0.0);
    l.shape = std::move(shape);
    return l;
}
}  // namespace

ModelWeights zero_weights(int height, int width) {
    if (height < 4 || width < 4) fail(Errc::validation, "input too small for the reference net");
    ModelWeights w;
    w.input_height = height;
    w.input_width = width;
    w.layers.push_back(make_layer(kConv1, LayerKind::conv, {kConv1Filters, 3, kKernel, kKernel}));
    w.layers.push_back(make_layer(kConv2, LayerKind::conv, {kConv2Filters, kConv1Filters, kKernel, kKernel}));
    w.layers.push_back(make_layer(kLogits, LayerKind::dense, {kClassCount, kConv2Filters}));
    seal(w);
    return w;
}

ModelWeights init_weights(std::uint64_t seed, int height, int width) {
    ModelWeights w = zero_weights(height, width);
    Rng rng(seed);
    for (auto& l : w.layers) {
        const std::size_t fan_in = shape_product(l.shape) / static_cast<std::size_t>(l.shape[0]);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : l.weights) v = rng.uniform(-limit, limit);
    }
    // Softmax ignores a shift shared by all logits, so the dense rows start
    // zero-sum across classes. Cross-entropy gradients are zero-sum too, so
    // training keeps it that way and each class gradient carries no common mode.
    auto& dense = w.layers.back();
    const int classes = dense.shape[0], in = dense.shape[1];
    for (int j = 0; j < in; ++j) {
        double mean = 0.0;
        for (int k = 0; k < classes; ++k) mean += dense.weights[static_cast<std::size_t>(k) * in + j];
        mean /= classes;
        for (int k = 0; k < classes; ++k) dense.weights[static_cast<std::size_t>(k) * in + j] -= mean;
    }
    seal(w);
    return w;
}

}  // namespace reference_net

namespace {

// conv1 sees the input shifted to [-0.5, 0.5]; padding stays zero in that space.
std::vector<double> centred(const InputTensor& input) {
    std::vector<double> v = input.values;
    for (auto& x : v) x -= reference_net::kInputCentre;
    return v;
}

// Same-padded 3x3 convolution, planar layout.
void conv_forward(const std::vector<double>& in, int in_c, int h, int w, const LayerWeights& layer,
                  std::vector<double>& out) {
    const int out_c = layer.shape[0];
    const int k = layer.shape[2];
    const int pad = k / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    out.assign(static_cast<std::size_t>(out_c) * plane, 0.0);
    for (int o = 0; o < out_c; ++o) {
        double* dst = out.data() + o * plane;
        std::fill(dst, dst + plane, layer.bias[static_cast<std::size_t>(o)]);
        for (int c = 0; c < in_c; ++c) {
            const double* src = in.data() + c * plane;
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, pad - ky);
                const int y1 = std::min(h, h + pad - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = layer.weights[((static_cast<std::size_t>(o) * in_c + c) * k + ky) * k + kx];
                    const int x0 = std::max(0, pad - kx);
                    const int x1 = std::min(w, w + pad - kx);
                    for (int y = y0; y < y1; ++y) {
                        const double* s = src + static_cast<std::size_t>(y + ky - pad) * w + (kx - pad);
                        double* d = dst + static_cast<std::size_t>(y) * w;
                        for (int x = x0; x < x1; ++x) d[x] += wv * s[x];
                    }
                }
            }
        }
    }
}

// Given dOut, accumulate dWeights/dBias (if requested) and produce dIn (if requested).
void conv_backward(const std::vector<double>& in, int in_c, int h, int w, const LayerWeights& layer,
                   const std::vector<double>& dout, LayerWeights* grads, std::vector<double>* din) {
    const int out_c = layer.shape[0];
    const int k = layer.shape[2];
    const int pad = k / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    if (din) din->assign(static_cast<std::size_t>(in_c) * plane, 0.0);
    for (int o = 0; o < out_c; ++o) {
        const double* g = dout.data() + o * plane;
        if (grads) {
            double sum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) sum += g[i];
            grads->bias[static_cast<std::size_t>(o)] += sum;
        }
        for (int c = 0; c < in_c; ++c) {
            const double* src = in.data() + c * plane;
            double* dsrc = din ? din->data() + c * plane : nullptr;
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, pad - ky);
                const int y1 = std::min(h, h + pad - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const std::size_t widx = ((static_cast<std::size_t>(o) * in_c + c) * k + ky) * k + kx;
                    const double wv = layer.weights[widx];
                    const int x0 = std::max(0, pad - kx);
                    const int x1 = std::min(w, w + pad - kx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const std::size_t row = static_cast<std::size_t>(y + ky - pad) * w + (kx - pad);
                        const double* gr = g + static_cast<std::size_t>(y) * w;
                        if (grads) {
                            const double* s = src + row;
                            for (int x = x0; x < x1; ++x) acc += gr[x] * s[x];
                        }
                        if (dsrc) {
                            double* ds = dsrc + row;
                            for (int x = x0; x < x1; ++x) ds[x] += wv * gr[x];
                        }
                    }
                    if (grads) grads->weights[widx] += acc;
                }
            }
        }
    }
}

void relu(const std::vector<double>& in, std::vector<double>& out) {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

// 2x2 stride-2 max pool; ties resolve to the first element in row-major order.
void maxpool_forward(const std::vector<double>& in, int c, int h, int w, std::vector<double>& out,
                     std::vector<int>& arg) {
    const int oh = h / 2, ow = w / 2;
    out.assign(static_cast<std::size_t>(c) * oh * ow, 0.0);
    arg.assign(out.size(), 0);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                int best = (ch * h + 2 * y) * w + 2 * x;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if (in[static_cast<std::size_t>(idx)] > in[static_cast<std::size_t>(best)]) best = idx;
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(ch) * oh + y) * ow + x;
                out[o] = in[static_cast<std::size_t>(best)];
                arg[o] = best;
            }
        }
    }
}

void maxpool_forward(const std::vector<double>& in, int c, int h, int w, std::vector<double>& out) {
    std::vector<int> arg;
    maxpool_forward(in, c, h, w, out, arg);
}

std::vector<double> global_average(const std::vector<double>& in, int c, int h, int w) {
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += in[ch * plane + i];
        out[static_cast<std::size_t>(ch)] = s / static_cast<double>(plane);
    }
    return out;
}

std::vector<double> dense_forward(const LayerWeights& layer, std::span<const double> in) {
    const int out_n = layer.shape[0];
    const int in_n = layer.shape[1];
    std::vector<double> out(static_cast<std::size_t>(out_n));
    for (int o = 0; o < out_n; ++o) {
        double s = layer.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < in_n; ++i) s += layer.weights[static_cast<std::size_t>(o) * in_n + i] * in[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(o)] = s;
    }
    return out;
}

void require_finite(std::span<const double> values, std::string_view stage) {
    for (double v : values) {
        if (!std::isfinite(v)) fail(Errc::numeric, "non-finite value at " + std::string(stage) + " (corrupt weights?)");
    }
}

int stage_of(std::string_view layer) {
    if (layer == reference_net::kConv1) return 0;
    if (layer == reference_net::kConv2) return 1;
    if (layer == reference_net::kEmbedding) return 2;
    if (layer == reference_net::kLogits) return 3;
    fail(Errc::not_found, "unknown layer '" + std::string(layer) + "'");
}

}  // namespace

ReferenceNet::ReferenceNet(ModelWeights weights) : weights_(std::move(weights)) {
    conv1_ = &weights_.layer(reference_net::kConv1);
    conv2_ = &weights_.layer(reference_net::kConv2);
    dense_ = &weights_.layer(reference_net::kLogits);
    const auto expect = [](const LayerWeights& l, std::vector<int> shape) {
        if (l.shape != shape) fail(Errc::shape, "layer '" + l.name + "' has unexpected shape");
        if (l.weights.size() != shape_product(shape) || l.bias.size() != static_cast<std::size_t>(shape[0])) {
            fail(Errc::shape, "layer '" + l.name + "' buffers do not match its shape");
        }
    };
    using namespace reference_net;
    expect(*conv1_, {kConv1Filters, weights_.input_channels, kKernel, kKernel});
    expect(*conv2_, {kConv2Filters, kConv1Filters, kKernel, kKernel});
    expect(*dense_, {kClassCount, kConv2Filters});
    if (weights_.input_channels != 3) fail(Errc::shape, "reference net expects 3 input channels");
    if (weights_.hash.empty()) seal(weights_);
}

std::vector<int> ReferenceNet::layer_shape(std::string_view layer) const {
    return reference_net::layer_shape(layer, weights_.input_height, weights_.input_width);
}

void ReferenceNet::check_input(const InputTensor& input) const {
    if (input.channels != 3 || input.height != weights_.input_height || input.width != weights_.input_width ||
        input.values.size() != static_cast<std::size_t>(3) * input.height * input.width) {
        fail(Errc::shape, "input tensor does not match the model input shape");
    }
}

ReferenceNet::Trace ReferenceNet::trace(const InputTensor& input, std::string_view stop_after) const {
    check_input(input);
    const int stop = stage_of(stop_after);
    const int h = weights_.input_height, w = weights_.input_width;
    using namespace reference_net;
    Trace t;
    conv_forward(centred(input), 3, h, w, *conv1_, t.conv1_pre);
    relu(t.conv1_pre, t.conv1);
    if (stop == 0) return t;
    maxpool_forward(t.conv1, kConv1Filters, h, w, t.pool1, t.pool1_arg);
    conv_forward(t.pool1, kConv1Filters, h / 2, w / 2, *conv2_, t.conv2_pre);
    relu(t.conv2_pre, t.conv2);
    if (stop == 1) return t;
    maxpool_forward(t.conv2, kConv2Filters, h / 2, w / 2, t.pool2, t.pool2_arg);
    t.embedding = global_average(t.pool2, kConv2Filters, h / 4, w / 4);
    if (stop == 2) return t;
    t.logits = dense_forward(*dense_, t.embedding);
    return t;
}

ActivationTensor ReferenceNet::forward(const InputTensor& input, std::string_view layer) const {
    const int stage = stage_of(layer);
    Trace t = trace(input, layer);
    ActivationTensor out;
    out.layer = std::string(layer);
    out.shape = layer_shape(layer);
    switch (stage) {
        case 0: out.values = std::move(t.conv1); break;
        case 1: out.values = std::move(t.conv2); break;
        case 2: out.values = std::move(t.embedding); break;
        default: out.values = std::move(t.logits); break;
    }
    require_finite(out.values, layer);
    return out;
}

std::vector<double> ReferenceNet::logits_from(std::string_view layer, std::span<const double> activation) const {
    const int stage = stage_of(layer);
    const auto shape = layer_shape(layer);
    if (activation.size() != shape_product(shape)) fail(Errc::shape, "activation size does not match layer");
    const int h = weights_.input_height, w = weights_.input_width;
    using namespace reference_net;
    std::vector<double> cur(activation.begin(), activation.end());
    if (stage == 3) return cur;
    if (stage == 0) {
        std::vector<double> pooled, pre;
        maxpool_forward(cur, kConv1Filters, h, w, pooled);
        conv_forward(pooled, kConv1Filters, h / 2, w / 2, *conv2_, pre);
        relu(pre, cur);
    }
    if (stage <= 1) {
        std::vector<double> pooled;
        maxpool_forward(cur, kConv2Filters, h / 2, w / 2, pooled);
        cur = global_average(pooled, kConv2Filters, h / 4, w / 4);
    }
    return dense_forward(*dense_, cur);
}

namespace {

// Backpropagates dlogits through the trace down to the requested stage
// (0 = conv1 output, 1 = conv2 output, 2 = embedding). When grads is non-null
// the parameter gradients of every layer above the stop stage are accumulated;
// stage -1 means "all the way to the input".
std::vector<double> backward(const ReferenceNet::Trace& t, const InputTensor& input, const LayerWeights& conv1,
                             const LayerWeights& conv2, const LayerWeights& dense, int h, int w,
                             std::span<const double> dlogits, int stop_stage,
                             std::vector<LayerWeights>* grads) {
    using namespace reference_net;
    const int in_n = dense.shape[1];
    std::vector<double> d_emb(static_cast<std::size_t>(in_n), 0.0);
    for (int k = 0; k < dense.shape[0]; ++k) {
        const double g = dlogits[static_cast<std::size_t>(k)];
        if (grads) (*grads)[2].bias[static_cast<std::size_t>(k)] += g;
        for (int j = 0; j < in_n; ++j) {
            d_emb[static_cast<std::size_t>(j)] += g * dense.weights[static_cast<std::size_t>(k) * in_n + j];
            if (grads) (*grads)[2].weights[static_cast<std::size_t>(k) * in_n + j] += g * t.embedding[static_cast<std::size_t>(j)];
        }
    }
    if (stop_stage == 2) return d_emb;

    const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
    const double inv = 1.0 / static_cast<double>(h4 * w4);
    std::vector<double> d_conv2(t.conv2.size(), 0.0);
    for (std::size_t o = 0; o < t.pool2.size(); ++o) {
        const std::size_t ch = o / static_cast<std::size_t>(h4 * w4);
        d_conv2[static_cast<std::size_t>(t.pool2_arg[o])] += d_emb[ch] * inv;
    }
    if (stop_stage == 1) return d_conv2;

    for (std::size_t i = 0; i < d_conv2.size(); ++i) {
        if (!(t.conv2_pre[i] > 0.0)) d_conv2[i] = 0.0;
    }
    std::vector<double> d_pool1;
    conv_backward(t.pool1, kConv1Filters, h2, w2, conv2, d_conv2, grads ? &(*grads)[1] : nullptr, &d_pool1);

    std::vector<double> d_conv1(t.conv1.size(), 0.0);
    for (std::size_t o = 0; o < t.pool1.size(); ++o) {
        d_conv1[static_cast<std::size_t>(t.pool1_arg[o])] += d_pool1[o];
    }
    if (stop_stage == 0) return d_conv1;

    for (std::size_t i = 0; i < d_conv1.size(); ++i) {
        if (!(t.conv1_pre[i] > 0.0)) d_conv1[i] = 0.0;
    }
    conv_backward(centred(input), 3, h, w, conv1, d_conv1, grads ? &(*grads)[0] : nullptr, nullptr);
    return {};
}

}  // namespace

ActivationTensor ReferenceNet::grad_class_wrt_layer(const InputTensor& input, Label cls,
                                                    std::string_view layer) const {
    const int stage = stage_of(layer);
    if (stage == 3) fail(Errc::validation, "gradient with respect to the logits layer is degenerate");
    const Trace t = trace(input);
    std::vector<double> dlogits(kClassCount, 0.0);
    dlogits[static_cast<std::size_t>(encode(cls))] = 1.0;
    ActivationTensor out;
    out.layer = std::string(layer);
    out.shape = layer_shape(layer);
    out.values = backward(t, input, *conv1_, *conv2_, *dense_, weights_.input_height, weights_.input_width,
                          dlogits, stage, nullptr);
    require_finite(out.values, layer);
    return out;
}

void ReferenceNet::accumulate_parameter_gradients(const InputTensor& input, const Trace& trace,
                                                  std::span<const double> dlogits,
                                                  std::vector<LayerWeights>& grads) const {
    backward(trace, input, *conv1_, *conv2_, *dense_, weights_.input_height, weights_.input_width, dlogits, -1,
             &grads);
}

InputTensor augment(const InputTensor& input, double crop_fraction, bool flip, Rng& rng, double crop_probability) {
    const int h = input.height, w = input.width;
    int ch = h, cw = w, oy = 0, ox = 0;
    if (crop_fraction < 1.0 && rng.bernoulli(crop_probability)) {
        ch = std::max(1, static_cast<int>(std::lround(crop_fraction * h)));
        cw = std::max(1, static_cast<int>(std::lround(crop_fraction * w)));
        oy = rng.range(0, h - ch);
        ox = rng.range(0, w - cw);
    }
    const bool fh = flip && rng.bernoulli(0.5);
    const bool fv = flip && rng.bernoulli(0.5);
    InputTensor out = input;
    for (int y = 0; y < h; ++y) {
        const int ty = fv ? h - 1 - y : y;
        const int sy = oy + std::min(ch - 1, (ty * ch) / h);
        for (int x = 0; x < w; ++x) {
            const int tx = fh ? w - 1 - x : x;
            const int sx = ox + std::min(cw - 1, (tx * cw) / w);
            for (int c = 0; c < input.channels; ++c) out.at(c, y, x) = input.at(c, sy, sx);
        }
    }
    return out;
}

namespace {

void check_two_classes(const std::vector<ImageSample>& train) {
    bool mel = false, nev = false;
    for (const auto& s : train) {
        if (!s.diagnosis) continue;
        mel |= *s.diagnosis == Label::melanoma;
        nev |= *s.diagnosis == Label::nevus;
    }
    if (!(mel && nev)) fail(Errc::insufficient_data, "training data must contain both classes");
}

std::vector<LayerWeights> zero_like(const ModelWeights& w) {
    std::vector<LayerWeights> out = w.layers;
    for (auto& l : out) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    return out;
}

}  // namespace

TrainResult train_reference_net(const std::vector<ImageSample>& train, const std::vector<ImageSample>& validation,
                                const TrainConfig& config) {
    check_two_classes(train);
    if (config.batch_size < 1) fail(Errc::validation, "batch_size must be positive");
    if (!(config.crop_fraction > 0.0 && config.crop_fraction <= 1.0)) {
        fail(Errc::validation, "crop_fraction must be in (0, 1]");
    }
    if (!(config.crop_probability >= 0.0 && config.crop_probability <= 1.0)) {
        fail(Errc::validation, "crop_probability must be in [0, 1]");
    }

    TrainResult result;
    result.weights = reference_net::init_weights(derive_seed(config.seed, "init"));
    const int h = result.weights.input_height, w = result.weights.input_width;

    std::vector<InputTensor> inputs;
    std::vector<int> labels;
    for (const auto& s : train) {
        if (!s.diagnosis) continue;
        inputs.push_back(to_input(s.image, h, w));
        labels.push_back(encode(*s.diagnosis));
    }
    std::vector<InputTensor> val_inputs;
    std::vector<int> val_labels;
    for (const auto& s : validation) {
        if (!s.diagnosis) continue;
        val_inputs.push_back(to_input(s.image, h, w));
        val_labels.push_back(encode(*s.diagnosis));
    }

    Rng rng(derive_seed(config.seed, "train"));
    std::vector<LayerWeights> velocity = zero_like(result.weights);
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);

    std::optional<ModelWeights> best;
    double best_accuracy = -1.0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = config.cosine_decay
                              ? config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (epoch - 1) / config.epochs))
                              : config.lr;
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const ReferenceNet net(result.weights);
            std::vector<LayerWeights> grads = zero_like(result.weights);
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                const InputTensor x = augment(inputs[i], config.crop_fraction, config.flip, rng, config.crop_probability);
                const auto t = net.trace(x);
                const auto p = softmax(t.logits);
                const int y = labels[i];
                const double loss = -std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
                if (!std::isfinite(loss) || !std::isfinite(t.logits[0]) || !std::isfinite(t.logits[1])) {
                    fail(Errc::numeric, "non-finite loss at epoch " + std::to_string(epoch) +
                                            "; learning rate " + std::to_string(config.lr) + " is likely too high");
                }
                loss_sum += loss;
                const int pred = p[1] > p[0] ? 1 : 0;
                correct += pred == y ? 1 : 0;
                const double dl[2] = {p[0] - (y == 0 ? 1.0 : 0.0), p[1] - (y == 1 ? 1.0 : 0.0)};
                net.accumulate_parameter_gradients(x, t, dl, grads);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t li = 0; li < grads.size(); ++li) {
                auto& W = result.weights.layers[li];
                auto& V = velocity[li];
                for (std::size_t k = 0; k < W.weights.size(); ++k) {
                    const double g = grads[li].weights[k] * scale + config.weight_decay * W.weights[k];
                    V.weights[k] = config.momentum * V.weights[k] - lr * g;
                    W.weights[k] += V.weights[k];
                }
                for (std::size_t k = 0; k < W.bias.size(); ++k) {
                    V.bias[k] = config.momentum * V.bias[k] - lr * grads[li].bias[k] * scale;
                    W.bias[k] += V.bias[k];
                }
            }
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = inputs.empty() ? 0.0 : loss_sum / static_cast<double>(inputs.size());
        stats.train_accuracy = inputs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(inputs.size());
        if (val_inputs.empty()) {
            stats.validation_accuracy = std::nan("");
        } else {
            seal(result.weights);
            const ReferenceNet net(result.weights);
            std::size_t vc = 0;
            for (std::size_t i = 0; i < val_inputs.size(); ++i) vc += encode(net.predict(val_inputs[i])) == val_labels[i] ? 1 : 0;
            stats.validation_accuracy = static_cast<double>(vc) / static_cast<double>(val_inputs.size());
            if (config.keep_best && stats.validation_accuracy >= best_accuracy) {
                best_accuracy = stats.validation_accuracy;
                best = result.weights;
                result.best_epoch = epoch;
            }
        }
        result.history.push_back(stats);
    }
    if (best) {
        result.weights = std::move(*best);
    } else {
        result.best_epoch = config.epochs;
    }
    seal(result.weights);
    return result;
}

TrainResult train_reference_net(const DatasetManifest& manifest, const TrainConfig& config) {
    return train_reference_net(load_samples(manifest, Split::train), load_samples(manifest, Split::validate), config);
}

std::string canonical_weights(const ModelWeights& weights) {
    // Fixed key order, numbers rounded to 9 significant digits.
    std::string s = "{\"version\":" + std::to_string(weights.version) + ",\"input\":[" +
                    std::to_string(weights.input_height) + "," + std::to_string(weights.input_width) + "," +
                    std::to_string(weights.input_channels) + "],\"layers\":[";
    const auto array = [](const std::vector<double>& v) {
        std::string a = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) a += ',';
            a += canonical_number(v[i]);
        }
        return a + "]";
    };
    for (std::size_t li = 0; li < weights.layers.size(); ++li) {
        const auto& l = weights.layers[li];
        if (li) s += ',';
        std::string shape;
        for (std::size_t i = 0; i < l.shape.size(); ++i) shape += (i ? "," : "") + std::to_string(l.shape[i]);
        s += "{\"name\":\"" + l.name + "\",\"kind\":\"" + (l.kind == LayerKind::conv ? "conv" : "dense") +
             "\",\"shape\":[" + shape + "],\"weights\":" + array(l.weights) + ",\"bias\":" + array(l.bias) + "}";
    }
    return s + "]}";
}

std::string compute_hash(const ModelWeights& weights) { return sha256_hex(canonical_weights(weights)); }

void seal(ModelWeights& weights) { weights.hash = compute_hash(weights); }

std::string weights_to_json(const ModelWeights& weights) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : weights.layers) {
        layers.push_back({{"name", l.name},
                          {"kind", l.kind == LayerKind::conv ? "conv" : "dense"},
                          {"shape", l.shape},
                          {"weights", l.weights},
                          {"bias", l.bias}});
    }
    nlohmann::json j{{"version", weights.version},
                     {"input", {weights.input_height, weights.input_width, weights.input_channels}},
                     {"layers", layers},
                     {"hash", weights.hash.empty() ? compute_hash(weights) : weights.hash}};
    return j.dump();
}

ModelWeights weights_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, std::string("weight file: ") + e.what());
    }
    ModelWeights w;
    try {
        w.version = j.at("version").get<int>();
        if (w.version != 1) fail(Errc::version_mismatch, "unsupported weight file version " + std::to_string(w.version));
        const auto input = j.at("input").get<std::vector<int>>();
        if (input.size() != 3) fail(Errc::parse, "weight file: input must be [H, W, C]");
        w.input_height = input[0];
        w.input_width = input[1];
        w.input_channels = input[2];
        for (const auto& lj : j.at("layers")) {
            LayerWeights l;
            l.name = lj.at("name").get<std::string>();
            const auto kind = lj.at("kind").get<std::string>();
            if (kind == "conv") l.kind = LayerKind::conv;
            else if (kind == "dense") l.kind = LayerKind::dense;
            else fail(Errc::parse, "weight file: unknown layer kind '" + kind + "'");
            l.shape = lj.at("shape").get<std::vector<int>>();
            l.weights = lj.at("weights").get<std::vector<double>>();
            l.bias = lj.at("bias").get<std::vector<double>>();
            if (l.shape.empty() || l.weights.size() != shape_product(l.shape) ||
                l.bias.size() != static_cast<std::size_t>(l.shape[0])) {
                fail(Errc::parse, "weight file: layer '" + l.name + "' buffer sizes do not match shape");
            }
            w.layers.push_back(std::move(l));
        }
        w.hash = j.at("hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, std::string("weight file: ") + e.what());
    }
    const std::string actual = compute_hash(w);
    if (actual != w.hash) fail(Errc::hash_mismatch, "weight file hash mismatch: stored " + w.hash + ", computed " + actual);
    if (w.class_count() != kClassCount) fail(Errc::validation, "weight file must describe a two-class model");
    return w;
}

void save_weights(const ModelWeights& weights, const std::string& path) {
    write_text(path, weights_to_json(weights));
}

ModelWeights load_weights(const std::string& path) {
    const auto bytes = read_file(path);
    return weights_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace cex
