#pragma once

// Convolutional network built from scratch: valid-padding convolutions,
// 2x2 max-pooling, fully-connected layers, inverted dropout and a softmax
// output, with exact backpropagation of the mean cross-entropy.
//
// Activations are stored channel-last (HWC). Convolution weights are laid
// out [in_channel][ky][kx][out_channel]; fully-connected weights are
// [out_unit][in_unit] with the input flattened in HWC order.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "rasterize.hpp"

namespace inksig {

enum class LayerKind : std::uint8_t { conv = 1, maxpool = 2, fully_connected = 3, softmax_output = 4 };
enum class Activation : std::uint8_t { none = 0, relu = 1 };

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int kernel = 0; ///< conv: 3 or 2; pool: 2; unused otherwise
    int stride = 1; ///< conv: 1; pool: 2
    int out = 0;    ///< conv: filters; fc / output: units
    Activation activation = Activation::relu;
    double dropout = 0.0; ///< inverted dropout on this layer's input

    bool has_weights() const noexcept { return kind != LayerKind::maxpool; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Shape {
    int c = 0, h = 0, w = 0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

struct NetworkSpec {
    int input_channels = 1;
    int input_size = kGridPixels;
    int num_writers = 2;
    std::vector<LayerSpec> layers; ///< last layer is the softmax output

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Paper-scale hidden stack; the softmax output is appended on parse.
inline constexpr std::string_view kDefaultArchitecture =
    "80C3-MP2-160C2-MP2-240C2-MP2-320C2-MP2-400C2-MP2-480C2-512FC";

/// Same topology at one fifth of the width; trains on a single CPU core.
inline constexpr std::string_view kDeskArchitecture = "16C3-MP2-32C2-MP2-48C2-MP2-64C2-MP2-80C2-MP2-96C2-128FC";

/// Default rates for the last four weighting layers.
inline const std::vector<double> kDefaultDropout = {0.1, 0.1, 0.5, 0.5};

/// Output shape of each layer; result[0] is the input shape. Throws if any
/// layer does not land on an integral spatial size.
inline std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
    if (spec.input_channels < 1 || spec.input_size < 1) throw InvalidInput("network input must be non-empty");
    if (spec.num_writers < 1) throw InvalidInput("network needs at least one output class");
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::softmax_output)
        throw InvalidInput("network must end in a softmax output layer");

    std::vector<Shape> shapes{{spec.input_channels, spec.input_size, spec.input_size}};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const Shape in = shapes.back();
        const std::string where = "layer " + std::to_string(i + 1) + ": ";
        if (!(l.dropout >= 0.0 && l.dropout < 1.0)) throw InvalidInput(where + "dropout rate must be in [0, 1)");
        switch (l.kind) {
        case LayerKind::conv:
            if (l.kernel < 1 || l.stride != 1 || l.out < 1) throw InvalidInput(where + "bad convolution parameters");
            if (in.h < l.kernel || in.w < l.kernel) throw InvalidInput(where + "kernel larger than input");
            shapes.push_back({l.out, in.h - l.kernel + 1, in.w - l.kernel + 1});
            break;
        case LayerKind::maxpool:
            if (l.kernel != 2 || l.stride != 2) throw InvalidInput(where + "pooling must be 2x2 with stride 2");
            if (in.h % 2 != 0 || in.w % 2 != 0)
                throw InvalidInput(where + "pooling a " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                                   " map does not give an integral size");
            shapes.push_back({in.c, in.h / 2, in.w / 2});
            break;
        case LayerKind::fully_connected:
            if (l.out < 1) throw InvalidInput(where + "fully-connected layer needs >= 1 unit");
            shapes.push_back({l.out, 1, 1});
            break;
        case LayerKind::softmax_output:
            if (i + 1 != spec.layers.size()) throw InvalidInput(where + "softmax output must be the last layer");
            if (l.out != spec.num_writers) throw InvalidInput(where + "output size must equal the writer count");
            shapes.push_back({l.out, 1, 1});
            break;
        }
    }
    return shapes;
}

namespace detail {
inline int parse_int(std::string_view s, std::string_view token) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || v < 1)
        throw InvalidInput("bad architecture token '" + std::string(token) + "'");
    return v;
}
} // namespace detail

/// Sets dropout on the last `rates.size()` weighting layers, in order. A
/// network with fewer weighting layers takes the trailing rates.
inline void assign_dropout(NetworkSpec& spec, std::span<const double> rates) {
    std::vector<std::size_t> weighting;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].has_weights()) weighting.push_back(i);
    if (rates.size() > weighting.size()) rates = rates.subspan(rates.size() - weighting.size());
    for (double r : rates)
        if (!(r >= 0.0 && r < 1.0)) throw InvalidInput("dropout rates must be in [0, 1)");
    for (auto& l : spec.layers) l.dropout = 0.0;
    const std::size_t first = weighting.size() - rates.size();
    for (std::size_t j = 0; j < rates.size(); ++j) spec.layers[weighting[first + j]].dropout = rates[j];
}

/// Parses a "80C3-MP2-...-512FC" string. Tokens: <n>C<k> convolution with
/// ReLU, MP2 max-pool, <n>FC fully-connected with ReLU; optional "Input..."
/// and trailing "Output" tokens are accepted. The softmax output over
/// `num_writers` is always appended.
inline NetworkSpec parse_architecture(std::string_view arch, int input_channels, int num_writers,
                                      std::span<const double> dropout = kDefaultDropout,
                                      int input_size = kGridPixels) {
    NetworkSpec spec{input_channels, input_size, num_writers, {}};
    std::size_t pos = 0;
    while (pos <= arch.size()) {
        const std::size_t end = std::min(arch.find('-', pos), arch.size());
        const std::string_view tok = arch.substr(pos, end - pos);
        pos = end + 1;
        if (tok.empty()) throw InvalidInput("empty token in architecture string");
        if (tok.starts_with("Input") || tok == "Output") continue;
        if (tok == "MP2") {
            spec.layers.push_back({LayerKind::maxpool, 2, 2, 0, Activation::none, 0.0});
        } else if (tok.ends_with("FC")) {
            spec.layers.push_back(
                {LayerKind::fully_connected, 0, 1, detail::parse_int(tok.substr(0, tok.size() - 2), tok),
                 Activation::relu, 0.0});
        } else if (const auto c = tok.find('C'); c != std::string_view::npos) {
            spec.layers.push_back({LayerKind::conv, detail::parse_int(tok.substr(c + 1), tok), 1,
                                   detail::parse_int(tok.substr(0, c), tok), Activation::relu, 0.0});
        } else {
            throw InvalidInput("bad architecture token '" + std::string(tok) + "'");
        }
    }
    spec.layers.push_back({LayerKind::softmax_output, 0, 1, num_writers, Activation::none, 0.0});
    assign_dropout(spec, dropout);
    infer_shapes(spec);
    return spec;
}

template <class T>
struct LayerParams {
    std::vector<T> weights;
    std::vector<T> bias;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <class T>
using Gradients = std::vector<LayerParams<T>>;

/// Everything backward() needs from one training-mode forward pass.
template <class T>
struct ForwardCache {
    std::vector<std::vector<T>> inputs;  ///< input each layer consumed (after dropout)
    std::vector<std::vector<T>> outputs; ///< output of each layer (after activation)
    std::vector<std::vector<T>> masks;   ///< dropout multipliers, empty if none
    std::vector<std::vector<std::uint32_t>> argmax;
};

/// Converts a channel-major feature tensor to the network's HWC input.
template <class T>
std::vector<T> to_input(const FeatureTensor& t) {
    std::vector<T> out(t.values.size());
    const std::size_t plane = t.plane();
    for (int c = 0; c < t.channels; ++c)
        for (std::size_t p = 0; p < plane; ++p)
            out[p * t.channels + c] = static_cast<T>(t.values[c * plane + p]);
    return out;
}

template <class T>
class Network {
public:
    /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), shapes_(infer_shapes(spec_)) {
        Rng rng(seed);
        params_.resize(spec_.layers.size());
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            const auto& l = spec_.layers[i];
            if (!l.has_weights()) continue;
            const std::size_t fan_in = fan_in_of(i);
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            params_[i].weights.resize(fan_in * static_cast<std::size_t>(l.out));
            for (auto& w : params_[i].weights) w = static_cast<T>(dist(rng));
            params_[i].bias.assign(static_cast<std::size_t>(l.out), T(0));
        }
    }

    /// Rebuilds a network from saved parameters.
    Network(NetworkSpec spec, std::vector<LayerParams<T>> params)
        : spec_(std::move(spec)), shapes_(infer_shapes(spec_)), params_(std::move(params)) {
        if (params_.size() != spec_.layers.size()) throw InvalidInput("parameter block count mismatch");
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            const auto& l = spec_.layers[i];
            const std::size_t nw = l.has_weights() ? fan_in_of(i) * static_cast<std::size_t>(l.out) : 0;
            const std::size_t nb = l.has_weights() ? static_cast<std::size_t>(l.out) : 0;
            if (params_[i].weights.size() != nw || params_[i].bias.size() != nb)
                throw InvalidInput("parameter size mismatch at layer " + std::to_string(i + 1));
        }
    }

    const NetworkSpec& spec() const noexcept { return spec_; }
    const std::vector<Shape>& shapes() const noexcept { return shapes_; }
    int input_channels() const noexcept { return spec_.input_channels; }
    int num_writers() const noexcept { return spec_.num_writers; }
    std::vector<LayerParams<T>>& params() noexcept { return params_; }
    const std::vector<LayerParams<T>>& params() const noexcept { return params_; }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.weights.size() + p.bias.size();
        return n;
    }

    Gradients<T> zero_gradients() const {
        Gradients<T> g(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            g[i].weights.assign(params_[i].weights.size(), T(0));
            g[i].bias.assign(params_[i].bias.size(), T(0));
        }
        return g;
    }

    /// Class probabilities for one HWC input. In training mode dropout masks
    /// are drawn from `rng`, and `cache` (if given) receives what backward needs.
    std::vector<T> forward(std::span<const T> input, bool training = false, Rng* rng = nullptr,
                           ForwardCache<T>* cache = nullptr) const {
        if (input.size() != shapes_.front().size())
            throw InvalidInput("forward: input has " + std::to_string(input.size()) + " values, network expects " +
                               std::to_string(shapes_.front().size()));
        const std::size_t n_layers = spec_.layers.size();
        if (cache) {
            cache->inputs.assign(n_layers, {});
            cache->outputs.assign(n_layers, {});
            cache->masks.assign(n_layers, {});
            cache->argmax.assign(n_layers, {});
        }
        std::vector<T> cur(input.begin(), input.end());
        for (std::size_t i = 0; i < n_layers; ++i) {
            const auto& l = spec_.layers[i];
            if (training && l.dropout > 0.0) {
                if (!rng) throw InvalidInput("forward: training with dropout needs an RNG");
                std::vector<T> mask(cur.size());
                const T keep_scale = static_cast<T>(1.0 / (1.0 - l.dropout));
                std::bernoulli_distribution keep(1.0 - l.dropout);
                for (std::size_t j = 0; j < cur.size(); ++j) {
                    mask[j] = keep(*rng) ? keep_scale : T(0);
                    cur[j] *= mask[j];
                }
                if (cache) cache->masks[i] = std::move(mask);
            }
            std::vector<T> out;
            switch (l.kind) {
            case LayerKind::conv: out = conv_forward(i, cur); break;
            case LayerKind::maxpool:
                out = pool_forward(i, cur, cache ? &cache->argmax[i] : nullptr);
                break;
            case LayerKind::fully_connected:
            case LayerKind::softmax_output: out = dense_forward(i, cur); break;
            }
            if (l.kind == LayerKind::softmax_output) softmax_in_place(out);
            else if (l.activation == Activation::relu)
                for (auto& v : out) v = std::max(v, T(0));
            if (cache) {
                cache->inputs[i] = std::move(cur);
                cache->outputs[i] = out;
            }
            cur = std::move(out);
        }
        return cur;
    }

    /// Accumulates into `grads` the gradient of `weight * CE(label)` for the
    /// sample recorded in `cache`. With weight = 1/B over a minibatch the total
    /// is the gradient of the mean cross-entropy.
    void backward(const ForwardCache<T>& cache, int label, Gradients<T>& grads, T weight = T(1)) const {
        const std::size_t n_layers = spec_.layers.size();
        if (cache.outputs.size() != n_layers || cache.outputs.back().empty())
            throw InvalidInput("backward: missing forward cache");
        if (label < 0 || label >= spec_.num_writers) throw InvalidInput("backward: label out of range");

        std::vector<T> grad = cache.outputs.back();
        grad[static_cast<std::size_t>(label)] -= T(1);
        for (auto& g : grad) g *= weight;

        for (std::size_t i = n_layers; i-- > 0;) {
            const auto& l = spec_.layers[i];
            if (l.kind != LayerKind::softmax_output && l.activation == Activation::relu) {
                const auto& out = cache.outputs[i];
                for (std::size_t j = 0; j < grad.size(); ++j)
                    if (!(out[j] > T(0))) grad[j] = T(0);
            }
            const bool need_input_grad = i > 0;
            std::vector<T> gin;
            switch (l.kind) {
            case LayerKind::conv: gin = conv_backward(i, cache.inputs[i], grad, grads[i], need_input_grad); break;
            case LayerKind::maxpool: gin = pool_backward(i, cache.argmax[i], grad); break;
            case LayerKind::fully_connected:
            case LayerKind::softmax_output:
                gin = dense_backward(i, cache.inputs[i], grad, grads[i], need_input_grad);
                break;
            }
            if (!need_input_grad) break;
            if (!cache.masks[i].empty())
                for (std::size_t j = 0; j < gin.size(); ++j) gin[j] *= cache.masks[i][j];
            grad = std::move(gin);
        }
    }

    /// Plain SGD: w <- w - lr * g.
    void sgd_step(const Gradients<T>& grads, T lr) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            for (std::size_t j = 0; j < params_[i].weights.size(); ++j) params_[i].weights[j] -= lr * grads[i].weights[j];
            for (std::size_t j = 0; j < params_[i].bias.size(); ++j) params_[i].bias[j] -= lr * grads[i].bias[j];
        }
    }

private:
    std::size_t fan_in_of(std::size_t i) const {
        const auto& l = spec_.layers[i];
        const Shape in = shapes_[i];
        if (l.kind == LayerKind::conv) return static_cast<std::size_t>(in.c) * l.kernel * l.kernel;
        return in.size();
    }

    static void softmax_in_place(std::vector<T>& v) {
        const T mx = *std::max_element(v.begin(), v.end());
        T sum = T(0);
        for (auto& x : v) {
            x = std::exp(x - mx);
            sum += x;
        }
        for (auto& x : v) x /= sum;
    }

    // Scatter form: each nonzero input value is pushed to the outputs it
    // touches, so sparse pen-trace inputs cost only their nonzeros.
    std::vector<T> conv_forward(std::size_t i, std::span<const T> in) const {
        const auto& l = spec_.layers[i];
        const Shape is = shapes_[i], os = shapes_[i + 1];
        const int k = l.kernel, O = os.c;
        const T* W = params_[i].weights.data();
        std::vector<T> out(os.size(), T(0));
        for (int y = 0; y < is.h; ++y) {
            for (int x = 0; x < is.w; ++x) {
                const T* px = in.data() + (static_cast<std::size_t>(y) * is.w + x) * is.c;
                for (int c = 0; c < is.c; ++c) {
                    const T v = px[c];
                    if (v == T(0)) continue;
                    for (int ky = 0; ky < k; ++ky) {
                        const int oy = y - ky;
                        if (oy < 0 || oy >= os.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ox = x - kx;
                            if (ox < 0 || ox >= os.w) continue;
                            T* dst = out.data() + (static_cast<std::size_t>(oy) * os.w + ox) * O;
                            const T* w = W + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * O;
                            for (int o = 0; o < O; ++o) dst[o] += w[o] * v;
                        }
                    }
                }
            }
        }
        const T* b = params_[i].bias.data();
        for (std::size_t p = 0; p < static_cast<std::size_t>(os.h) * os.w; ++p)
            for (int o = 0; o < O; ++o) out[p * O + o] += b[o];
        return out;
    }

    std::vector<T> conv_backward(std::size_t i, std::span<const T> in, std::span<const T> g, LayerParams<T>& grad,
                                 bool need_input_grad) const {
        const auto& l = spec_.layers[i];
        const Shape is = shapes_[i], os = shapes_[i + 1];
        const int k = l.kernel, O = os.c;
        const T* W = params_[i].weights.data();
        T* dW = grad.weights.data();
        for (std::size_t p = 0; p < static_cast<std::size_t>(os.h) * os.w; ++p)
            for (int o = 0; o < O; ++o) grad.bias[o] += g[p * O + o];

        // Driven by output positions: after ReLU most gradient vectors are
        // zero and are skipped whole.
        std::vector<T> gin;
        if (need_input_grad) gin.assign(is.size(), T(0));
        for (int oy = 0; oy < os.h; ++oy) {
            for (int ox = 0; ox < os.w; ++ox) {
                const T* go = g.data() + (static_cast<std::size_t>(oy) * os.w + ox) * O;
                if (std::all_of(go, go + O, [](T v) { return v == T(0); })) continue;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const std::size_t pix = (static_cast<std::size_t>(oy + ky) * is.w + ox + kx) * is.c;
                        for (int c = 0; c < is.c; ++c) {
                            const std::size_t woff = ((static_cast<std::size_t>(c) * k + ky) * k + kx) * O;
                            const T v = in[pix + c];
                            if (v != T(0))
                                for (int o = 0; o < O; ++o) dW[woff + o] += v * go[o];
                            if (need_input_grad) {
                                T acc = T(0);
                                for (int o = 0; o < O; ++o) acc += W[woff + o] * go[o];
                                gin[pix + c] += acc;
                            }
                        }
                    }
                }
            }
        }
        return gin;
    }

    std::vector<T> pool_forward(std::size_t i, std::span<const T> in, std::vector<std::uint32_t>* argmax) const {
        const Shape is = shapes_[i], os = shapes_[i + 1];
        std::vector<T> out(os.size());
        if (argmax) argmax->resize(os.size());
        for (int oy = 0; oy < os.h; ++oy) {
            for (int ox = 0; ox < os.w; ++ox) {
                for (int c = 0; c < os.c; ++c) {
                    std::size_t best = (static_cast<std::size_t>(2 * oy) * is.w + 2 * ox) * is.c + c;
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx =
                                (static_cast<std::size_t>(2 * oy + dy) * is.w + 2 * ox + dx) * is.c + c;
                            if (in[idx] > in[best]) best = idx;
                        }
                    }
                    const std::size_t o = (static_cast<std::size_t>(oy) * os.w + ox) * os.c + c;
                    out[o] = in[best];
                    if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
                }
            }
        }
        return out;
    }

    std::vector<T> pool_backward(std::size_t i, const std::vector<std::uint32_t>& argmax, std::span<const T> g) const {
        std::vector<T> gin(shapes_[i].size(), T(0));
        for (std::size_t o = 0; o < g.size(); ++o) gin[argmax[o]] += g[o];
        return gin;
    }

    std::vector<T> dense_forward(std::size_t i, std::span<const T> in) const {
        const std::size_t n_in = in.size();
        const auto& p = params_[i];
        std::vector<T> out(p.bias.size());
        for (std::size_t u = 0; u < out.size(); ++u) {
            const T* w = p.weights.data() + u * n_in;
            T acc = p.bias[u];
            for (std::size_t j = 0; j < n_in; ++j) acc += w[j] * in[j];
            out[u] = acc;
        }
        return out;
    }

    std::vector<T> dense_backward(std::size_t i, std::span<const T> in, std::span<const T> g, LayerParams<T>& grad,
                                  bool need_input_grad) const {
        const std::size_t n_in = in.size();
        const auto& p = params_[i];
        std::vector<T> gin;
        if (need_input_grad) gin.assign(n_in, T(0));
        for (std::size_t u = 0; u < g.size(); ++u) {
            const T gu = g[u];
            if (gu == T(0)) continue;
            grad.bias[u] += gu;
            T* dw = grad.weights.data() + u * n_in;
            const T* w = p.weights.data() + u * n_in;
            for (std::size_t j = 0; j < n_in; ++j) dw[j] += gu * in[j];
            if (need_input_grad)
                for (std::size_t j = 0; j < n_in; ++j) gin[j] += gu * w[j];
        }
        return gin;
    }

    NetworkSpec spec_;
    std::vector<Shape> shapes_;
    std::vector<LayerParams<T>> params_;
};

/// Cross-entropy of one predicted distribution against its label.
template <class T>
double cross_entropy(std::span<const T> probs, int label) {
    return -std::log(std::max(static_cast<double>(probs[static_cast<std::size_t>(label)]), 1e-300));
}

} // namespace inksig
