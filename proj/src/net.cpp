#include "sirentrack/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "sirentrack/errors.hpp"
#include "sirentrack/wire.hpp"

namespace sirentrack {

namespace {

constexpr char kMagic[4] = {'A', 'N', 'F', 'C'};

[[noreturn]] void shape_fail(std::size_t layer_index, const LayerSpec& layer,
                             const std::string& what) {
    throw ShapeError("layer " + std::to_string(layer_index) + " (" +
                     layer_kind_name(layer.kind) + "): " + what);
}

std::uint32_t conv_out_len(std::uint32_t in_len, std::uint32_t kernel,
                           std::uint32_t stride) {
    return (in_len - kernel) / stride + 1;  // valid padding
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv1d: return "conv1d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::global_avg_pool: return "global_avg_pool";
        case LayerKind::fully_connected: return "fully_connected";
        case LayerKind::dropout: return "dropout";
        case LayerKind::sigmoid: return "sigmoid";
    }
    return "unknown";
}

Tensor1D Tensor1D::from_clip(const FeatureClip& clip) {
    if (clip.f_norm.size() != clip.p_ratio.size()) {
        throw ConfigError("tensor: clip channels have different lengths");
    }
    Tensor1D t;
    t.channels = 2;
    t.length = static_cast<std::uint32_t>(clip.length());
    t.data.resize(2 * t.length);
    std::copy(clip.f_norm.begin(), clip.f_norm.end(), t.data.begin());
    std::copy(clip.p_ratio.begin(), clip.p_ratio.end(), t.data.begin() + t.length);
    return t;
}

std::size_t LayerSpec::weight_count() const {
    switch (kind) {
        case LayerKind::conv1d: return static_cast<std::size_t>(in_ch) * kernel * out_ch;
        case LayerKind::fully_connected: return static_cast<std::size_t>(in_ch) * out_ch;
        default: return 0;
    }
}

std::size_t LayerSpec::bias_count() const {
    switch (kind) {
        case LayerKind::conv1d:
        case LayerKind::fully_connected: return out_ch;
        default: return 0;
    }
}

std::size_t NetworkSpec::param_count() const {
    std::size_t n = 0;
    for (const LayerSpec& l : layers) n += l.weight_count() + l.bias_count();
    return n;
}

void NetworkSpec::validate() const {
    if (layers.empty()) {
        throw ConfigError("network: empty layer list");
    }
    std::uint32_t ch = layers.front().in_ch;
    if (ch == 0) {
        throw ConfigError("network: first layer must declare input channels");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::conv1d:
                if (l.kernel < 1 || l.stride < 1 || l.out_ch < 1) {
                    throw ConfigError("network: bad conv1d geometry at layer " +
                                      std::to_string(i));
                }
                if (l.in_ch != ch) {
                    throw ConfigError("network: channel mismatch at layer " +
                                      std::to_string(i));
                }
                ch = l.out_ch;
                break;
            case LayerKind::fully_connected:
                if (l.out_ch < 1) {
                    throw ConfigError("network: bad fc width at layer " +
                                      std::to_string(i));
                }
                if (l.in_ch != ch) {
                    throw ConfigError("network: channel mismatch at layer " +
                                      std::to_string(i));
                }
                ch = l.out_ch;
                break;
            case LayerKind::dropout:
                if (!(l.drop_p >= 0.0f) || !(l.drop_p < 1.0f)) {
                    throw ConfigError("network: dropout probability must lie in [0, 1)");
                }
                break;
            case LayerKind::sigmoid:
                if (ch != 1) {
                    throw ConfigError("network: sigmoid requires a single unit");
                }
                break;
            default: break;
        }
    }
}

NetworkSpec anfnet_spec() {
    NetworkSpec spec;
    auto conv = [](std::uint32_t in, std::uint32_t out, std::uint32_t k) {
        return LayerSpec{LayerKind::conv1d, in, out, k, 2, 0.0f};
    };
    auto fc = [](std::uint32_t in, std::uint32_t out) {
        return LayerSpec{LayerKind::fully_connected, in, out, 0, 1, 0.0f};
    };
    const LayerSpec relu{LayerKind::relu, 0, 0, 0, 1, 0.0f};
    const LayerSpec pool{LayerKind::maxpool, 0, 0, 2, 2, 0.0f};
    const LayerSpec gap{LayerKind::global_avg_pool, 0, 0, 0, 1, 0.0f};
    const LayerSpec drop{LayerKind::dropout, 0, 0, 0, 1, 0.25f};
    const LayerSpec sig{LayerKind::sigmoid, 0, 0, 0, 1, 0.0f};

    spec.layers = {
        conv(2, 10, 16), relu, pool,
        conv(10, 20, 8), relu, pool,
        conv(20, 40, 4), relu,
        gap,
        fc(40, 40), relu, drop,
        fc(40, 20), relu, drop,
        fc(20, 1), sig,
    };
    spec.validate();
    return spec;
}

Network Network::he_init(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    Network net;
    net.spec = spec;
    net.weights.resize(spec.layers.size());
    net.biases.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::size_t wn = l.weight_count();
        if (wn == 0) continue;
        const double fan_in = l.kind == LayerKind::conv1d
                                  ? static_cast<double>(l.in_ch) * l.kernel
                                  : static_cast<double>(l.in_ch);
        const double bound = std::sqrt(6.0 / fan_in);
        net.weights[i].resize(wn);
        for (auto& w : net.weights[i]) {
            w = static_cast<float>(rng.uniform(-bound, bound));
        }
        net.biases[i].assign(l.bias_count(), 0.0f);
    }
    return net;
}

std::vector<float> Network::flat_params() const {
    std::vector<float> flat;
    flat.reserve(param_count());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        flat.insert(flat.end(), weights[i].begin(), weights[i].end());
        flat.insert(flat.end(), biases[i].begin(), biases[i].end());
    }
    return flat;
}

void Network::set_flat_params(std::span<const float> flat) {
    if (flat.size() != param_count()) {
        throw ConfigError("network: flat parameter size mismatch");
    }
    std::size_t off = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off),
                    weights[i].size(), weights[i].begin());
        off += weights[i].size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off),
                    biases[i].size(), biases[i].begin());
        off += biases[i].size();
    }
}

// --- Forward -----------------------------------------------------------------

double forward(const Network& net, const Tensor1D& input, bool train_mode,
               Rng* rng, ForwardCache* cache) {
    const NetworkSpec& spec = net.spec;
    if (spec.layers.empty()) {
        throw ConfigError("network: empty layer list");
    }
    if (input.channels != spec.layers.front().in_ch) {
        shape_fail(0, spec.layers.front(),
                   "expected " + std::to_string(spec.layers.front().in_ch) +
                       " input channels, got " + std::to_string(input.channels));
    }
    if (input.data.size() !=
        static_cast<std::size_t>(input.channels) * input.length) {
        throw ShapeError("input tensor: data size does not match shape");
    }
    for (float v : input.data) {
        if (!std::isfinite(v)) {
            throw NumericalInputError("network: non-finite input value");
        }
    }

    ForwardCache local;
    ForwardCache& cc = cache ? *cache : local;
    // resize (not assign) so a reused cache keeps its buffer capacity
    cc.acts.resize(spec.layers.size() + 1);
    cc.pool_arg.resize(spec.layers.size());
    cc.drop_mask.resize(spec.layers.size());
    cc.valid = false;

    cc.acts[0].channels = input.channels;
    cc.acts[0].length = input.length;
    cc.acts[0].data.assign(input.data.begin(), input.data.end());

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const ForwardCache::Act& in = cc.acts[i];
        ForwardCache::Act& out = cc.acts[i + 1];
        switch (l.kind) {
            case LayerKind::conv1d: {
                if (in.length < l.kernel) {
                    shape_fail(i, l,
                               "input length " + std::to_string(in.length) +
                                   " shorter than kernel " + std::to_string(l.kernel));
                }
                const std::uint32_t T = conv_out_len(in.length, l.kernel, l.stride);
                out.channels = l.out_ch;
                out.length = T;
                out.data.resize(static_cast<std::size_t>(l.out_ch) * T);
                const float* W = net.weights[i].data();
                for (std::uint32_t f = 0; f < l.out_ch; ++f) {
                    double* o = out.data.data() + static_cast<std::size_t>(f) * T;
                    const double b = net.biases[i][f];
                    for (std::uint32_t t = 0; t < T; ++t) o[t] = b;
                    for (std::uint32_t c = 0; c < l.in_ch; ++c) {
                        const double* x = in.data.data() + static_cast<std::size_t>(c) * in.length;
                        const float* wrow = W + (static_cast<std::size_t>(f) * l.in_ch + c) * l.kernel;
                        for (std::uint32_t kk = 0; kk < l.kernel; ++kk) {
                            const double w = wrow[kk];
                            const double* xs = x + kk;
                            for (std::uint32_t t = 0; t < T; ++t) {
                                o[t] += w * xs[static_cast<std::size_t>(t) * l.stride];
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::relu: {
                out.channels = in.channels;
                out.length = in.length;
                out.data.resize(in.data.size());
                for (std::size_t j = 0; j < in.data.size(); ++j) {
                    out.data[j] = in.data[j] > 0.0 ? in.data[j] : 0.0;
                }
                break;
            }
            case LayerKind::maxpool: {
                const std::uint32_t T = in.length / 2;
                if (T == 0) {
                    shape_fail(i, l,
                               "input length " + std::to_string(in.length) +
                                   " too short for window 2");
                }
                out.channels = in.channels;
                out.length = T;
                out.data.resize(static_cast<std::size_t>(in.channels) * T);
                cc.pool_arg[i].resize(out.data.size());
                for (std::uint32_t c = 0; c < in.channels; ++c) {
                    const double* x = in.data.data() + static_cast<std::size_t>(c) * in.length;
                    double* o = out.data.data() + static_cast<std::size_t>(c) * T;
                    std::uint32_t* arg = cc.pool_arg[i].data() + static_cast<std::size_t>(c) * T;
                    for (std::uint32_t t = 0; t < T; ++t) {
                        const std::uint32_t j = 2 * t;
                        if (x[j] >= x[j + 1]) {
                            o[t] = x[j];
                            arg[t] = c * in.length + j;
                        } else {
                            o[t] = x[j + 1];
                            arg[t] = c * in.length + j + 1;
                        }
                    }
                }
                break;
            }
            case LayerKind::global_avg_pool: {
                if (in.length == 0) {
                    shape_fail(i, l, "empty time axis");
                }
                out.channels = in.channels;
                out.length = 1;
                out.data.resize(in.channels);
                for (std::uint32_t c = 0; c < in.channels; ++c) {
                    const double* x = in.data.data() + static_cast<std::size_t>(c) * in.length;
                    double acc = 0.0;
                    for (std::uint32_t t = 0; t < in.length; ++t) acc += x[t];
                    out.data[c] = acc / in.length;
                }
                break;
            }
            case LayerKind::fully_connected: {
                const std::size_t flat = static_cast<std::size_t>(in.channels) * in.length;
                if (flat != l.in_ch) {
                    shape_fail(i, l,
                               "expected " + std::to_string(l.in_ch) +
                                   " inputs, got " + std::to_string(flat));
                }
                out.channels = l.out_ch;
                out.length = 1;
                out.data.resize(l.out_ch);
                const float* W = net.weights[i].data();
                for (std::uint32_t o = 0; o < l.out_ch; ++o) {
                    double acc = net.biases[i][o];
                    const float* wrow = W + static_cast<std::size_t>(o) * l.in_ch;
                    for (std::uint32_t j = 0; j < l.in_ch; ++j) {
                        acc += static_cast<double>(wrow[j]) * in.data[j];
                    }
                    out.data[o] = acc;
                }
                break;
            }
            case LayerKind::dropout: {
                out.channels = in.channels;
                out.length = in.length;
                out.data.resize(in.data.size());
                if (train_mode && l.drop_p > 0.0f) {
                    if (!rng) {
                        throw UsageError("network: dropout in train mode needs an rng");
                    }
                    cc.drop_mask[i].resize(in.data.size());
                    const double keep_scale = 1.0 / (1.0 - l.drop_p);
                    for (std::size_t j = 0; j < in.data.size(); ++j) {
                        const bool keep = rng->uniform01() >= l.drop_p;
                        cc.drop_mask[i][j] = keep ? 1 : 0;
                        out.data[j] = keep ? in.data[j] * keep_scale : 0.0;
                    }
                } else {
                    cc.drop_mask[i].clear();
                    out.data = in.data;
                }
                break;
            }
            case LayerKind::sigmoid: {
                if (in.channels != 1 || in.length != 1) {
                    shape_fail(i, l, "expected a scalar input");
                }
                out.channels = 1;
                out.length = 1;
                const double z = in.data[0];
                double p = 1.0 / (1.0 + std::exp(-z));
                p = std::clamp(p, 1e-300, 1.0 - 1e-16);
                out.data = {p};
                break;
            }
        }
    }

    const ForwardCache::Act& last = cc.acts.back();
    if (last.channels != 1 || last.length != 1) {
        throw ShapeError("network: output is not a scalar");
    }
    cc.prob = last.data[0];
    cc.valid = true;
    return cc.prob;
}

// --- Backward ----------------------------------------------------------------

Gradients Gradients::zeros_like(const Network& net) {
    Gradients g;
    g.weights.resize(net.weights.size());
    g.biases.resize(net.biases.size());
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        g.weights[i].assign(net.weights[i].size(), 0.0);
        g.biases[i].assign(net.biases[i].size(), 0.0);
    }
    return g;
}

void Gradients::accumulate(const Gradients& other) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
        for (std::size_t j = 0; j < weights[i].size(); ++j) weights[i][j] += other.weights[i][j];
        for (std::size_t j = 0; j < biases[i].size(); ++j) biases[i][j] += other.biases[i][j];
    }
}

void Gradients::scale(double factor) {
    for (auto& w : weights)
        for (auto& v : w) v *= factor;
    for (auto& b : biases)
        for (auto& v : b) v *= factor;
}

double bce_loss(double prob, double target) {
    const double p = std::clamp(prob, 1e-12, 1.0 - 1e-12);
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

Gradients backward(const Network& net, const ForwardCache& cache, double target) {
    if (!cache.valid) {
        throw UsageError("backward: no recorded forward pass");
    }
    const NetworkSpec& spec = net.spec;
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::sigmoid) {
        throw UsageError("backward: BCE gradient requires a sigmoid output layer");
    }
    if (target != 0.0 && target != 1.0) {
        throw NumericalInputError("backward: target must be 0 or 1");
    }

    Gradients grads = Gradients::zeros_like(net);

    // delta = dL/d(activation input of the current layer), walked backwards.
    // The sigmoid + BCE pair is fused: dL/dz = prob - target.
    std::vector<double> delta = {cache.prob - target};
    std::vector<double> next_delta;

    for (std::size_t ii = spec.layers.size(); ii-- > 0;) {
        const LayerSpec& l = spec.layers[ii];
        const ForwardCache::Act& in = cache.acts[ii];
        const bool need_input_grad = ii > 0;
        switch (l.kind) {
            case LayerKind::sigmoid:
                // Handled by the fused initialization above.
                break;
            case LayerKind::fully_connected: {
                const float* W = net.weights[ii].data();
                auto& gw = grads.weights[ii];
                auto& gb = grads.biases[ii];
                for (std::uint32_t o = 0; o < l.out_ch; ++o) {
                    const double d = delta[o];
                    gb[o] += d;
                    double* gwrow = gw.data() + static_cast<std::size_t>(o) * l.in_ch;
                    for (std::uint32_t j = 0; j < l.in_ch; ++j) {
                        gwrow[j] += d * in.data[j];
                    }
                }
                if (need_input_grad) {
                    next_delta.assign(l.in_ch, 0.0);
                    for (std::uint32_t o = 0; o < l.out_ch; ++o) {
                        const double d = delta[o];
                        const float* wrow = W + static_cast<std::size_t>(o) * l.in_ch;
                        for (std::uint32_t j = 0; j < l.in_ch; ++j) {
                            next_delta[j] += d * wrow[j];
                        }
                    }
                    delta.swap(next_delta);
                }
                break;
            }
            case LayerKind::dropout: {
                if (!cache.drop_mask[ii].empty()) {
                    const double keep_scale = 1.0 / (1.0 - l.drop_p);
                    for (std::size_t j = 0; j < delta.size(); ++j) {
                        delta[j] = cache.drop_mask[ii][j] ? delta[j] * keep_scale : 0.0;
                    }
                }
                break;
            }
            case LayerKind::relu: {
                for (std::size_t j = 0; j < delta.size(); ++j) {
                    if (!(in.data[j] > 0.0)) delta[j] = 0.0;
                }
                break;
            }
            case LayerKind::global_avg_pool: {
                next_delta.assign(in.data.size(), 0.0);
                const double inv = 1.0 / in.length;
                for (std::uint32_t c = 0; c < in.channels; ++c) {
                    const double d = delta[c] * inv;
                    double* nd = next_delta.data() + static_cast<std::size_t>(c) * in.length;
                    for (std::uint32_t t = 0; t < in.length; ++t) nd[t] = d;
                }
                delta.swap(next_delta);
                break;
            }
            case LayerKind::maxpool: {
                next_delta.assign(in.data.size(), 0.0);
                const auto& arg = cache.pool_arg[ii];
                for (std::size_t j = 0; j < delta.size(); ++j) {
                    next_delta[arg[j]] += delta[j];
                }
                delta.swap(next_delta);
                break;
            }
            case LayerKind::conv1d: {
                const std::uint32_t T = conv_out_len(in.length, l.kernel, l.stride);
                const float* W = net.weights[ii].data();
                auto& gw = grads.weights[ii];
                auto& gb = grads.biases[ii];
                for (std::uint32_t f = 0; f < l.out_ch; ++f) {
                    const double* d = delta.data() + static_cast<std::size_t>(f) * T;
                    double acc = 0.0;
                    for (std::uint32_t t = 0; t < T; ++t) acc += d[t];
                    gb[f] += acc;
                    for (std::uint32_t c = 0; c < l.in_ch; ++c) {
                        const double* x = in.data.data() + static_cast<std::size_t>(c) * in.length;
                        double* gwrow = gw.data() + (static_cast<std::size_t>(f) * l.in_ch + c) * l.kernel;
                        for (std::uint32_t kk = 0; kk < l.kernel; ++kk) {
                            const double* xs = x + kk;
                            double s = 0.0;
                            for (std::uint32_t t = 0; t < T; ++t) {
                                s += d[t] * xs[static_cast<std::size_t>(t) * l.stride];
                            }
                            gwrow[kk] += s;
                        }
                    }
                }
                if (need_input_grad) {
                    next_delta.assign(in.data.size(), 0.0);
                    for (std::uint32_t f = 0; f < l.out_ch; ++f) {
                        const double* d = delta.data() + static_cast<std::size_t>(f) * T;
                        for (std::uint32_t c = 0; c < l.in_ch; ++c) {
                            double* nd = next_delta.data() + static_cast<std::size_t>(c) * in.length;
                            const float* wrow = W + (static_cast<std::size_t>(f) * l.in_ch + c) * l.kernel;
                            for (std::uint32_t kk = 0; kk < l.kernel; ++kk) {
                                const double w = wrow[kk];
                                double* nds = nd + kk;
                                for (std::uint32_t t = 0; t < T; ++t) {
                                    nds[static_cast<std::size_t>(t) * l.stride] += d[t] * w;
                                }
                            }
                        }
                    }
                    delta.swap(next_delta);
                }
                break;
            }
        }
    }
    return grads;
}

// --- Adam ----------------------------------------------------------------------

AdamState AdamState::zeros_like(const Network& net) {
    AdamState s;
    s.m.resize(net.weights.size());
    s.v.resize(net.weights.size());
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        s.m[i].assign(net.weights[i].size() + net.biases[i].size(), 0.0);
        s.v[i].assign(net.weights[i].size() + net.biases[i].size(), 0.0);
    }
    return s;
}

void adam_update(Network& net, AdamState& state, const Gradients& grad,
                 const AdamConfig& config) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);

    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        const std::size_t wn = net.weights[i].size();
        auto update_one = [&](float& param, double g, std::size_t slot) {
            double& m = state.m[i][slot];
            double& v = state.v[i][slot];
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            param = static_cast<float>(
                static_cast<double>(param) -
                config.lr * m_hat / (std::sqrt(v_hat) + config.eps));
        };
        for (std::size_t j = 0; j < wn; ++j) {
            update_one(net.weights[i][j], grad.weights[i][j], j);
        }
        for (std::size_t j = 0; j < net.biases[i].size(); ++j) {
            update_one(net.biases[i][j], grad.biases[i][j], wn + j);
        }
    }
}

// --- Checkpoint -------------------------------------------------------------

Network Checkpoint::to_network() const {
    Network net;
    net.spec = spec;
    net.weights.resize(spec.layers.size());
    net.biases.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        net.weights[i].resize(spec.layers[i].weight_count());
        net.biases[i].resize(spec.layers[i].bias_count());
    }
    net.set_flat_params(params);
    return net;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    wire::put_bytes(out, kMagic, 4);
    wire::put_u16(out, ckpt.version);
    wire::put_u32(out, static_cast<std::uint32_t>(ckpt.spec.layers.size()));
    for (const LayerSpec& l : ckpt.spec.layers) {
        out.push_back(static_cast<std::uint8_t>(l.kind));
        wire::put_u32(out, l.in_ch);
        wire::put_u32(out, l.out_ch);
        wire::put_u32(out, l.kernel);
        wire::put_u32(out, l.stride);
        wire::put_f32(out, l.drop_p);
    }
    wire::put_u64(out, ckpt.params.size());
    for (float p : ckpt.params) wire::put_f32(out, p);
    wire::put_u64(out, ckpt.adam_m.size());
    for (double m : ckpt.adam_m) wire::put_f64(out, m);
    for (double v : ckpt.adam_v) wire::put_f64(out, v);
    wire::put_u64(out, ckpt.adam_step);
    wire::put_u64(out, ckpt.seed);
    wire::put_u32(out, static_cast<std::uint32_t>(ckpt.rng_state.size()));
    wire::put_bytes(out, ckpt.rng_state.data(), ckpt.rng_state.size());
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    wire::Reader r(bytes);
    const std::string magic = r.str(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw FormatError("not a checkpoint file (bad magic)", 0);
    }
    Checkpoint ckpt;
    ckpt.version = r.u16();
    if (ckpt.version != kCheckpointFormatVersion) {
        throw VersionError("checkpoint version " + std::to_string(ckpt.version) +
                           " unsupported (expected " +
                           std::to_string(kCheckpointFormatVersion) + ")");
    }
    const std::uint32_t n_layers = r.u32();
    ckpt.spec.layers.resize(n_layers);
    for (auto& l : ckpt.spec.layers) {
        const std::uint8_t kind = r.u8();
        if (kind > static_cast<std::uint8_t>(LayerKind::sigmoid)) {
            throw FormatError("unknown layer kind", r.offset() - 1);
        }
        l.kind = static_cast<LayerKind>(kind);
        l.in_ch = r.u32();
        l.out_ch = r.u32();
        l.kernel = r.u32();
        l.stride = r.u32();
        l.drop_p = r.f32();
    }
    ckpt.spec.validate();
    const std::uint64_t n_params = r.u64();
    if (n_params != ckpt.spec.param_count()) {
        throw FormatError("parameter count does not match the layer list",
                          r.offset() - 8);
    }
    ckpt.params.resize(n_params);
    for (auto& p : ckpt.params) p = r.f32();
    const std::uint64_t n_adam = r.u64();
    if (n_adam != n_params) {
        throw FormatError("adam state size does not match the parameter count",
                          r.offset() - 8);
    }
    ckpt.adam_m.resize(n_adam);
    for (auto& m : ckpt.adam_m) m = r.f64();
    ckpt.adam_v.resize(n_adam);
    for (auto& v : ckpt.adam_v) v = r.f64();
    ckpt.adam_step = r.u64();
    ckpt.seed = r.u64();
    const std::uint32_t rng_len = r.u32();
    ckpt.rng_state = r.str(rng_len);
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after checkpoint payload", r.offset());
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

// --- Training ----------------------------------------------------------------

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("train: epochs must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (batch_size < 0) throw ConfigError("train: batch size must be >= 0");
    if (threads < 0) throw ConfigError("train: threads must be >= 0");
}

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
}

// Runs fn(j, worker) for j in [0, n) over `threads` workers, one contiguous
// chunk per worker. Caller owns any ordered reduction.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers =
        std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t j = 0; j < n; ++j) fn(j, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t lo = n * w / workers;
            const std::size_t hi = n * (w + 1) / workers;
            try {
                for (std::size_t j = lo; j < hi; ++j) fn(j, w);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<double> flatten_adam(const std::vector<std::vector<double>>& per_layer) {
    std::vector<double> flat;
    for (const auto& v : per_layer) flat.insert(flat.end(), v.begin(), v.end());
    return flat;
}

}  // namespace

TrainResult train(const NetworkSpec& spec, std::span<const FeatureClip> train_set,
                  std::span<const FeatureClip> val_set, const TrainConfig& config) {
    config.validate();
    spec.validate();
    if (train_set.empty() || val_set.empty()) {
        throw ConfigError("train: empty train or validation set");
    }
    if (spec.layers.back().kind != LayerKind::sigmoid) {
        throw ConfigError("train: BCE training requires a sigmoid output");
    }

    const std::size_t clip_len = train_set.front().length();
    auto check_clip = [&](const FeatureClip& c) {
        if (c.length() != clip_len) {
            throw ConfigError("train: clips have mixed lengths (" +
                              std::to_string(c.length()) + " vs " +
                              std::to_string(clip_len) + ")");
        }
        if (c.label == Label::unlabeled) {
            throw ConfigError("train: unlabeled clip " + c.source_id);
        }
    };
    for (const auto& c : train_set) check_clip(c);
    for (const auto& c : val_set) check_clip(c);

    const std::size_t n = train_set.size();
    std::size_t batch = config.batch_size > 0
                            ? static_cast<std::size_t>(config.batch_size)
                            : std::min<std::size_t>(32, std::max<std::size_t>(2, n / 4));
    batch = std::min(batch, n);
    const int threads = resolve_threads(config.threads);

    std::vector<Tensor1D> train_x(n);
    std::vector<double> train_y(n);
    for (std::size_t i = 0; i < n; ++i) {
        train_x[i] = Tensor1D::from_clip(train_set[i]);
        train_y[i] = train_set[i].label == Label::siren ? 1.0 : 0.0;
    }
    std::vector<Tensor1D> val_x(val_set.size());
    std::vector<double> val_y(val_set.size());
    for (std::size_t i = 0; i < val_set.size(); ++i) {
        val_x[i] = Tensor1D::from_clip(val_set[i]);
        val_y[i] = val_set[i].label == Label::siren ? 1.0 : 0.0;
    }

    Rng rng(config.seed);
    Network net = Network::he_init(spec, rng);
    AdamState adam = AdamState::zeros_like(net);
    AdamConfig adam_config;
    adam_config.lr = config.learning_rate;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<ForwardCache> caches(static_cast<std::size_t>(threads));

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();

    std::vector<std::uint64_t> sample_seeds(batch);
    std::vector<double> sample_loss(batch);
    std::vector<Gradients> sample_grads(batch);
    std::vector<double> val_losses(val_x.size());

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            for (std::size_t j = 0; j < count; ++j) sample_seeds[j] = rng.next_u64();

            parallel_for(count, threads, [&](std::size_t j, std::size_t worker) {
                ForwardCache& cache = caches[worker];
                const std::size_t idx = order[start + j];
                Rng drop_rng(sample_seeds[j]);
                const double prob = forward(net, train_x[idx], true, &drop_rng, &cache);
                sample_loss[j] = bce_loss(prob, train_y[idx]);
                sample_grads[j] = backward(net, cache, train_y[idx]);
            });

            // Fixed-order reduction keeps results identical for any thread count.
            Gradients grad = std::move(sample_grads[0]);
            for (std::size_t j = 1; j < count; ++j) grad.accumulate(sample_grads[j]);
            grad.scale(1.0 / static_cast<double>(count));
            for (std::size_t j = 0; j < count; ++j) epoch_loss += sample_loss[j];

            adam_update(net, adam, grad, adam_config);
        }
        epoch_loss /= static_cast<double>(n);

        parallel_for(val_x.size(), threads, [&](std::size_t j, std::size_t worker) {
            const double prob = forward(net, val_x[j], false, nullptr, &caches[worker]);
            val_losses[j] = bce_loss(prob, val_y[j]);
        });
        double val_loss = 0.0;
        for (double v : val_losses) val_loss += v;
        val_loss /= static_cast<double>(val_x.size());

        result.history.push_back(EpochStats{epoch_loss, val_loss});

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            Checkpoint& ckpt = result.checkpoint;
            ckpt.version = kCheckpointFormatVersion;
            ckpt.spec = spec;
            ckpt.params = net.flat_params();
            ckpt.adam_m = flatten_adam(adam.m);
            ckpt.adam_v = flatten_adam(adam.v);
            ckpt.adam_step = adam.step;
            ckpt.seed = config.seed;
            ckpt.rng_state = rng.state();
        }
    }
    return result;
}

double predict(const Checkpoint& ckpt, const FeatureClip& clip) {
    const Network net = ckpt.to_network();
    const Tensor1D input = Tensor1D::from_clip(clip);
    return forward(net, input, false, nullptr, nullptr);
}

}  // namespace sirentrack
