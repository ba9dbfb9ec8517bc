#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sirentrack/features.hpp"
#include "sirentrack/rng.hpp"

namespace sirentrack {

// Minimal trainable network engine covering exactly the layer set of the
// siren classifier: Conv1D / ReLU / MaxPool / GlobalAvgPool / FC / Dropout /
// Sigmoid with hand-derived gradients, binary cross-entropy and Adam.
// Parameters are stored in 32-bit floats; all arithmetic runs in 64-bit so
// analytic gradients can be checked against 64-bit finite differences.

struct Tensor1D {
    std::vector<float> data;  // channel-major, data[c * length + t]
    std::uint32_t channels = 0;
    std::uint32_t length = 0;

    static Tensor1D from_clip(const FeatureClip& clip);
    float& at(std::uint32_t c, std::uint32_t t) { return data[c * length + t]; }
    float at(std::uint32_t c, std::uint32_t t) const { return data[c * length + t]; }
};

enum class LayerKind : std::uint8_t {
    conv1d = 0,
    relu = 1,
    maxpool = 2,          // window 2, stride 2, trailing odd element dropped
    global_avg_pool = 3,
    fully_connected = 4,
    dropout = 5,
    sigmoid = 6,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    std::uint32_t in_ch = 0;
    std::uint32_t out_ch = 0;
    std::uint32_t kernel = 0;
    std::uint32_t stride = 1;
    float drop_p = 0.0f;

    std::size_t weight_count() const;
    std::size_t bias_count() const;
    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;

    std::size_t param_count() const;
    void validate() const;  // channel chaining and per-layer sanity
    bool operator==(const NetworkSpec&) const = default;
};

// The canonical classifier: Conv1D(16,s2,10) / MaxPool / Conv1D(8,s2,20) /
// MaxPool / Conv1D(4,s2,40) / GAP / FC(40) / FC(20) / FC(1)+sigmoid, ReLU on
// every hidden layer, dropout 0.25 after each hidden FC. 7671 parameters.
NetworkSpec anfnet_spec();

struct Network {
    NetworkSpec spec;
    std::vector<std::vector<float>> weights;  // empty for parameterless layers
    std::vector<std::vector<float>> biases;

    // He-uniform weights (bound sqrt(6/fan_in)), zero biases.
    static Network he_init(const NetworkSpec& spec, Rng& rng);

    std::size_t param_count() const { return spec.param_count(); }
    std::vector<float> flat_params() const;
    void set_flat_params(std::span<const float> flat);
};

// Activations recorded by a forward pass; required by backward.
struct ForwardCache {
    struct Act {
        std::vector<double> data;
        std::uint32_t channels = 0;
        std::uint32_t length = 0;
    };
    std::vector<Act> acts;                            // acts[i] = input of layer i
    std::vector<std::vector<std::uint32_t>> pool_arg; // maxpool argmax indices
    std::vector<std::vector<std::uint8_t>> drop_mask; // dropout keep masks
    double prob = 0.0;
    bool valid = false;
};

// Runs the network; returns the output probability in (0, 1). Dropout is
// active only in train mode (which then requires an rng). Shape mismatches
// raise ShapeError naming the offending layer.
double forward(const Network& net, const Tensor1D& input, bool train_mode,
               Rng* rng, ForwardCache* cache = nullptr);

struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static Gradients zeros_like(const Network& net);
    void accumulate(const Gradients& other);
    void scale(double factor);
};

// Gradient of BCE(prob, target) w.r.t. every parameter, from a recorded
// forward pass. Calling it with a cache that has not seen forward() is a
// UsageError.
Gradients backward(const Network& net, const ForwardCache& cache, double target);

double bce_loss(double prob, double target);

struct AdamConfig {
    double lr = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const Network& net);
};

void adam_update(Network& net, AdamState& state, const Gradients& grad,
                 const AdamConfig& config);

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

struct Checkpoint {
    std::uint16_t version = kCheckpointFormatVersion;
    NetworkSpec spec;
    std::vector<float> params;   // layer-ordered, weights then biases
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::uint64_t adam_step = 0;
    std::uint64_t seed = 0;
    std::string rng_state;

    Network to_network() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainConfig {
    int epochs = 400;
    double learning_rate = 0.003;
    int batch_size = 0;  // 0 -> min(32, max(2, n/4)), clamped to n
    std::uint64_t seed = 0;
    // Worker threads for within-batch sample parallelism. Gradients are
    // reduced in fixed sample order, so the result is identical for any
    // thread count. 0 picks up the hardware concurrency.
    int threads = 1;

    void validate() const;
};

struct EpochStats {
    double train_loss;
    double val_loss;
};

struct TrainResult {
    Checkpoint checkpoint;  // snapshot at the epoch with minimal val loss
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_loss = 0.0;
};

// Shuffled mini-batch training with per-epoch validation; returns the
// checkpoint of the best epoch by validation loss.
TrainResult train(const NetworkSpec& spec, std::span<const FeatureClip> train_set,
                  std::span<const FeatureClip> val_set, const TrainConfig& config);

// Deterministic inference (dropout disabled).
double predict(const Checkpoint& ckpt, const FeatureClip& clip);

// Strict-greater rule: a probability of exactly 0.5 classifies as noise.
inline bool classify_siren(double probability) { return probability > 0.5; }

}  // namespace sirentrack
