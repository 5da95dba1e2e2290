#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lmd/subgraph.hpp"
#include "lmd/tensor.hpp"

namespace lmd {

struct EncoderConfig {
    int layers = 2;
    int walk_length = 32;
    int heads = 4;
    int hidden = 64;
    double dropout = 0.2;
    bool disable_local = false;
    bool disable_global = false;
    bool disable_pos = false;

    /// Throws ConfigError on K < 1, L < 1, heads not dividing hidden, a
    /// dropout rate outside [0, 1) or both branches disabled.
    void validate() const;
    int head_width() const noexcept { return hidden / heads; }
    bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// Width of one row of the dense edge table before position features:
/// edge code plus the log(1 + T) channel.
inline constexpr std::size_t kEdgeInputDim = kEdgeFeatureDim + 1;

struct ParamSpec {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;

    bool operator==(const ParamSpec&) const = default;
};

/// Parameter names and shapes in a fixed order.
///   local.<l>.theta_n, local.<l>.a (2*hidden x 1), local.<l>.theta_alpha
///   global.x_in.w/.b, global.e_in.w/.b
///   global.<h>.{q,k,v,theta_e,theta_b} (hidden x hidden/heads),
///   global.<h>.theta_beta (hidden/heads x 1), global.<h>.theta_g
///   global.out.w, head.theta_p (hidden x 2)
std::vector<ParamSpec> parameter_layout(const EncoderConfig& cfg, std::size_t node_dim);

template <typename T>
struct ModelParams {
    EncoderConfig cfg;
    std::size_t node_dim = 0;
    std::vector<ParamSpec> specs;
    std::vector<std::vector<T>> values;

    /// Xavier-uniform weights and zero biases from a seeded stream.
    static ModelParams init(const EncoderConfig& cfg, std::size_t node_dim, std::uint64_t seed);

    std::size_t index(const std::string& name) const;
    std::size_t scalar_count() const noexcept;

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out{cfg, node_dim, specs, {}};
        out.values.reserve(values.size());
        for (const auto& v : values) out.values.emplace_back(v.begin(), v.end());
        return out;
    }

    bool operator==(const ModelParams&) const = default;
};

/// Parameters wrapped as autodiff leaves for one forward pass.
template <typename T>
struct BoundParams {
    const ModelParams<T>* source = nullptr;
    std::vector<ad::Tensor<T>> tensors;

    const ad::Tensor<T>& operator[](const std::string& name) const { return tensors[source->index(name)]; }
};

/// Leaves that accumulate gradients when `trainable`, constants otherwise.
template <typename T>
BoundParams<T> bind(const ModelParams<T>& params, bool trainable);

/// Random-walk relative position encoding: out[(i * n + j) * K + s] is the
/// s-step transition probability from i to j over the symmetrized binary
/// adjacency, with isolated nodes stepping to themselves. s = 0 is identity.
std::vector<double> position_encoding(std::size_t n, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges,
                                      int K);
std::vector<double> compute_position_encoding(const TimeAwareSubgraph& g, int K);

/// Dense inputs of one subgraph.
template <typename T>
struct EncoderInputs {
    std::size_t n = 0;
    /// n x d_v raw node features.
    ad::Tensor<T> x;
    /// n x (d_v + K): node features with the return probabilities P_ii.
    ad::Tensor<T> x_hat;
    /// (n*n) x (d_e + 1 + K): edge code, log(1 + T), P_ij; zero code where no edge.
    ad::Tensor<T> e_hat;
    /// n x n undirected neighbourhood including self.
    std::vector<std::uint8_t> neighbor_mask;
};

/// Builds the inputs; `id_bits` is the width of the node id code of the
/// source graph. With `zero_positions` the P entries are zero.
template <typename T>
EncoderInputs<T> augment_features(const TimeAwareSubgraph& g, std::size_t id_bits, int K, bool zero_positions);

struct AttentionTrace {
    /// Per local layer, n x n row-major.
    std::vector<std::vector<double>> alpha;
    /// Per global head, n x n row-major.
    std::vector<std::vector<double>> beta;
};

struct ForwardOptions {
    bool training = false;
    std::uint64_t dropout_seed = 0;
    AttentionTrace* trace = nullptr;
};

template <typename T>
ad::Tensor<T> local_attention_layer(const ad::Tensor<T>& h, std::span<const std::uint8_t> mask,
                                    const BoundParams<T>& p, int layer, const ForwardOptions& opts, Rng* rng);

template <typename T>
ad::Tensor<T> global_attention_layer(const ad::Tensor<T>& x_hat, const ad::Tensor<T>& e_hat, const BoundParams<T>& p,
                                     const ForwardOptions& opts, Rng* rng);

template <typename T>
struct EncoderOutput {
    /// 1 x 2 pre-softmax scores and class probabilities (column 1 = malicious).
    ad::Tensor<T> logits;
    ad::Tensor<T> probabilities;
};

template <typename T>
EncoderOutput<T> encode_subgraph(const EncoderInputs<T>& in, const BoundParams<T>& p, const ForwardOptions& opts = {});

/// Cross-entropy of the encoder output against its class label, taken from
/// the logits so that confident predictions keep full precision.
template <typename T>
ad::Tensor<T> cross_entropy_loss(const EncoderOutput<T>& out, std::span<const int> labels) {
    return ad::softmax_cross_entropy(out.logits, labels);
}

nlohmann::json attention_trace_json(const AttentionTrace& trace, std::size_t n);

} // namespace lmd
