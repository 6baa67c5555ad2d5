#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "protokd/graph.hpp"
#include "protokd/tensor.hpp"

namespace protokd {
namespace model {

struct SegNetConfig {
    int in_channels = 1;  // M for the teacher, 1 for the student
    int hidden = 8;       // feature embedding width D
    int classes = 3;      // K
    int conv_layers = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
        if (hidden < 2) throw ConfigError("model: hidden must be >= 2");
        if (classes < 2) throw ConfigError("model: classes must be >= 2");
        if (conv_layers < 1) throw ConfigError("model: conv_layers must be >= 1");
    }
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct SegNetParams {
    SegNetConfig config;
    std::vector<NamedTensor> layers;  // conv0.w, conv0.b, ..., head.w, head.b

    const Tensor& find(const std::string& name) const;
    Tensor& find(const std::string& name);
    bool same_values(const SegNetParams& other) const;
};

// He-style init: kernels ~ N(0, 2/fan_in), biases zero. Deterministic per seed.
SegNetParams init_params(const SegNetConfig& config);

struct ForwardNodes {
    NodeId features;  // NxD
    NodeId logits;    // NxK
};

// Parameters become designated graph inputs named after the layers; bind them
// with param_bindings(). Gradients are then available per parameter tensor.
ForwardNodes build_forward_trainable(Graph& g, const SegNetConfig& config, NodeId image);

// Parameters baked in as constants; used for the frozen teacher.
ForwardNodes build_forward_frozen(Graph& g, const SegNetParams& params, NodeId image);

Bindings param_bindings(const SegNetParams& params);

// Eager single-image forward passes.
Tensor backbone_forward(const SegNetParams& params, const Tensor& image);
Tensor head_forward(const SegNetParams& params, const Tensor& features);
std::pair<Tensor, Tensor> full_forward(const SegNetParams& params, const Tensor& image);

// JSON header line + raw little-endian float64 payload, layers in order.
void save_checkpoint(const std::string& path, const SegNetParams& params);
SegNetParams load_checkpoint(const std::string& path);

}  // namespace model
}  // namespace protokd
