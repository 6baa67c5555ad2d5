#pragma once

#include <vector>

#include "protokd/graph.hpp"
#include "protokd/tensor.hpp"

namespace protokd {
namespace proto {

// Whether the distillation loss covers the full similarity map or only the
// entries whose pixel belongs to the prototype's class.
enum class VariationMode { IntraInter, IntraOnly };

constexpr double kCosEps = 1e-8;

// Per-class mean feature embeddings. Classes with no pixels in the sample
// have an all-zero row and valid[k] == false; they are excluded downstream.
struct PrototypeSet {
    Tensor prototypes;        // KxD
    std::vector<bool> valid;  // K

    int num_classes() const { return prototypes.shape[0]; }
    int dims() const { return prototypes.shape[1]; }
    int num_valid() const {
        int n = 0;
        for (bool v : valid) n += v ? 1 : 0;
        return n;
    }
};

PrototypeSet compute_prototypes(const Tensor& features, const LabelMap& labels, int num_classes);

// NxK cosine similarities between pixel features and prototypes; columns of
// invalid classes are zero.
Tensor i2fv_map(const Tensor& features, const PrototypeSet& protos, double eps = kCosEps);

double proto_kd_loss(const Tensor& map_s, const Tensor& map_t, const std::vector<bool>& valid);

double i2fv_pipeline(const Tensor& features_s, const Tensor& features_t, const LabelMap& labels,
                     int num_classes, double eps = kCosEps,
                     VariationMode mode = VariationMode::IntraInter);

// Graph builders. Student-side quantities are nodes so gradients flow through
// both the pixel features and the student prototypes; teacher-side inputs are
// plain tensors baked in as constants.
NodeId prototypes_node(Graph& g, NodeId features, const LabelMap& labels, int num_classes,
                       std::vector<bool>* valid_out = nullptr);
NodeId i2fv_node(Graph& g, NodeId features, NodeId protos, double eps = kCosEps);
NodeId proto_kd_loss_node(Graph& g, NodeId map_s, const Tensor& map_t,
                          const std::vector<bool>& valid);
NodeId i2fv_pipeline_node(Graph& g, NodeId features_s, const Tensor& features_t,
                          const LabelMap& labels, int num_classes, double eps = kCosEps,
                          VariationMode mode = VariationMode::IntraInter);

}  // namespace proto
}  // namespace protokd
