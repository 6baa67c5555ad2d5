#pragma once

#include "protokd/graph.hpp"
#include "protokd/tensor.hpp"

namespace protokd {
namespace losses {

// KL argument order for the distillation loss. AsPaper puts the student
// distribution first; Classic is the usual teacher-first convention.
enum class KlDirection { AsPaper, Classic };

struct LossWeights {
    double alpha = 10.0;
    double beta = 0.1;
    double temperature = 10.0;

    void validate() const {
        if (alpha < 0 || beta < 0)
            throw ConfigError("loss weights alpha and beta must be non-negative");
        if (temperature <= 0)
            throw ConfigError("temperature must be positive");
    }
};

constexpr double kDiceEps = 1e-5;

Tensor one_hot(const LabelMap& labels, int num_classes);

// Graph builders; each appends nodes computing a differentiable scalar.
NodeId cross_entropy_node(Graph& g, NodeId logits, const LabelMap& labels, int num_classes);
NodeId dice_loss_node(Graph& g, NodeId logits, const LabelMap& labels, int num_classes,
                      double eps = kDiceEps);
NodeId seg_loss_node(Graph& g, NodeId logits, const LabelMap& labels, int num_classes,
                     double eps = kDiceEps);
// Teacher logits enter as a constant: no gradient flows to them.
NodeId kd_loss_node(Graph& g, NodeId student_logits, const Tensor& teacher_logits,
                    double temperature, KlDirection dir = KlDirection::AsPaper,
                    bool t_squared = false);
NodeId total_loss_node(Graph& g, NodeId seg, NodeId kd, NodeId proto, const LossWeights& w);

// Eager evaluation wrappers.
double cross_entropy(const Tensor& logits, const LabelMap& labels);
double dice_loss(const Tensor& logits, const LabelMap& labels, double eps = kDiceEps);
double seg_loss(const Tensor& logits, const LabelMap& labels, double eps = kDiceEps);
double kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature,
               KlDirection dir = KlDirection::AsPaper, bool t_squared = false);
double total_loss(double seg, double kd, double proto, const LossWeights& w);

}  // namespace losses
}  // namespace protokd
