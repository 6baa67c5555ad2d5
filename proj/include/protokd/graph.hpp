#pragma once

#include <map>
#include <string>
#include <vector>

#include "protokd/tensor.hpp"

namespace protokd {

using NodeId = int;

enum class Op {
    Input,
    Constant,
    Add,
    Mul,
    Div,
    MatMul,      // 2D, optional transposed right operand
    Conv2d,      // CxHxW input, (Co,Ci,kh,kw) kernel, stride 1, zero pad kh/2
    LeakyRelu,
    SoftmaxRows, // softmax along the last axis of an NxK tensor
    Log,
    SumAll,
    SumAxis0,    // NxK -> K
    MeanAll,
    L2NormRows,  // NxD -> Nx1
    Broadcast,   // same rank, source dims 1 expand to target dims
    Reshape,
    Affine,      // a*x + b elementwise, compile-time constants
    ClampMin,
    ChwToNd,     // CxHxW -> (H*W)xC, pixels row-major
};

struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Shape shape;
    std::string name;

    Tensor value;       // Constant payload
    double attr_a = 0;  // Affine mul / LeakyRelu slope / ClampMin floor
    double attr_b = 0;  // Affine add
    bool trans_b = false;
    Shape target;       // Broadcast / Reshape target shape
};

// Static acyclic computation graph over tensor-valued nodes. Nodes are
// appended in topological order; the graph is immutable once built and
// forward/backward evaluation carries no hidden state, so a shared graph
// may be evaluated concurrently.
class Graph {
public:
    NodeId input(const std::string& name, Shape shape, bool designated = true);
    NodeId constant(Tensor value, const std::string& name = "");

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b) { return add(a, affine(b, -1.0, 0.0)); }
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b, bool trans_b = false);
    NodeId conv2d(NodeId image, NodeId kernel);
    NodeId leaky_relu(NodeId x, double slope = 0.01);
    NodeId softmax_rows(NodeId x);
    NodeId log(NodeId x);
    NodeId sum_all(NodeId x);
    NodeId sum_axis0(NodeId x);
    NodeId mean_all(NodeId x);
    NodeId l2norm_rows(NodeId x);
    NodeId broadcast(NodeId x, Shape target);
    NodeId reshape(NodeId x, Shape target);
    NodeId affine(NodeId x, double mul, double add);
    NodeId clamp_min(NodeId x, double floor);
    NodeId chw_to_nd(NodeId x);

    void set_output(NodeId id);
    NodeId output() const { return output_; }

    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    const Shape& shape_of(NodeId id) const { return node(id).shape; }
    const std::vector<NodeId>& designated_inputs() const { return designated_; }
    const std::string& input_name(NodeId id) const { return node(id).name; }

private:
    NodeId push(Node n);
    const Node& in(NodeId id, const char* ctx) const;

    std::vector<Node> nodes_;
    std::vector<NodeId> designated_;
    NodeId output_ = -1;
};

using Bindings = std::map<std::string, Tensor>;

// Forward pass: evaluates every node given input bindings. Pure; bindings
// are copied into the value table and never modified.
std::vector<Tensor> forward(const Graph& graph, const Bindings& bindings);

inline Tensor forward_value(const Graph& graph, const Bindings& bindings, NodeId id) {
    return forward(graph, bindings)[static_cast<size_t>(id)];
}

inline double forward_scalar(const Graph& graph, const Bindings& bindings) {
    return forward(graph, bindings)[static_cast<size_t>(graph.output())].scalar_value();
}

// Reverse pass from the designated scalar output. Returns one gradient per
// designated input, keyed by input name, each the same shape as its input.
std::map<std::string, Tensor> backward(const Graph& graph, const Bindings& bindings);

// Single-pass variant returning all node values alongside the gradients.
std::pair<std::vector<Tensor>, std::map<std::string, Tensor>> forward_backward(
    const Graph& graph, const Bindings& bindings);

struct GradCheckEntry {
    std::string input;
    double max_rel_err = 0.0;
    int checked = 0;
    int failed = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool pass = true;
    double max_rel_err = 0.0;
};

// Central-difference check of backward() against (f(x+h)-f(x-h))/2h per
// coordinate, relative error denominator max(1, |analytic|, |numeric|).
GradCheckReport grad_check(const Graph& graph, const Bindings& bindings, double step, double tol);

// Comparison core, exposed so tests can feed it corrupted gradients.
GradCheckEntry grad_check_compare(const std::string& input, const Tensor& analytic,
                                  const Tensor& numeric, double tol);

}  // namespace protokd
