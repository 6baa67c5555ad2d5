#include "protokd/graph.hpp"

#include <algorithm>
#include <cmath>

namespace protokd {

namespace {

std::string op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Constant: return "constant";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::MatMul: return "matmul";
        case Op::Conv2d: return "conv2d";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::SoftmaxRows: return "softmax";
        case Op::Log: return "log";
        case Op::SumAll: return "sum";
        case Op::SumAxis0: return "sum_axis0";
        case Op::MeanAll: return "mean";
        case Op::L2NormRows: return "l2norm_rows";
        case Op::Broadcast: return "broadcast";
        case Op::Reshape: return "reshape";
        case Op::Affine: return "affine";
        case Op::ClampMin: return "clamp_min";
        case Op::ChwToNd: return "chw_to_nd";
    }
    return "?";
}

}  // namespace

NodeId Graph::push(Node n) {
    if (n.name.empty())
        n.name = op_name(n.op) + "#" + std::to_string(nodes_.size());
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

const Node& Graph::in(NodeId id, const char* ctx) const {
    if (id < 0 || id >= num_nodes())
        throw ShapeError(std::string(ctx) + ": invalid node id " + std::to_string(id));
    return nodes_[static_cast<size_t>(id)];
}

NodeId Graph::input(const std::string& name, Shape shape, bool designated) {
    Node n;
    n.op = Op::Input;
    n.shape = std::move(shape);
    n.name = name;
    NodeId id = push(std::move(n));
    if (designated) designated_.push_back(id);
    return id;
}

NodeId Graph::constant(Tensor value, const std::string& name) {
    Node n;
    n.op = Op::Constant;
    n.shape = value.shape;
    n.value = std::move(value);
    n.name = name;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Node &na = in(a, "add"), &nb = in(b, "add");
    if (na.shape != nb.shape)
        throw ShapeError("add: shape mismatch " + shape_str(na.shape) + " vs " +
                         shape_str(nb.shape) + " (" + na.name + ", " + nb.name + ")");
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    n.shape = na.shape;
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Node &na = in(a, "mul"), &nb = in(b, "mul");
    if (na.shape != nb.shape)
        throw ShapeError("mul: shape mismatch " + shape_str(na.shape) + " vs " +
                         shape_str(nb.shape) + " (" + na.name + ", " + nb.name + ")");
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    n.shape = na.shape;
    return push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
    const Node &na = in(a, "div"), &nb = in(b, "div");
    if (na.shape != nb.shape)
        throw ShapeError("div: shape mismatch " + shape_str(na.shape) + " vs " +
                         shape_str(nb.shape) + " (" + na.name + ", " + nb.name + ")");
    Node n;
    n.op = Op::Div;
    n.inputs = {a, b};
    n.shape = na.shape;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool trans_b) {
    const Node &na = in(a, "matmul"), &nb = in(b, "matmul");
    if (na.shape.size() != 2 || nb.shape.size() != 2)
        throw ShapeError("matmul: operands must be rank 2, got " + shape_str(na.shape) +
                         " and " + shape_str(nb.shape));
    int inner_b = trans_b ? nb.shape[1] : nb.shape[0];
    int cols = trans_b ? nb.shape[0] : nb.shape[1];
    if (na.shape[1] != inner_b)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(na.shape) + " vs " +
                         shape_str(nb.shape) + (trans_b ? " (transposed)" : ""));
    Node n;
    n.op = Op::MatMul;
    n.inputs = {a, b};
    n.trans_b = trans_b;
    n.shape = {na.shape[0], cols};
    return push(std::move(n));
}

NodeId Graph::conv2d(NodeId image, NodeId kernel) {
    const Node &ni = in(image, "conv2d"), &nk = in(kernel, "conv2d");
    if (ni.shape.size() != 3 || nk.shape.size() != 4)
        throw ShapeError("conv2d: expected CxHxW image and CoxCixKhxKw kernel, got " +
                         shape_str(ni.shape) + " and " + shape_str(nk.shape));
    if (ni.shape[0] != nk.shape[1])
        throw ShapeError("conv2d: image channels " + std::to_string(ni.shape[0]) +
                         " != kernel input channels " + std::to_string(nk.shape[1]) + " (" +
                         ni.name + ", " + nk.name + ")");
    Node n;
    n.op = Op::Conv2d;
    n.inputs = {image, kernel};
    n.shape = {nk.shape[0], ni.shape[1], ni.shape[2]};
    return push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId x, double slope) {
    Node n;
    n.op = Op::LeakyRelu;
    n.inputs = {x};
    n.shape = in(x, "leaky_relu").shape;
    n.attr_a = slope;
    return push(std::move(n));
}

NodeId Graph::softmax_rows(NodeId x) {
    const Node& nx = in(x, "softmax");
    if (nx.shape.size() != 2)
        throw ShapeError("softmax: expected rank-2 input, got " + shape_str(nx.shape));
    Node n;
    n.op = Op::SoftmaxRows;
    n.inputs = {x};
    n.shape = nx.shape;
    return push(std::move(n));
}

NodeId Graph::log(NodeId x) {
    Node n;
    n.op = Op::Log;
    n.inputs = {x};
    n.shape = in(x, "log").shape;
    return push(std::move(n));
}

NodeId Graph::sum_all(NodeId x) {
    Node n;
    n.op = Op::SumAll;
    n.inputs = {x};
    n.shape = {1};
    (void)in(x, "sum");
    return push(std::move(n));
}

NodeId Graph::sum_axis0(NodeId x) {
    const Node& nx = in(x, "sum_axis0");
    if (nx.shape.size() != 2)
        throw ShapeError("sum_axis0: expected rank-2 input, got " + shape_str(nx.shape));
    Node n;
    n.op = Op::SumAxis0;
    n.inputs = {x};
    n.shape = {nx.shape[1]};
    return push(std::move(n));
}

NodeId Graph::mean_all(NodeId x) {
    Node n;
    n.op = Op::MeanAll;
    n.inputs = {x};
    n.shape = {1};
    (void)in(x, "mean");
    return push(std::move(n));
}

NodeId Graph::l2norm_rows(NodeId x) {
    const Node& nx = in(x, "l2norm_rows");
    if (nx.shape.size() != 2)
        throw ShapeError("l2norm_rows: expected rank-2 input, got " + shape_str(nx.shape));
    Node n;
    n.op = Op::L2NormRows;
    n.inputs = {x};
    n.shape = {nx.shape[0], 1};
    return push(std::move(n));
}

NodeId Graph::broadcast(NodeId x, Shape target) {
    const Node& nx = in(x, "broadcast");
    if (nx.shape.size() != target.size())
        throw ShapeError("broadcast: rank mismatch " + shape_str(nx.shape) + " -> " +
                         shape_str(target) + "; reshape first");
    for (size_t i = 0; i < target.size(); ++i)
        if (nx.shape[i] != target[i] && nx.shape[i] != 1)
            throw ShapeError("broadcast: cannot expand " + shape_str(nx.shape) + " to " +
                             shape_str(target));
    Node n;
    n.op = Op::Broadcast;
    n.inputs = {x};
    n.shape = target;
    n.target = std::move(target);
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Shape target) {
    const Node& nx = in(x, "reshape");
    if (shape_numel(nx.shape) != shape_numel(target))
        throw ShapeError("reshape: element count mismatch " + shape_str(nx.shape) + " -> " +
                         shape_str(target));
    Node n;
    n.op = Op::Reshape;
    n.inputs = {x};
    n.shape = target;
    n.target = std::move(target);
    return push(std::move(n));
}

NodeId Graph::affine(NodeId x, double mul, double add) {
    Node n;
    n.op = Op::Affine;
    n.inputs = {x};
    n.shape = in(x, "affine").shape;
    n.attr_a = mul;
    n.attr_b = add;
    return push(std::move(n));
}

NodeId Graph::clamp_min(NodeId x, double floor) {
    Node n;
    n.op = Op::ClampMin;
    n.inputs = {x};
    n.shape = in(x, "clamp_min").shape;
    n.attr_a = floor;
    return push(std::move(n));
}

NodeId Graph::chw_to_nd(NodeId x) {
    const Node& nx = in(x, "chw_to_nd");
    if (nx.shape.size() != 3)
        throw ShapeError("chw_to_nd: expected rank-3 input, got " + shape_str(nx.shape));
    Node n;
    n.op = Op::ChwToNd;
    n.inputs = {x};
    n.shape = {nx.shape[1] * nx.shape[2], nx.shape[0]};
    return push(std::move(n));
}

void Graph::set_output(NodeId id) {
    const Node& n = in(id, "set_output");
    if (shape_numel(n.shape) != 1)
        throw ShapeError("set_output: node " + n.name + " has shape " + shape_str(n.shape) +
                         ", backward requires a scalar output");
    output_ = id;
}

// ---------------------------------------------------------------------------
// forward kernels

namespace {

// One pass per kernel tap; the inner loops run over contiguous row segments
// so they vectorize. For tap (dy,dx), out[y][x] draws from img[y+dy-ph][x+dx-pw].
void conv2d_forward(const Tensor& img, const Tensor& ker, Tensor& out) {
    int ci = img.shape[0], h = img.shape[1], w = img.shape[2];
    int co = ker.shape[0], kh = ker.shape[2], kw = ker.shape[3];
    int ph = kh / 2, pw = kw / 2;
    std::fill(out.data.begin(), out.data.end(), 0.0);
    for (int o = 0; o < co; ++o) {
        double* op = &out.data[static_cast<size_t>(o) * h * w];
        for (int c = 0; c < ci; ++c) {
            const double* ip = &img.data[static_cast<size_t>(c) * h * w];
            const double* kp = &ker.data[(static_cast<size_t>(o) * ci + c) * kh * kw];
            for (int dy = 0; dy < kh; ++dy) {
                int y0 = std::max(0, ph - dy), y1 = std::min(h, h + ph - dy);
                for (int dx = 0; dx < kw; ++dx) {
                    double kv = kp[dy * kw + dx];
                    if (kv == 0.0) continue;
                    int x0 = std::max(0, pw - dx), x1 = std::min(w, w + pw - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* orow = op + y * w;
                        const double* irow = ip + (y + dy - ph) * w + (dx - pw);
                        for (int x = x0; x < x1; ++x) orow[x] += kv * irow[x];
                    }
                }
            }
        }
    }
}

void conv2d_backward(const Tensor& img, const Tensor& ker, const Tensor& gout, Tensor& gimg,
                     Tensor& gker) {
    int ci = img.shape[0], h = img.shape[1], w = img.shape[2];
    int co = ker.shape[0], kh = ker.shape[2], kw = ker.shape[3];
    int ph = kh / 2, pw = kw / 2;
    for (int o = 0; o < co; ++o) {
        const double* gp = &gout.data[static_cast<size_t>(o) * h * w];
        for (int c = 0; c < ci; ++c) {
            const double* ip = &img.data[static_cast<size_t>(c) * h * w];
            double* gip = &gimg.data[static_cast<size_t>(c) * h * w];
            const double* kp = &ker.data[(static_cast<size_t>(o) * ci + c) * kh * kw];
            double* gkp = &gker.data[(static_cast<size_t>(o) * ci + c) * kh * kw];
            for (int dy = 0; dy < kh; ++dy) {
                int y0 = std::max(0, ph - dy), y1 = std::min(h, h + ph - dy);
                for (int dx = 0; dx < kw; ++dx) {
                    double kv = kp[dy * kw + dx];
                    int x0 = std::max(0, pw - dx), x1 = std::min(w, w + pw - dx);
                    double kacc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = gp + y * w;
                        const double* irow = ip + (y + dy - ph) * w + (dx - pw);
                        double* girow = gip + (y + dy - ph) * w + (dx - pw);
                        for (int x = x0; x < x1; ++x) {
                            double g = grow[x];
                            girow[x] += g * kv;
                            kacc += g * irow[x];
                        }
                    }
                    gkp[dy * kw + dx] += kacc;
                }
            }
        }
    }
}

void matmul_forward(const Tensor& a, const Tensor& b, bool trans_b, Tensor& out) {
    int m = a.shape[0], k = a.shape[1], n = out.shape[1];
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            if (trans_b) {
                for (int l = 0; l < k; ++l) acc += a.at(i, l) * b.at(j, l);
            } else {
                for (int l = 0; l < k; ++l) acc += a.at(i, l) * b.at(l, j);
            }
            out.at(i, j) = acc;
        }
    }
}

}  // namespace

std::vector<Tensor> forward(const Graph& graph, const Bindings& bindings) {
    std::vector<Tensor> vals(static_cast<size_t>(graph.num_nodes()));
    for (NodeId id = 0; id < graph.num_nodes(); ++id) {
        const Node& n = graph.node(id);
        Tensor& out = vals[static_cast<size_t>(id)];
        switch (n.op) {
            case Op::Input: {
                auto it = bindings.find(n.name);
                if (it == bindings.end())
                    throw UnboundInputError("input '" + n.name + "' is not bound");
                if (it->second.shape != n.shape)
                    throw ShapeError("input '" + n.name + "' bound with shape " +
                                     shape_str(it->second.shape) + ", declared " +
                                     shape_str(n.shape));
                out = it->second;
                break;
            }
            case Op::Constant:
                out = n.value;
                break;
            case Op::Add: {
                const Tensor &a = vals[n.inputs[0]], &b = vals[n.inputs[1]];
                out = a;
                for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
                break;
            }
            case Op::Mul: {
                const Tensor &a = vals[n.inputs[0]], &b = vals[n.inputs[1]];
                out = a;
                for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
                break;
            }
            case Op::Div: {
                const Tensor &a = vals[n.inputs[0]], &b = vals[n.inputs[1]];
                out = a;
                for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.data[i];
                break;
            }
            case Op::MatMul: {
                out = Tensor::zeros(n.shape);
                matmul_forward(vals[n.inputs[0]], vals[n.inputs[1]], n.trans_b, out);
                break;
            }
            case Op::Conv2d: {
                out = Tensor::zeros(n.shape);
                conv2d_forward(vals[n.inputs[0]], vals[n.inputs[1]], out);
                break;
            }
            case Op::LeakyRelu: {
                const Tensor& a = vals[n.inputs[0]];
                out = a;
                for (double& v : out.data)
                    if (v < 0.0) v *= n.attr_a;
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor& a = vals[n.inputs[0]];
                out = a;
                int rows = a.shape[0], cols = a.shape[1];
                for (int i = 0; i < rows; ++i) {
                    double* row = &out.data[static_cast<size_t>(i) * cols];
                    double mx = row[0];
                    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
                    double z = 0.0;
                    for (int j = 0; j < cols; ++j) {
                        row[j] = std::exp(row[j] - mx);
                        z += row[j];
                    }
                    for (int j = 0; j < cols; ++j) row[j] /= z;
                }
                break;
            }
            case Op::Log: {
                out = vals[n.inputs[0]];
                for (double& v : out.data) v = std::log(v);
                break;
            }
            case Op::SumAll: {
                const Tensor& a = vals[n.inputs[0]];
                double s = 0.0;
                for (double v : a.data) s += v;
                out = Tensor::scalar(s);
                break;
            }
            case Op::SumAxis0: {
                const Tensor& a = vals[n.inputs[0]];
                int rows = a.shape[0], cols = a.shape[1];
                out = Tensor::zeros({cols});
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) out.data[j] += a.at(i, j);
                break;
            }
            case Op::MeanAll: {
                const Tensor& a = vals[n.inputs[0]];
                double s = 0.0;
                for (double v : a.data) s += v;
                out = Tensor::scalar(s / static_cast<double>(a.size()));
                break;
            }
            case Op::L2NormRows: {
                const Tensor& a = vals[n.inputs[0]];
                int rows = a.shape[0], cols = a.shape[1];
                out = Tensor::zeros({rows, 1});
                for (int i = 0; i < rows; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < cols; ++j) s += a.at(i, j) * a.at(i, j);
                    out.data[static_cast<size_t>(i)] = std::sqrt(s);
                }
                break;
            }
            case Op::Broadcast: {
                const Tensor& a = vals[n.inputs[0]];
                out = Tensor::zeros(n.shape);
                int rank = static_cast<int>(n.shape.size());
                std::vector<int> idx(static_cast<size_t>(rank), 0);
                for (long long o = 0; o < out.size(); ++o) {
                    long long src = 0;
                    for (int d = 0; d < rank; ++d) {
                        int si = a.shape[d] == 1 ? 0 : idx[d];
                        src = src * a.shape[d] + si;
                    }
                    out.data[static_cast<size_t>(o)] = a.data[static_cast<size_t>(src)];
                    for (int d = rank - 1; d >= 0; --d) {
                        if (++idx[d] < n.shape[d]) break;
                        idx[d] = 0;
                    }
                }
                break;
            }
            case Op::Reshape: {
                out = vals[n.inputs[0]];
                out.shape = n.shape;
                break;
            }
            case Op::Affine: {
                out = vals[n.inputs[0]];
                for (double& v : out.data) v = n.attr_a * v + n.attr_b;
                break;
            }
            case Op::ClampMin: {
                out = vals[n.inputs[0]];
                for (double& v : out.data) v = std::max(v, n.attr_a);
                break;
            }
            case Op::ChwToNd: {
                const Tensor& a = vals[n.inputs[0]];
                int c = a.shape[0], hw = a.shape[1] * a.shape[2];
                out = Tensor::zeros({hw, c});
                for (int ch = 0; ch < c; ++ch)
                    for (int p = 0; p < hw; ++p)
                        out.data[static_cast<size_t>(p) * c + ch] =
                            a.data[static_cast<size_t>(ch) * hw + p];
                break;
            }
        }
    }
    return vals;
}

std::map<std::string, Tensor> backward(const Graph& graph, const Bindings& bindings) {
    return forward_backward(graph, bindings).second;
}

std::pair<std::vector<Tensor>, std::map<std::string, Tensor>> forward_backward(
    const Graph& graph, const Bindings& bindings) {
    if (graph.output() < 0)
        throw ShapeError("backward: no scalar output designated");
    std::vector<Tensor> vals = forward(graph, bindings);
    std::vector<Tensor> grads(vals.size());
    for (size_t i = 0; i < grads.size(); ++i) grads[i] = Tensor::zeros(graph.node(static_cast<NodeId>(i)).shape);
    grads[static_cast<size_t>(graph.output())].data[0] = 1.0;

    for (NodeId id = graph.num_nodes() - 1; id >= 0; --id) {
        const Node& n = graph.node(id);
        const Tensor& g = grads[static_cast<size_t>(id)];
        bool all_zero = true;
        for (double v : g.data)
            if (v != 0.0) { all_zero = false; break; }
        if (all_zero) continue;

        switch (n.op) {
            case Op::Input:
            case Op::Constant:
                break;
            case Op::Add: {
                for (int k = 0; k < 2; ++k) {
                    Tensor& gi = grads[n.inputs[k]];
                    for (size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i];
                }
                break;
            }
            case Op::Mul: {
                const Tensor &a = vals[n.inputs[0]], &b = vals[n.inputs[1]];
                Tensor &ga = grads[n.inputs[0]], &gb = grads[n.inputs[1]];
                for (size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] * b.data[i];
                    gb.data[i] += g.data[i] * a.data[i];
                }
                break;
            }
            case Op::Div: {
                const Tensor &a = vals[n.inputs[0]], &b = vals[n.inputs[1]];
                Tensor &ga = grads[n.inputs[0]], &gb = grads[n.inputs[1]];
                for (size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] / b.data[i];
                    gb.data[i] -= g.data[i] * a.data[i] / (b.data[i] * b.data[i]);
                }
                break;
            }
            case Op::MatMul: {
                const Tensor &a = vals[n.inputs[0]], &b = vals[n.inputs[1]];
                Tensor &ga = grads[n.inputs[0]], &gb = grads[n.inputs[1]];
                int m = a.shape[0], k = a.shape[1], cols = n.shape[1];
                if (!n.trans_b) {
                    // C = A B ; dA = G B^T ; dB = A^T G
                    for (int i = 0; i < m; ++i)
                        for (int l = 0; l < k; ++l) {
                            double acc = 0.0;
                            for (int j = 0; j < cols; ++j) acc += g.at(i, j) * b.at(l, j);
                            ga.at(i, l) += acc;
                        }
                    for (int l = 0; l < k; ++l)
                        for (int j = 0; j < cols; ++j) {
                            double acc = 0.0;
                            for (int i = 0; i < m; ++i) acc += a.at(i, l) * g.at(i, j);
                            gb.at(l, j) += acc;
                        }
                } else {
                    // C = A B^T ; dA = G B ; dB = G^T A
                    for (int i = 0; i < m; ++i)
                        for (int l = 0; l < k; ++l) {
                            double acc = 0.0;
                            for (int j = 0; j < cols; ++j) acc += g.at(i, j) * b.at(j, l);
                            ga.at(i, l) += acc;
                        }
                    for (int j = 0; j < cols; ++j)
                        for (int l = 0; l < k; ++l) {
                            double acc = 0.0;
                            for (int i = 0; i < m; ++i) acc += g.at(i, j) * a.at(i, l);
                            gb.at(j, l) += acc;
                        }
                }
                break;
            }
            case Op::Conv2d:
                conv2d_backward(vals[n.inputs[0]], vals[n.inputs[1]], g, grads[n.inputs[0]],
                                grads[n.inputs[1]]);
                break;
            case Op::LeakyRelu: {
                const Tensor& a = vals[n.inputs[0]];
                Tensor& ga = grads[n.inputs[0]];
                for (size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += g.data[i] * (a.data[i] < 0.0 ? n.attr_a : 1.0);
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor& s = vals[static_cast<size_t>(id)];
                Tensor& ga = grads[n.inputs[0]];
                int rows = s.shape[0], cols = s.shape[1];
                for (int i = 0; i < rows; ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < cols; ++j) dot += g.at(i, j) * s.at(i, j);
                    for (int j = 0; j < cols; ++j)
                        ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
                }
                break;
            }
            case Op::Log: {
                const Tensor& a = vals[n.inputs[0]];
                Tensor& ga = grads[n.inputs[0]];
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / a.data[i];
                break;
            }
            case Op::SumAll: {
                Tensor& ga = grads[n.inputs[0]];
                for (double& v : ga.data) v += g.data[0];
                break;
            }
            case Op::SumAxis0: {
                Tensor& ga = grads[n.inputs[0]];
                int rows = ga.shape[0], cols = ga.shape[1];
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) ga.at(i, j) += g.data[static_cast<size_t>(j)];
                break;
            }
            case Op::MeanAll: {
                Tensor& ga = grads[n.inputs[0]];
                double s = g.data[0] / static_cast<double>(ga.size());
                for (double& v : ga.data) v += s;
                break;
            }
            case Op::L2NormRows: {
                const Tensor& a = vals[n.inputs[0]];
                const Tensor& norm = vals[static_cast<size_t>(id)];
                Tensor& ga = grads[n.inputs[0]];
                int rows = a.shape[0], cols = a.shape[1];
                for (int i = 0; i < rows; ++i) {
                    double nv = norm.data[static_cast<size_t>(i)];
                    if (nv == 0.0) continue;
                    double gi = g.data[static_cast<size_t>(i)];
                    for (int j = 0; j < cols; ++j) ga.at(i, j) += gi * a.at(i, j) / nv;
                }
                break;
            }
            case Op::Broadcast: {
                Tensor& ga = grads[n.inputs[0]];
                int rank = static_cast<int>(n.shape.size());
                std::vector<int> idx(static_cast<size_t>(rank), 0);
                for (long long o = 0; o < g.size(); ++o) {
                    long long src = 0;
                    for (int d = 0; d < rank; ++d) {
                        int si = ga.shape[d] == 1 ? 0 : idx[d];
                        src = src * ga.shape[d] + si;
                    }
                    ga.data[static_cast<size_t>(src)] += g.data[static_cast<size_t>(o)];
                    for (int d = rank - 1; d >= 0; --d) {
                        if (++idx[d] < n.shape[d]) break;
                        idx[d] = 0;
                    }
                }
                break;
            }
            case Op::Reshape: {
                Tensor& ga = grads[n.inputs[0]];
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                break;
            }
            case Op::Affine: {
                Tensor& ga = grads[n.inputs[0]];
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += n.attr_a * g.data[i];
                break;
            }
            case Op::ClampMin: {
                const Tensor& a = vals[n.inputs[0]];
                Tensor& ga = grads[n.inputs[0]];
                for (size_t i = 0; i < g.data.size(); ++i)
                    if (a.data[i] > n.attr_a) ga.data[i] += g.data[i];
                break;
            }
            case Op::ChwToNd: {
                Tensor& ga = grads[n.inputs[0]];
                int c = ga.shape[0], hw = ga.shape[1] * ga.shape[2];
                for (int ch = 0; ch < c; ++ch)
                    for (int p = 0; p < hw; ++p)
                        ga.data[static_cast<size_t>(ch) * hw + p] +=
                            g.data[static_cast<size_t>(p) * c + ch];
                break;
            }
        }
    }

    std::map<std::string, Tensor> out;
    for (NodeId id : graph.designated_inputs())
        out.emplace(graph.input_name(id), std::move(grads[static_cast<size_t>(id)]));
    return {std::move(vals), std::move(out)};
}

GradCheckEntry grad_check_compare(const std::string& input, const Tensor& analytic,
                                  const Tensor& numeric, double tol) {
    GradCheckEntry e;
    e.input = input;
    for (size_t i = 0; i < analytic.data.size(); ++i) {
        double a = analytic.data[i], n = numeric.data[i];
        double denom = std::max({1.0, std::abs(a), std::abs(n)});
        double rel = std::abs(a - n) / denom;
        e.max_rel_err = std::max(e.max_rel_err, rel);
        ++e.checked;
        if (rel > tol) ++e.failed;
    }
    return e;
}

GradCheckReport grad_check(const Graph& graph, const Bindings& bindings, double step, double tol) {
    if (step <= 0) throw DegenerateInputError("grad_check: step must be positive");
    auto analytic = backward(graph, bindings);
    GradCheckReport report;
    for (NodeId id : graph.designated_inputs()) {
        const std::string& name = graph.input_name(id);
        Tensor numeric = Tensor::zeros(graph.shape_of(id));
        Bindings b = bindings;
        Tensor& x = b.at(name);
        for (size_t i = 0; i < x.data.size(); ++i) {
            double saved = x.data[i];
            x.data[i] = saved + step;
            double fp = forward_scalar(graph, b);
            x.data[i] = saved - step;
            double fm = forward_scalar(graph, b);
            x.data[i] = saved;
            numeric.data[i] = (fp - fm) / (2.0 * step);
        }
        GradCheckEntry e = grad_check_compare(name, analytic.at(name), numeric, tol);
        report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
        if (e.failed > 0) report.pass = false;
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace protokd
