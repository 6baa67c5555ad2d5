#include "protokd/proto.hpp"

#include <cmath>

namespace protokd {
namespace proto {

namespace {

void check_features(const Shape& s, const LabelMap& labels, const char* ctx) {
    if (s.size() != 2 || s[1] < 1)
        throw ShapeError(std::string(ctx) + ": features must be NxD, got " + shape_str(s));
    if (s[0] != labels.size())
        throw ShapeError(std::string(ctx) + ": " + std::to_string(s[0]) + " feature rows vs " +
                         std::to_string(labels.size()) + " labels");
}

// KxN averaging matrix: row k holds 1/count_k at the pixels of class k.
Tensor class_mean_matrix(const LabelMap& labels, int num_classes, std::vector<bool>& valid) {
    labels.validate(num_classes);
    int n = labels.size();
    std::vector<int> counts(static_cast<size_t>(num_classes), 0);
    for (int i = 0; i < n; ++i) counts[static_cast<size_t>(labels.at(i))]++;
    valid.assign(static_cast<size_t>(num_classes), false);
    Tensor avg = Tensor::zeros({num_classes, n});
    for (int i = 0; i < n; ++i) {
        int k = labels.at(i);
        valid[static_cast<size_t>(k)] = true;
        avg.at(k, i) = 1.0 / counts[static_cast<size_t>(k)];
    }
    return avg;
}

// mask and normalization for the squared-difference sum
std::pair<Tensor, double> loss_mask(const LabelMap& labels, int num_classes,
                                    const std::vector<bool>& valid, VariationMode mode) {
    int n = labels.size();
    Tensor mask = Tensor::zeros({n, num_classes});
    double norm;
    if (mode == VariationMode::IntraOnly) {
        for (int i = 0; i < n; ++i) mask.at(i, labels.at(i)) = 1.0;
        norm = 1.0 / n;
    } else {
        int n_valid = 0;
        for (bool v : valid) n_valid += v ? 1 : 0;
        if (n_valid == 0)
            throw DegenerateInputError("proto_kd_loss: no valid classes");
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < num_classes; ++k)
                if (valid[static_cast<size_t>(k)]) mask.at(i, k) = 1.0;
        norm = 1.0 / (static_cast<double>(n) * n_valid);
    }
    return {std::move(mask), norm};
}

NodeId masked_sq_diff_node(Graph& g, NodeId map_s, const Tensor& map_t, const Tensor& mask,
                           double norm) {
    if (g.shape_of(map_s) != map_t.shape)
        throw ShapeError("proto_kd_loss: student map " + shape_str(g.shape_of(map_s)) +
                         " vs teacher map " + shape_str(map_t.shape));
    NodeId diff = g.sub(map_s, g.constant(map_t, "i2fv_teacher"));
    NodeId sq = g.mul(diff, diff);
    NodeId masked = g.mul(sq, g.constant(mask, "i2fv_mask"));
    return g.affine(g.sum_all(masked), norm, 0.0);
}

}  // namespace

PrototypeSet compute_prototypes(const Tensor& features, const LabelMap& labels, int num_classes) {
    check_features(features.shape, labels, "compute_prototypes");
    Graph g;
    NodeId in = g.input("features", features.shape);
    std::vector<bool> valid;
    NodeId node = prototypes_node(g, in, labels, num_classes, &valid);
    PrototypeSet out;
    out.prototypes = forward_value(g, {{"features", features}}, node);
    out.valid = std::move(valid);
    return out;
}

Tensor i2fv_map(const Tensor& features, const PrototypeSet& protos, double eps) {
    if (features.shape.size() != 2 || features.shape[1] != protos.dims())
        throw ShapeError("i2fv_map: features " + shape_str(features.shape) +
                         " vs prototypes " + shape_str(protos.prototypes.shape));
    Graph g;
    NodeId f = g.input("features", features.shape);
    NodeId c = g.constant(protos.prototypes, "prototypes");
    NodeId m = i2fv_node(g, f, c, eps);
    return forward_value(g, {{"features", features}}, m);
}

double proto_kd_loss(const Tensor& map_s, const Tensor& map_t, const std::vector<bool>& valid) {
    if (map_s.shape != map_t.shape || map_s.shape.size() != 2)
        throw ShapeError("proto_kd_loss: maps must share an NxK shape, got " +
                         shape_str(map_s.shape) + " vs " + shape_str(map_t.shape));
    int n = map_s.shape[0], k = map_s.shape[1];
    if (static_cast<int>(valid.size()) != k)
        throw ShapeError("proto_kd_loss: valid mask length " + std::to_string(valid.size()) +
                         " vs K=" + std::to_string(k));
    int n_valid = 0;
    for (bool v : valid) n_valid += v ? 1 : 0;
    if (n_valid == 0) throw DegenerateInputError("proto_kd_loss: no valid classes");
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            if (valid[static_cast<size_t>(j)]) {
                double d = map_s.at(i, j) - map_t.at(i, j);
                acc += d * d;
            }
    return acc / (static_cast<double>(n) * n_valid);
}

double i2fv_pipeline(const Tensor& features_s, const Tensor& features_t, const LabelMap& labels,
                     int num_classes, double eps, VariationMode mode) {
    check_features(features_s.shape, labels, "i2fv_pipeline");
    Graph g;
    NodeId in = g.input("features_s", features_s.shape);
    NodeId out = i2fv_pipeline_node(g, in, features_t, labels, num_classes, eps, mode);
    g.set_output(out);
    return forward_scalar(g, {{"features_s", features_s}});
}

NodeId prototypes_node(Graph& g, NodeId features, const LabelMap& labels, int num_classes,
                       std::vector<bool>* valid_out) {
    check_features(g.shape_of(features), labels, "prototypes");
    std::vector<bool> valid;
    Tensor avg = class_mean_matrix(labels, num_classes, valid);
    if (valid_out) *valid_out = valid;
    return g.matmul(g.constant(std::move(avg), "class_mean"), features);
}

NodeId i2fv_node(Graph& g, NodeId features, NodeId protos, double eps) {
    if (eps <= 0) throw DegenerateInputError("i2fv: eps must be positive");
    // copies: appending nodes below may reallocate and invalidate references
    Shape fs = g.shape_of(features);
    Shape ps = g.shape_of(protos);
    if (fs.size() != 2 || ps.size() != 2 || fs[1] != ps[1])
        throw ShapeError("i2fv: features " + shape_str(fs) + " vs prototypes " + shape_str(ps));
    NodeId fn = g.div(features, g.broadcast(g.clamp_min(g.l2norm_rows(features), eps), fs));
    NodeId pn = g.div(protos, g.broadcast(g.clamp_min(g.l2norm_rows(protos), eps), ps));
    return g.matmul(fn, pn, /*trans_b=*/true);
}

NodeId proto_kd_loss_node(Graph& g, NodeId map_s, const Tensor& map_t,
                          const std::vector<bool>& valid) {
    int n = map_t.shape[0], k = map_t.shape[1];
    if (static_cast<int>(valid.size()) != k)
        throw ShapeError("proto_kd_loss: valid mask length " + std::to_string(valid.size()) +
                         " vs K=" + std::to_string(k));
    int n_valid = 0;
    Tensor mask = Tensor::zeros({n, k});
    for (int j = 0; j < k; ++j)
        if (valid[static_cast<size_t>(j)]) {
            ++n_valid;
            for (int i = 0; i < n; ++i) mask.at(i, j) = 1.0;
        }
    if (n_valid == 0) throw DegenerateInputError("proto_kd_loss: no valid classes");
    return masked_sq_diff_node(g, map_s, map_t, mask, 1.0 / (static_cast<double>(n) * n_valid));
}

NodeId i2fv_pipeline_node(Graph& g, NodeId features_s, const Tensor& features_t,
                          const LabelMap& labels, int num_classes, double eps,
                          VariationMode mode) {
    check_features(g.shape_of(features_s), labels, "i2fv_pipeline");
    check_features(features_t.shape, labels, "i2fv_pipeline(teacher)");
    if (g.shape_of(features_s)[0] != features_t.shape[0])
        throw ShapeError("i2fv_pipeline: student and teacher pixel counts differ");

    // teacher side is constant, so evaluate it eagerly
    PrototypeSet protos_t = compute_prototypes(features_t, labels, num_classes);
    Tensor map_t = i2fv_map(features_t, protos_t, eps);

    std::vector<bool> valid;
    NodeId protos_s = prototypes_node(g, features_s, labels, num_classes, &valid);
    NodeId map_s = i2fv_node(g, features_s, protos_s, eps);

    auto [mask, norm] = loss_mask(labels, num_classes, valid, mode);
    return masked_sq_diff_node(g, map_s, map_t, mask, norm);
}

}  // namespace proto
}  // namespace protokd
