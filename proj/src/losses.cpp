#include "protokd/losses.hpp"

#include <cmath>

namespace protokd {
namespace losses {

namespace {

constexpr double kLogFloor = 1e-300;

void check_logits(const Graph& g, NodeId logits, const LabelMap& labels, const char* ctx) {
    const Shape& s = g.shape_of(logits);
    if (s.size() != 2)
        throw ShapeError(std::string(ctx) + ": logits must be NxK, got " + shape_str(s));
    if (s[1] < 2)
        throw ShapeError(std::string(ctx) + ": need at least 2 classes, got " +
                         std::to_string(s[1]));
    if (s[0] != labels.size())
        throw ShapeError(std::string(ctx) + ": " + std::to_string(s[0]) + " logit rows vs " +
                         std::to_string(labels.size()) + " labels");
}

double eval_scalar(Graph& g, NodeId out, const Bindings& b) {
    g.set_output(out);
    return forward_scalar(g, b);
}

}  // namespace

Tensor one_hot(const LabelMap& labels, int num_classes) {
    labels.validate(num_classes);
    Tensor t = Tensor::zeros({labels.size(), num_classes});
    for (int i = 0; i < labels.size(); ++i) t.at(i, labels.at(i)) = 1.0;
    return t;
}

NodeId cross_entropy_node(Graph& g, NodeId logits, const LabelMap& labels, int num_classes) {
    check_logits(g, logits, labels, "cross_entropy");
    int n = labels.size();
    NodeId log_probs = g.log(g.clamp_min(g.softmax_rows(logits), kLogFloor));
    NodeId picked = g.mul(log_probs, g.constant(one_hot(labels, num_classes), "ce_onehot"));
    return g.affine(g.sum_all(picked), -1.0 / n, 0.0);
}

NodeId dice_loss_node(Graph& g, NodeId logits, const LabelMap& labels, int num_classes,
                      double eps) {
    check_logits(g, logits, labels, "dice_loss");
    if (eps <= 0) throw DegenerateInputError("dice_loss: eps must be positive");
    Tensor onehot = one_hot(labels, num_classes);
    // sum of g^2 per class is the class pixel count
    Tensor counts_eps = Tensor::zeros({num_classes});
    for (int i = 0; i < labels.size(); ++i) counts_eps.at(labels.at(i)) += 1.0;
    for (double& v : counts_eps.data) v += eps;

    NodeId probs = g.softmax_rows(logits);
    NodeId num = g.affine(g.sum_axis0(g.mul(probs, g.constant(onehot, "dice_onehot"))), 2.0, eps);
    NodeId den = g.add(g.sum_axis0(g.mul(probs, probs)), g.constant(counts_eps, "dice_gsq"));
    NodeId dice_per_class = g.div(num, den);
    return g.mean_all(g.affine(dice_per_class, -1.0, 1.0));
}

NodeId seg_loss_node(Graph& g, NodeId logits, const LabelMap& labels, int num_classes,
                     double eps) {
    return g.add(cross_entropy_node(g, logits, labels, num_classes),
                 dice_loss_node(g, logits, labels, num_classes, eps));
}

NodeId kd_loss_node(Graph& g, NodeId student_logits, const Tensor& teacher_logits,
                    double temperature, KlDirection dir, bool t_squared) {
    Shape s = g.shape_of(student_logits);  // copy: appends below may reallocate
    if (s.size() != 2)
        throw ShapeError("kd_loss: logits must be NxK, got " + shape_str(s));
    if (teacher_logits.shape != s)
        throw ShapeError("kd_loss: student shape " + shape_str(s) + " vs teacher shape " +
                         shape_str(teacher_logits.shape));
    if (temperature <= 0) throw DegenerateInputError("kd_loss: temperature must be positive");
    int n = s[0];

    NodeId teach = g.constant(teacher_logits, "kd_teacher");
    NodeId sp = g.softmax_rows(g.affine(student_logits, 1.0 / temperature, 0.0));
    NodeId tp = g.softmax_rows(g.affine(teach, 1.0 / temperature, 0.0));
    NodeId ls = g.log(g.clamp_min(sp, kLogFloor));
    NodeId lt = g.log(g.clamp_min(tp, kLogFloor));
    NodeId kl_terms = dir == KlDirection::AsPaper ? g.mul(sp, g.sub(ls, lt))
                                                  : g.mul(tp, g.sub(lt, ls));
    double scale = (t_squared ? temperature * temperature : 1.0) / n;
    return g.affine(g.sum_all(kl_terms), scale, 0.0);
}

NodeId total_loss_node(Graph& g, NodeId seg, NodeId kd, NodeId proto, const LossWeights& w) {
    w.validate();
    return g.add(seg, g.add(g.affine(kd, w.alpha, 0.0), g.affine(proto, w.beta, 0.0)));
}

double cross_entropy(const Tensor& logits, const LabelMap& labels) {
    Graph g;
    NodeId in = g.input("logits", logits.shape);
    NodeId out = cross_entropy_node(g, in, labels, logits.shape[1]);
    return eval_scalar(g, out, {{"logits", logits}});
}

double dice_loss(const Tensor& logits, const LabelMap& labels, double eps) {
    Graph g;
    NodeId in = g.input("logits", logits.shape);
    NodeId out = dice_loss_node(g, in, labels, logits.shape[1], eps);
    return eval_scalar(g, out, {{"logits", logits}});
}

double seg_loss(const Tensor& logits, const LabelMap& labels, double eps) {
    Graph g;
    NodeId in = g.input("logits", logits.shape);
    NodeId out = seg_loss_node(g, in, labels, logits.shape[1], eps);
    return eval_scalar(g, out, {{"logits", logits}});
}

double kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature,
               KlDirection dir, bool t_squared) {
    Graph g;
    NodeId in = g.input("student", student_logits.shape);
    NodeId out = kd_loss_node(g, in, teacher_logits, temperature, dir, t_squared);
    return eval_scalar(g, out, {{"student", student_logits}});
}

double total_loss(double seg, double kd, double proto, const LossWeights& w) {
    w.validate();
    if (!std::isfinite(seg) || !std::isfinite(kd) || !std::isfinite(proto))
        throw DegenerateInputError("total_loss: non-finite component");
    return seg + w.alpha * kd + w.beta * proto;
}

}  // namespace losses
}  // namespace protokd
