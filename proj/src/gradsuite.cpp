#include "protokd/gradsuite.hpp"

#include "protokd/losses.hpp"
#include "protokd/model.hpp"
#include "protokd/proto.hpp"
#include "protokd/rng.hpp"

namespace protokd {
namespace gradsuite {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

LabelMap random_labels(Rng& rng, int n, int k) {
    LabelMap l;
    l.labels.resize(static_cast<size_t>(n));
    for (int& y : l.labels) y = rng.uniform_int(0, k - 1);
    return l;
}

CheckResult run_one(const std::string& name, Graph& g, NodeId out, const Bindings& b,
                    double step, double tol) {
    g.set_output(out);
    GradCheckReport rep = grad_check(g, b, step, tol);
    return {name, rep.pass, rep.max_rel_err};
}

}  // namespace

std::vector<CheckResult> run(int instances_per_loss, std::uint64_t seed, double step,
                             double tol) {
    std::vector<CheckResult> out;
    constexpr int kClasses = 3, kDims = 8;
    losses::LossWeights weights;  // library defaults

    for (int inst = 0; inst < instances_per_loss; ++inst) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(inst)));
        int side = rng.uniform_int(3, 6);
        int n = side * side;
        std::string tag = "#" + std::to_string(inst);
        LabelMap labels = random_labels(rng, n, kClasses);
        Tensor logits = random_tensor(rng, {n, kClasses});
        Tensor teacher_logits = random_tensor(rng, {n, kClasses});
        Tensor features = random_tensor(rng, {n, kDims});
        Tensor teacher_features = random_tensor(rng, {n, kDims});

        {
            Graph g;
            NodeId in = g.input("logits", logits.shape);
            NodeId node = losses::cross_entropy_node(g, in, labels, kClasses);
            out.push_back(run_one("cross_entropy" + tag, g, node, {{"logits", logits}}, step, tol));
        }
        {
            Graph g;
            NodeId in = g.input("logits", logits.shape);
            NodeId node = losses::dice_loss_node(g, in, labels, kClasses);
            out.push_back(run_one("dice_loss" + tag, g, node, {{"logits", logits}}, step, tol));
        }
        {
            Graph g;
            NodeId in = g.input("logits", logits.shape);
            NodeId node = losses::seg_loss_node(g, in, labels, kClasses);
            out.push_back(run_one("seg_loss" + tag, g, node, {{"logits", logits}}, step, tol));
        }
        {
            Graph g;
            NodeId in = g.input("student", logits.shape);
            NodeId node = losses::kd_loss_node(g, in, teacher_logits, weights.temperature);
            out.push_back(run_one("kd_loss" + tag, g, node, {{"student", logits}}, step, tol));
        }
        {
            Graph g;
            NodeId in = g.input("features", features.shape);
            NodeId node = proto::i2fv_pipeline_node(g, in, teacher_features, labels, kClasses);
            out.push_back(run_one("proto_kd" + tag, g, node, {{"features", features}}, step, tol));
        }
        {
            Graph g;
            NodeId in = g.input("features", features.shape);
            NodeId node = proto::i2fv_pipeline_node(g, in, teacher_features, labels, kClasses,
                                                    proto::kCosEps,
                                                    proto::VariationMode::IntraOnly);
            out.push_back(
                run_one("proto_kd_intra" + tag, g, node, {{"features", features}}, step, tol));
        }
        {
            // composite objective through the full model forward pass
            model::SegNetConfig cfg;
            cfg.in_channels = 1;
            cfg.hidden = kDims;
            cfg.classes = kClasses;
            cfg.seed = Rng::derive(seed, 1000 + static_cast<std::uint64_t>(inst));
            model::SegNetParams params = model::init_params(cfg);
            Tensor image = random_tensor(rng, {1, side, side});

            Graph g;
            NodeId img = g.constant(image, "image");
            model::ForwardNodes net = model::build_forward_trainable(g, cfg, img);
            NodeId seg = losses::seg_loss_node(g, net.logits, labels, kClasses);
            NodeId kd = losses::kd_loss_node(g, net.logits, teacher_logits, weights.temperature);
            NodeId pr = proto::i2fv_pipeline_node(g, net.features, teacher_features, labels,
                                                  kClasses);
            NodeId total = losses::total_loss_node(g, seg, kd, pr, weights);
            out.push_back(run_one("model_composite" + tag, g, total,
                                  model::param_bindings(params), step, tol));
        }
    }
    return out;
}

bool all_pass(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

}  // namespace gradsuite
}  // namespace protokd
