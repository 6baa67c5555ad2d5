#include "protokd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "protokd/eval.hpp"
#include "protokd/rng.hpp"

namespace protokd {
namespace trainer {

using nlohmann::json;

double poly_lr(double eta0, int epoch, int max_epoch, double power) {
    if (max_epoch < 1) throw DegenerateInputError("poly_lr: max_epoch must be >= 1");
    if (epoch < 0 || epoch > max_epoch)
        throw DegenerateInputError("poly_lr: epoch " + std::to_string(epoch) +
                                   " outside [0," + std::to_string(max_epoch) + "]");
    return eta0 * std::pow(1.0 - static_cast<double>(epoch) / max_epoch, power);
}

int select_best(const std::vector<double>& val_dice) {
    if (val_dice.empty()) throw DegenerateInputError("select_best: empty metric sequence");
    int best = 0;
    for (int i = 1; i < static_cast<int>(val_dice.size()); ++i)
        if (val_dice[static_cast<size_t>(i)] > val_dice[static_cast<size_t>(best)]) best = i;
    return best;
}

AdamState AdamState::init(const model::SegNetParams& params) {
    AdamState s;
    for (const auto& l : params.layers) {
        s.m.push_back(Tensor::zeros(l.value.shape));
        s.v.push_back(Tensor::zeros(l.value.shape));
    }
    return s;
}

void adam_step(model::SegNetParams& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double weight_decay) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    if (grads.size() != params.layers.size())
        throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.layers.size()) + " parameter tensors");
    state.step += 1;
    double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    for (size_t t = 0; t < params.layers.size(); ++t) {
        Tensor& p = params.layers[t].value;
        const Tensor& g = grads[t];
        if (g.shape != p.shape)
            throw ShapeError("adam_step: gradient shape " + shape_str(g.shape) +
                             " vs parameter shape " + shape_str(p.shape) + " at " +
                             params.layers[t].name);
        Tensor& m = state.m[t];
        Tensor& v = state.v[t];
        for (size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = kBeta1 * m.data[i] + (1.0 - kBeta1) * g.data[i];
            v.data[i] = kBeta2 * v.data[i] + (1.0 - kBeta2) * g.data[i] * g.data[i];
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p.data[i] -= lr * weight_decay * p.data[i];  // decoupled shrinkage
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
        }
    }
}

namespace {

struct TeacherOutputs {
    Tensor features;
    Tensor logits;
};

Tensor sample_input(const data::SyntheticSample& s, int modality) {
    return modality < 0 ? s.image : data::select_modality(s, modality);
}

struct StepValues {
    double seg = 0.0, kd = 0.0, proto = 0.0, total = 0.0;
};

// one forward/backward on a single sample; grads aligned with params.layers
StepValues sample_step(const model::SegNetParams& params, const data::SyntheticSample& sample,
                       int modality, const TeacherOutputs* teacher, const TrainConfig& tcfg,
                       std::vector<Tensor>& grads_out) {
    const model::SegNetConfig& mcfg = params.config;
    Graph g;
    NodeId img = g.constant(sample_input(sample, modality), "image");
    model::ForwardNodes net = model::build_forward_trainable(g, mcfg, img);

    NodeId seg = losses::seg_loss_node(g, net.logits, sample.labels, mcfg.classes);
    NodeId kd = (teacher && tcfg.ablation.use_kd)
                    ? losses::kd_loss_node(g, net.logits, teacher->logits,
                                           tcfg.weights.temperature, tcfg.kl_direction,
                                           tcfg.t_squared)
                    : g.constant(Tensor::scalar(0.0), "kd_off");
    NodeId proto_n = (teacher && tcfg.ablation.use_proto)
                         ? proto::i2fv_pipeline_node(g, net.features, teacher->features,
                                                     sample.labels, mcfg.classes, proto::kCosEps,
                                                     tcfg.proto_mode)
                         : g.constant(Tensor::scalar(0.0), "proto_off");
    NodeId total = losses::total_loss_node(g, seg, kd, proto_n, tcfg.weights);
    g.set_output(total);

    Bindings b = model::param_bindings(params);
    auto [vals, grads] = forward_backward(g, b);

    StepValues v;
    v.seg = vals[static_cast<size_t>(seg)].scalar_value();
    v.kd = vals[static_cast<size_t>(kd)].scalar_value();
    v.proto = vals[static_cast<size_t>(proto_n)].scalar_value();
    v.total = vals[static_cast<size_t>(total)].scalar_value();

    grads_out.clear();
    grads_out.reserve(params.layers.size());
    for (const auto& l : params.layers) grads_out.push_back(std::move(grads.at(l.name)));
    return v;
}

double mean_val_dice(const model::SegNetParams& params,
                     const std::vector<data::SyntheticSample>& val, int modality) {
    if (val.empty()) return 0.0;
    auto regions = eval::default_regions(params.config.classes);
    double acc = 0.0;
    for (const auto& s : val) {
        auto [feat, logits] = model::full_forward(params, sample_input(s, modality));
        (void)feat;
        LabelMap pred = eval::predict_labels(logits);
        double d = 0.0;
        for (const auto& r : regions) d += eval::dice_score(pred, s.labels, r.classes);
        acc += d / static_cast<double>(regions.size());
    }
    return acc / static_cast<double>(val.size());
}

// modality < 0 means full multi-modality input; teacher == nullptr means
// plain supervised training (distillation terms forced off).
TrainResult train_impl(const data::Dataset& dataset, const model::SegNetConfig& mcfg,
                       const TrainConfig& tcfg, int modality,
                       const model::SegNetParams* teacher) {
    tcfg.validate();
    mcfg.validate();
    if (dataset.train.empty()) throw ConfigError("trainer: empty training split");

    model::SegNetParams params = model::init_params(mcfg);
    TrainResult result{params, {}};
    if (tcfg.epochs == 0) return result;

    // frozen teacher outputs per training sample
    std::vector<TeacherOutputs> cache;
    if (teacher) {
        cache.reserve(dataset.train.size());
        for (const auto& s : dataset.train) {
            auto [feat, logits] = model::full_forward(*teacher, s.image);
            cache.push_back({std::move(feat), std::move(logits)});
        }
    }

    AdamState adam = AdamState::init(params);
    Rng shuffle_rng(Rng::derive(tcfg.seed, 0x73687566666cULL));
    std::vector<int> order(dataset.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<double> val_history;
    double best_dice = -1.0;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double lr = poly_lr(tcfg.learning_rate, epoch, tcfg.epochs, tcfg.poly_power);

        // Fisher-Yates from the dedicated shuffle stream
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

        StepValues epoch_sum;
        std::vector<Tensor> grads, acc;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tcfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(tcfg.batch_size));
            acc.clear();
            for (const auto& l : params.layers) acc.push_back(Tensor::zeros(l.value.shape));
            for (size_t j = start; j < end; ++j) {
                int idx = order[j];
                StepValues v = sample_step(params, dataset.train[static_cast<size_t>(idx)],
                                           modality, teacher ? &cache[static_cast<size_t>(idx)]
                                                             : nullptr,
                                           tcfg, grads);
                if (!std::isfinite(v.total))
                    throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                              std::to_string(epoch),
                                          epoch);
                epoch_sum.seg += v.seg;
                epoch_sum.kd += v.kd;
                epoch_sum.proto += v.proto;
                epoch_sum.total += v.total;
                for (size_t t = 0; t < acc.size(); ++t)
                    for (size_t i = 0; i < acc[t].data.size(); ++i)
                        acc[t].data[i] += grads[t].data[i];
            }
            double inv = 1.0 / static_cast<double>(end - start);
            for (auto& t : acc)
                for (double& v : t.data) v *= inv;
            adam_step(params, acc, adam, lr, tcfg.weight_decay);
        }

        double n = static_cast<double>(order.size());
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.l_seg = epoch_sum.seg / n;
        rec.l_kd = epoch_sum.kd / n;
        rec.l_proto = epoch_sum.proto / n;
        rec.l_total = epoch_sum.total / n;
        rec.val_dice_mean = mean_val_dice(params, dataset.val, modality);
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.epochs.push_back(rec);
        val_history.push_back(rec.val_dice_mean);
        if (rec.val_dice_mean > best_dice) {
            best_dice = rec.val_dice_mean;
            result.params = params;
        }
    }
    result.log.best_epoch = select_best(val_history);
    return result;
}

}  // namespace

TrainResult train_teacher(const data::Dataset& dataset, const model::SegNetConfig& mcfg,
                          const TrainConfig& tcfg) {
    if (dataset.config.modalities < 2)
        throw ConfigError("train_teacher: dataset must have at least 2 modalities");
    if (mcfg.in_channels != dataset.config.modalities)
        throw ConfigError("train_teacher: model in_channels must equal dataset modalities");
    return train_impl(dataset, mcfg, tcfg, /*modality=*/-1, /*teacher=*/nullptr);
}

TrainResult distill_student(const data::Dataset& dataset, const model::SegNetParams& teacher,
                            int modality, const model::SegNetConfig& mcfg,
                            const TrainConfig& tcfg) {
    if (modality < 0 || modality >= dataset.config.modalities)
        throw DegenerateInputError("distill_student: modality " + std::to_string(modality) +
                                   " out of range");
    if (mcfg.in_channels != 1)
        throw ConfigError("distill_student: student must take a single modality");
    if (teacher.config.in_channels != dataset.config.modalities)
        throw ConfigError("distill_student: teacher in_channels must equal dataset modalities");
    if (teacher.config.classes != mcfg.classes || teacher.config.hidden != mcfg.hidden)
        throw ConfigError("distill_student: teacher and student heads are incompatible");
    return train_impl(dataset, mcfg, tcfg, modality, &teacher);
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open log for writing: " + path);
    f << "epoch,lr,l_seg,l_kd,l_proto,l_total,val_dice_mean\n";
    char buf[512];
    for (const auto& r : log.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr,
                      r.l_seg, r.l_kd, r.l_proto, r.l_total, r.val_dice_mean);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path);
}

void write_train_log_json(const std::string& path, const TrainLog& log) {
    json epochs = json::array();
    json timing = json::array();
    for (const auto& r : log.epochs) {
        epochs.push_back({{"epoch", r.epoch},
                          {"lr", r.lr},
                          {"l_seg", r.l_seg},
                          {"l_kd", r.l_kd},
                          {"l_proto", r.l_proto},
                          {"l_total", r.l_total},
                          {"val_dice_mean", r.val_dice_mean}});
        timing.push_back(r.wall_seconds);
    }
    json out = {{"best_epoch", log.best_epoch}, {"epochs", epochs}, {"timing", timing}};
    std::ofstream f(path);
    if (!f) throw IoError("cannot open log for writing: " + path);
    f << out.dump(2) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace trainer
}  // namespace protokd
