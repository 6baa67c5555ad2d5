#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protokd/data.hpp"
#include "protokd/losses.hpp"
#include "protokd/model.hpp"
#include "protokd/proto.hpp"

namespace protokd {
namespace trainer {

struct AblationMask {
    bool use_kd = true;
    bool use_proto = true;
};

struct TrainConfig {
    int epochs = 60;
    int batch_size = 4;
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    double poly_power = 0.9;
    losses::LossWeights weights;  // alpha=10, beta=0.1, T=10
    losses::KlDirection kl_direction = losses::KlDirection::AsPaper;
    bool t_squared = false;
    proto::VariationMode proto_mode = proto::VariationMode::IntraInter;
    AblationMask ablation;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 0) throw ConfigError("trainer: epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
        if (learning_rate <= 0) throw ConfigError("trainer: learning_rate must be positive");
        if (weight_decay < 0) throw ConfigError("trainer: weight_decay must be >= 0");
        weights.validate();
    }
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double l_seg = 0.0;
    double l_kd = 0.0;
    double l_proto = 0.0;
    double l_total = 0.0;
    double val_dice_mean = 0.0;
    double wall_seconds = 0.0;  // excluded from determinism comparisons
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
};

struct TrainResult {
    model::SegNetParams params;  // best-validation-epoch parameters
    TrainLog log;
};

double poly_lr(double eta0, int epoch, int max_epoch, double power);

// argmax of mean validation Dice, earliest epoch on ties
int select_best(const std::vector<double>& val_dice);

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long long step = 0;

    static AdamState init(const model::SegNetParams& params);
};

// Bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8) with decoupled
// weight decay. grads aligned with params.layers.
void adam_step(model::SegNetParams& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double weight_decay);

// Teacher pre-training on the full multi-modality input, seg loss only.
TrainResult train_teacher(const data::Dataset& dataset, const model::SegNetConfig& mcfg,
                          const TrainConfig& tcfg);

// Student distillation from a frozen teacher on one modality.
TrainResult distill_student(const data::Dataset& dataset, const model::SegNetParams& teacher,
                            int modality, const model::SegNetConfig& mcfg,
                            const TrainConfig& tcfg);

void write_train_log_csv(const std::string& path, const TrainLog& log);
void write_train_log_json(const std::string& path, const TrainLog& log);

}  // namespace trainer
}  // namespace protokd
