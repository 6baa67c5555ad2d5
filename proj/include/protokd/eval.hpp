#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "protokd/data.hpp"
#include "protokd/stats.hpp"
#include "protokd/tensor.hpp"
#include "protokd/trainer.hpp"

namespace protokd {
namespace eval {

struct RegionSpec {
    std::string name;
    std::vector<int> classes;
};

// one region per foreground class plus their union ("whole")
std::vector<RegionSpec> default_regions(int num_classes);

// 2|P∩G| / (|P|+|G|) after binarizing both maps by region membership.
// Both sets empty -> 1.0, exactly one empty -> 0.0.
double dice_score(const LabelMap& pred, const LabelMap& gt, const std::vector<int>& region);

LabelMap predict_labels(const Tensor& logits);

struct MetricsRecord {
    std::string method;
    int modality = -1;  // -1: full multi-modality input
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> region_dice;
    double mean_dice = 0.0;
};

// Mean test-set Dice per region for one trained model.
MetricsRecord evaluate_params(const model::SegNetParams& params,
                              const std::vector<data::SyntheticSample>& samples, int modality,
                              const std::vector<RegionSpec>& regions);

struct SummaryRow {
    std::string method;
    int modality = -1;
    std::vector<std::pair<std::string, double>> region_mean;
    double mean_dice = 0.0;
    bool has_test = false;  // paired t vs the unimodal baseline available
    double t = 0.0;
    double p = 1.0;
    bool significant = false;  // p <= 0.05
};

struct CellLog {
    std::string method;
    int modality = -1;
    std::uint64_t seed = 0;
    trainer::TrainLog log;
};

struct MatrixConfig {
    std::vector<std::string> methods = {"unimodal", "+kd", "+proto", "protokd"};
    std::vector<int> modalities = {0};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    model::SegNetConfig model;
    trainer::TrainConfig train;
    bool include_teacher = true;
    int threads = 1;
};

struct MatrixResult {
    std::vector<MetricsRecord> records;
    std::vector<SummaryRow> summary;
    std::vector<CellLog> logs;
};

// Known methods: unimodal, +kd, +proto, protokd, protokd-intra.
trainer::TrainConfig method_train_config(const std::string& method,
                                         const trainer::TrainConfig& base);

// Trains and evaluates every (method, modality, seed) cell; one teacher per
// seed is shared by all its student cells. Deterministic; seeds may run in
// parallel.
MatrixResult run_matrix(const data::Dataset& dataset, const MatrixConfig& config);

void write_records_csv(const std::string& path, const MatrixResult& result);
void write_summary_csv(const std::string& path, const MatrixResult& result);
void write_result_json(const std::string& path, const MatrixResult& result);

}  // namespace eval
}  // namespace protokd
