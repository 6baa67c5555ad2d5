#include "protokd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace protokd {
namespace eval {

using nlohmann::json;

std::vector<RegionSpec> default_regions(int num_classes) {
    if (num_classes < 2) throw ConfigError("regions: need at least 2 classes");
    std::vector<RegionSpec> out;
    std::vector<int> all;
    for (int k = 1; k < num_classes; ++k) {
        out.push_back({"c" + std::to_string(k), {k}});
        all.push_back(k);
    }
    out.push_back({"whole", all});
    return out;
}

double dice_score(const LabelMap& pred, const LabelMap& gt, const std::vector<int>& region) {
    if (pred.size() != gt.size())
        throw ShapeError("dice_score: prediction has " + std::to_string(pred.size()) +
                         " pixels, ground truth " + std::to_string(gt.size()));
    if (region.empty()) throw ConfigError("dice_score: empty region class set");
    auto in_region = [&region](int y) {
        return std::find(region.begin(), region.end(), y) != region.end();
    };
    long long p = 0, g = 0, both = 0;
    for (int i = 0; i < pred.size(); ++i) {
        bool bp = in_region(pred.at(i));
        bool bg = in_region(gt.at(i));
        p += bp;
        g += bg;
        both += bp && bg;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

LabelMap predict_labels(const Tensor& logits) {
    if (logits.shape.size() != 2)
        throw ShapeError("predict_labels: logits must be NxK, got " + shape_str(logits.shape));
    LabelMap out;
    int n = logits.shape[0], k = logits.shape[1];
    out.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        out.labels[static_cast<size_t>(i)] = best;
    }
    return out;
}

MetricsRecord evaluate_params(const model::SegNetParams& params,
                              const std::vector<data::SyntheticSample>& samples, int modality,
                              const std::vector<RegionSpec>& regions) {
    if (samples.empty()) throw ConfigError("evaluate: empty sample set");
    MetricsRecord rec;
    rec.modality = modality;
    std::vector<double> sums(regions.size(), 0.0);
    for (const auto& s : samples) {
        Tensor input = modality < 0 ? s.image : data::select_modality(s, modality);
        auto [feat, logits] = model::full_forward(params, input);
        (void)feat;
        LabelMap pred = predict_labels(logits);
        for (size_t r = 0; r < regions.size(); ++r)
            sums[r] += dice_score(pred, s.labels, regions[r].classes);
    }
    double total = 0.0;
    for (size_t r = 0; r < regions.size(); ++r) {
        double mean = sums[r] / static_cast<double>(samples.size());
        rec.region_dice.emplace_back(regions[r].name, mean);
        total += mean;
    }
    rec.mean_dice = total / static_cast<double>(regions.size());
    return rec;
}

trainer::TrainConfig method_train_config(const std::string& method,
                                         const trainer::TrainConfig& base) {
    trainer::TrainConfig cfg = base;
    if (method == "unimodal") {
        cfg.ablation = {false, false};
    } else if (method == "+kd") {
        cfg.ablation = {true, false};
    } else if (method == "+proto") {
        cfg.ablation = {false, true};
    } else if (method == "protokd") {
        cfg.ablation = {true, true};
    } else if (method == "protokd-intra") {
        cfg.ablation = {true, true};
        cfg.proto_mode = proto::VariationMode::IntraOnly;
    } else {
        throw ConfigError("unknown method '" + method + "'");
    }
    return cfg;
}

namespace {

struct SeedResults {
    std::vector<MetricsRecord> records;
    std::vector<CellLog> logs;
};

SeedResults run_seed(const data::Dataset& dataset, const MatrixConfig& config,
                     std::uint64_t seed) {
    SeedResults out;
    auto regions = default_regions(config.model.classes);

    model::SegNetConfig teacher_cfg = config.model;
    teacher_cfg.in_channels = dataset.config.modalities;
    teacher_cfg.seed = seed;
    trainer::TrainConfig teacher_train = config.train;
    teacher_train.seed = seed;
    trainer::TrainResult teacher = trainer::train_teacher(dataset, teacher_cfg, teacher_train);

    if (config.include_teacher) {
        MetricsRecord rec = evaluate_params(teacher.params, dataset.test, -1, regions);
        rec.method = "teacher";
        rec.seed = seed;
        out.records.push_back(std::move(rec));
        out.logs.push_back({"teacher", -1, seed, teacher.log});
    }

    model::SegNetConfig student_cfg = config.model;
    student_cfg.in_channels = 1;
    student_cfg.seed = seed;
    for (int modality : config.modalities) {
        for (const auto& method : config.methods) {
            trainer::TrainConfig cfg = method_train_config(method, config.train);
            cfg.seed = seed;
            trainer::TrainResult res;
            try {
                res = trainer::distill_student(dataset, teacher.params, modality, student_cfg,
                                               cfg);
            } catch (const Error& e) {
                throw Error("cell (" + method + ", m" + std::to_string(modality) + ", seed " +
                            std::to_string(seed) + "): " + e.what());
            }
            MetricsRecord rec = evaluate_params(res.params, dataset.test, modality, regions);
            rec.method = method;
            rec.seed = seed;
            out.records.push_back(std::move(rec));
            out.logs.push_back({method, modality, seed, std::move(res.log)});
        }
    }
    return out;
}

}  // namespace

MatrixResult run_matrix(const data::Dataset& dataset, const MatrixConfig& config) {
    if (config.seeds.empty()) throw ConfigError("run_matrix: no seeds");
    if (config.methods.empty()) throw ConfigError("run_matrix: no methods");
    for (const auto& m : config.methods) (void)method_train_config(m, config.train);

    std::vector<SeedResults> per_seed(config.seeds.size());
    int threads = std::max(1, config.threads);
    if (threads == 1) {
        for (size_t i = 0; i < config.seeds.size(); ++i)
            per_seed[i] = run_seed(dataset, config, config.seeds[i]);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(config.seeds.size());
        size_t next = 0;
        std::mutex mu;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                while (true) {
                    size_t i;
                    {
                        std::lock_guard<std::mutex> lock(mu);
                        if (next >= config.seeds.size()) return;
                        i = next++;
                    }
                    try {
                        per_seed[i] = run_seed(dataset, config, config.seeds[i]);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    MatrixResult result;
    for (auto& sr : per_seed) {
        for (auto& r : sr.records) result.records.push_back(std::move(r));
        for (auto& l : sr.logs) result.logs.push_back(std::move(l));
    }

    // summaries keyed by (method, modality) in declaration order
    auto collect = [&result](const std::string& method, int modality) {
        std::vector<const MetricsRecord*> out;
        for (const auto& r : result.records)
            if (r.method == method && r.modality == modality) out.push_back(&r);
        return out;
    };
    auto summarize = [&](const std::string& method, int modality,
                         const std::vector<double>* baseline) {
        auto recs = collect(method, modality);
        if (recs.empty()) return;
        SummaryRow row;
        row.method = method;
        row.modality = modality;
        for (size_t reg = 0; reg < recs[0]->region_dice.size(); ++reg) {
            double m = 0.0;
            for (const auto* r : recs) m += r->region_dice[reg].second;
            row.region_mean.emplace_back(recs[0]->region_dice[reg].first,
                                         m / static_cast<double>(recs.size()));
        }
        double m = 0.0;
        for (const auto* r : recs) m += r->mean_dice;
        row.mean_dice = m / static_cast<double>(recs.size());
        if (baseline && recs.size() >= 2) {
            std::vector<double> scores;
            for (const auto* r : recs) scores.push_back(r->mean_dice);
            try {
                stats::TTestResult tt = stats::paired_t_test(scores, *baseline);
                row.has_test = true;
                row.t = tt.t;
                row.p = tt.p;
                row.significant = tt.p <= 0.05;
            } catch (const DegenerateInputError&) {
                row.has_test = false;
            }
        }
        result.summary.push_back(std::move(row));
    };

    for (int modality : config.modalities) {
        std::vector<double> baseline;
        for (std::uint64_t seed : config.seeds)
            for (const auto& r : result.records)
                if (r.method == "unimodal" && r.modality == modality && r.seed == seed)
                    baseline.push_back(r.mean_dice);
        bool have_baseline = baseline.size() == config.seeds.size();
        if (config.include_teacher)
            summarize("teacher", -1, have_baseline ? &baseline : nullptr);
        for (const auto& method : config.methods)
            summarize(method, modality,
                      have_baseline && method != "unimodal" ? &baseline : nullptr);
    }
    return result;
}

void write_records_csv(const std::string& path, const MatrixResult& result) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    if (result.records.empty()) throw ConfigError("no records to write");
    f << "method,modality,seed";
    for (const auto& [name, _] : result.records[0].region_dice) f << ',' << name;
    f << ",mean_dice\n";
    char buf[64];
    for (const auto& r : result.records) {
        f << r.method << ',' << r.modality << ',' << r.seed;
        for (const auto& [_, v] : r.region_dice) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            f << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.17g\n", r.mean_dice);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path);
}

void write_summary_csv(const std::string& path, const MatrixResult& result) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    if (result.summary.empty()) throw ConfigError("no summary to write");
    f << "method,modality";
    for (const auto& [name, _] : result.summary[0].region_mean) f << ',' << name;
    f << ",mean_dice,t,p,significant\n";
    char buf[64];
    for (const auto& r : result.summary) {
        f << r.method << ',' << r.modality;
        for (const auto& [_, v] : r.region_mean) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            f << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.17g", r.mean_dice);
        f << buf;
        if (r.has_test) {
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%s\n", r.t, r.p,
                          r.significant ? "*" : "");
            f << buf;
        } else {
            f << ",,,\n";
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

void write_result_json(const std::string& path, const MatrixResult& result) {
    json records = json::array();
    for (const auto& r : result.records) {
        json reg = json::object();
        for (const auto& [name, v] : r.region_dice) reg[name] = v;
        records.push_back({{"method", r.method},
                           {"modality", r.modality},
                           {"seed", r.seed},
                           {"region_dice", reg},
                           {"mean_dice", r.mean_dice}});
    }
    json summary = json::array();
    for (const auto& r : result.summary) {
        json reg = json::object();
        for (const auto& [name, v] : r.region_mean) reg[name] = v;
        json row = {{"method", r.method},
                    {"modality", r.modality},
                    {"region_mean", reg},
                    {"mean_dice", r.mean_dice}};
        if (r.has_test) {
            row["t"] = r.t;
            row["p"] = r.p;
            row["significant"] = r.significant;
        }
        summary.push_back(row);
    }
    json out = {{"records", records}, {"summary", summary}};
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << out.dump(2) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace eval
}  // namespace protokd
