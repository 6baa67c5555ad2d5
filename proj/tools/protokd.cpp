#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protokd/config.hpp"
#include "protokd/data.hpp"
#include "protokd/eval.hpp"
#include "protokd/gradsuite.hpp"
#include "protokd/model.hpp"
#include "protokd/trainer.hpp"

namespace fs = std::filesystem;
using namespace protokd;
using nlohmann::json;

namespace {

// leftover tokens like "--train.alpha=5" or "--train.alpha 5" become
// dotted-path config overrides
std::vector<std::string> extras_to_overrides(std::vector<std::string> rem) {
    // CLI11 returns remaining args in reverse order
    std::reverse(rem.begin(), rem.end());
    std::vector<std::string> out;
    for (size_t i = 0; i < rem.size(); ++i) {
        const std::string& tok = rem[i];
        if (tok.rfind("--", 0) != 0 || tok.find('.') == std::string::npos)
            throw ConfigError("unrecognized argument '" + tok +
                              "' (config overrides look like --section.key=value)");
        std::string body = tok.substr(2);
        if (body.find('=') == std::string::npos) {
            if (i + 1 >= rem.size())
                throw ConfigError("override '" + tok + "' is missing a value");
            body += "=" + rem[++i];
        }
        out.push_back(body);
    }
    return out;
}

int matrix_threads(size_t seeds) {
    unsigned hw = std::thread::hardware_concurrency();
    int threads = hw == 0 ? 1 : static_cast<int>(hw);
    if (const char* env = std::getenv("PROTOKD_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) threads = std::min(threads, cap);
    }
    return std::min<int>(threads, static_cast<int>(seeds));
}

trainer::AblationMask parse_ablation(const std::string& s) {
    if (s == "none") return {false, false};
    if (s == "kd") return {true, false};
    if (s == "proto") return {false, true};
    if (s == "both") return {true, true};
    throw ConfigError("--ablation must be one of none|kd|proto|both, got '" + s + "'");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_config_used(const std::string& dir, const config::ExperimentConfig& cfg) {
    std::ofstream f(dir + "/config_used.json");
    if (!f) throw IoError("cannot write " + dir + "/config_used.json");
    f << cfg.to_json().dump(2) << '\n';
}

int cmd_gen_data(const config::ExperimentConfig& cfg, const std::string& out) {
    data::Dataset d = data::generate(cfg.generator);
    data::save_dataset(out, d);
    std::printf("wrote %s (%d train / %d val / %d test samples)\n", out.c_str(),
                cfg.generator.train_count, cfg.generator.val_count, cfg.generator.test_count);
    return 0;
}

int cmd_train_teacher(const config::ExperimentConfig& cfg, const std::string& data_path,
                      const std::string& out, std::uint64_t seed) {
    data::Dataset d = data::load_dataset(data_path);
    model::SegNetConfig mcfg = cfg.teacher_model_config();
    mcfg.seed = seed;
    trainer::TrainConfig tcfg = cfg.train;
    tcfg.seed = seed;
    trainer::TrainResult res = trainer::train_teacher(d, mcfg, tcfg);
    ensure_dir(out);
    model::save_checkpoint(out + "/teacher.ckpt", res.params);
    trainer::write_train_log_csv(out + "/teacher_log.csv", res.log);
    trainer::write_train_log_json(out + "/teacher_log.json", res.log);
    write_config_used(out, cfg);
    std::printf("teacher trained for %d epochs, best epoch %d (val dice %.4f)\n",
                static_cast<int>(res.log.epochs.size()), res.log.best_epoch,
                res.log.epochs.empty()
                    ? 0.0
                    : res.log.epochs[static_cast<size_t>(res.log.best_epoch)].val_dice_mean);
    return 0;
}

int cmd_distill(const config::ExperimentConfig& cfg, const std::string& data_path,
                const std::string& teacher_path, int modality, const std::string& ablation,
                const std::string& out, std::uint64_t seed) {
    data::Dataset d = data::load_dataset(data_path);
    model::SegNetParams teacher = model::load_checkpoint(teacher_path);
    model::SegNetConfig mcfg = cfg.student_model_config();
    mcfg.seed = seed;
    trainer::TrainConfig tcfg = cfg.train;
    tcfg.seed = seed;
    tcfg.ablation = parse_ablation(ablation);
    trainer::TrainResult res = trainer::distill_student(d, teacher, modality, mcfg, tcfg);
    ensure_dir(out);
    model::save_checkpoint(out + "/student.ckpt", res.params);
    trainer::write_train_log_csv(out + "/student_log.csv", res.log);
    trainer::write_train_log_json(out + "/student_log.json", res.log);
    write_config_used(out, cfg);
    std::printf("student (modality %d, ablation %s) best epoch %d\n", modality, ablation.c_str(),
                res.log.best_epoch);
    return 0;
}

int cmd_evaluate(const config::ExperimentConfig& cfg, const std::string& data_path,
                 const std::string& ckpt_path, int modality, const std::string& out) {
    data::Dataset d = data::load_dataset(data_path);
    model::SegNetParams params = model::load_checkpoint(ckpt_path);
    if (modality == -2)  // unset: full input for multi-channel models, modality 0 otherwise
        modality = params.config.in_channels > 1 ? -1 : 0;
    auto regions = eval::default_regions(d.config.classes);
    eval::MetricsRecord rec = eval::evaluate_params(params, d.test, modality, regions);
    rec.method = params.config.in_channels > 1 ? "teacher" : "student";

    ensure_dir(out);
    std::ofstream f(out + "/eval.csv");
    if (!f) throw IoError("cannot write " + out + "/eval.csv");
    f << "region,dice\n";
    char buf[64];
    for (const auto& [name, v] : rec.region_dice) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g\n", name.c_str(), v);
        f << buf;
        std::printf("%-8s %.4f\n", name.c_str(), v);
    }
    std::snprintf(buf, sizeof(buf), "mean,%.17g\n", rec.mean_dice);
    f << buf;
    std::printf("%-8s %.4f\n", "mean", rec.mean_dice);

    json j = {{"method", rec.method}, {"modality", rec.modality}, {"mean_dice", rec.mean_dice}};
    for (const auto& [name, v] : rec.region_dice) j["region_dice"][name] = v;
    std::ofstream jf(out + "/eval.json");
    jf << j.dump(2) << '\n';
    return 0;
}

int cmd_ablate(const config::ExperimentConfig& cfg, const std::string& data_path,
               const std::string& out) {
    data::Dataset d = data::load_dataset(data_path);
    eval::MatrixConfig mc;
    mc.methods = cfg.methods;
    // intra-only prototype variant rides along for the intra/inter comparison
    if (std::find(mc.methods.begin(), mc.methods.end(), "protokd") != mc.methods.end() &&
        std::find(mc.methods.begin(), mc.methods.end(), "protokd-intra") == mc.methods.end())
        mc.methods.push_back("protokd-intra");
    mc.modalities = cfg.modalities;
    mc.seeds = cfg.seeds;
    mc.model = cfg.teacher_model_config();
    mc.train = cfg.train;
    mc.threads = matrix_threads(cfg.seeds.size());
    eval::MatrixResult res = eval::run_matrix(d, mc);

    ensure_dir(out);
    ensure_dir(out + "/logs");
    eval::write_records_csv(out + "/ablation_records.csv", res);
    eval::write_summary_csv(out + "/ablation_summary.csv", res);
    eval::write_result_json(out + "/ablation.json", res);
    for (const auto& cell : res.logs) {
        std::string tag = cell.method + (cell.modality < 0 ? ""
                                                           : "_m" + std::to_string(cell.modality)) +
                          "_seed" + std::to_string(cell.seed);
        trainer::write_train_log_csv(out + "/logs/" + tag + ".csv", cell.log);
    }
    write_config_used(out, cfg);

    for (const auto& row : res.summary) {
        std::printf("%-14s mod=%2d  mean dice %.4f", row.method.c_str(), row.modality,
                    row.mean_dice);
        if (row.has_test) std::printf("  p=%.4f%s", row.p, row.significant ? " *" : "");
        std::printf("\n");
    }
    return 0;
}

int cmd_gradcheck(int instances, std::uint64_t seed) {
    auto results = gradsuite::run(instances, seed);
    std::map<std::string, std::pair<int, double>> groups;  // pass count, worst err
    int failures = 0;
    for (const auto& r : results) {
        std::string group = r.name.substr(0, r.name.find('#'));
        auto& g = groups[group];
        g.first += r.pass ? 1 : 0;
        g.second = std::max(g.second, r.max_rel_err);
        if (!r.pass) {
            ++failures;
            std::printf("FAIL %s  max rel err %.3g\n", r.name.c_str(), r.max_rel_err);
        }
    }
    for (const auto& [name, g] : groups)
        std::printf("%-16s %d/%d pass, worst rel err %.3g\n", name.c_str(), g.first, instances,
                    g.second);
    if (failures) {
        std::printf("gradcheck: %d failures\n", failures);
        return 1;
    }
    std::printf("gradcheck: all %zu checks pass\n", results.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prototype knowledge distillation lab"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, teacher_path, ckpt_path;
    std::string ablation = "both";
    int modality = 0;
    int eval_modality = -2;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int gc_instances = 20;
    std::uint64_t gc_seed = 7;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")->required();
        cmd->allow_extras();
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_config(gen);
    gen->add_option("--out", out_path, "dataset output file")->required();

    CLI::App* teach = app.add_subcommand("train-teacher", "pre-train the multi-modality teacher");
    add_config(teach);
    teach->add_option("--data", data_path, "dataset file")->required();
    teach->add_option("--out", out_path, "output directory")->required();
    teach->add_option("--seed", seed, "training seed (default: first config seed)")
        ->each([&](const std::string&) { seed_set = true; });

    CLI::App* dist = app.add_subcommand("distill", "train a single-modality student");
    add_config(dist);
    dist->add_option("--data", data_path, "dataset file")->required();
    dist->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
    dist->add_option("--modality", modality, "student input modality")->required();
    dist->add_option("--ablation", ablation, "none|kd|proto|both (default both)");
    dist->add_option("--out", out_path, "output directory")->required();
    dist->add_option("--seed", seed, "training seed (default: first config seed)")
        ->each([&](const std::string&) { seed_set = true; });

    CLI::App* ev = app.add_subcommand("evaluate", "Dice table for a checkpoint on the test split");
    add_config(ev);
    ev->add_option("--data", data_path, "dataset file")->required();
    ev->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    ev->add_option("--modality", eval_modality, "input modality (-1 = full multi-modality)");
    ev->add_option("--out", out_path, "output directory")->required();

    CLI::App* abl = app.add_subcommand("ablate", "loss-component ablation matrix");
    add_config(abl);
    abl->add_option("--data", data_path, "dataset file")->required();
    abl->add_option("--out", out_path, "output directory")->required();

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gc->add_option("--instances", gc_instances, "random instances per loss (default 20)");
    gc->add_option("--seed", gc_seed, "suite seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gc->parsed()) return cmd_gradcheck(gc_instances, gc_seed);

        CLI::App* active = app.get_subcommands().front();
        auto overrides = extras_to_overrides(active->remaining());
        config::ExperimentConfig cfg = config::ExperimentConfig::load(config_path, overrides);
        if (!seed_set) seed = cfg.seeds.front();

        if (gen->parsed()) return cmd_gen_data(cfg, out_path);
        if (teach->parsed()) return cmd_train_teacher(cfg, data_path, out_path, seed);
        if (dist->parsed())
            return cmd_distill(cfg, data_path, teacher_path, modality, ablation, out_path, seed);
        if (ev->parsed()) return cmd_evaluate(cfg, data_path, ckpt_path, eval_modality, out_path);
        if (abl->parsed()) return cmd_ablate(cfg, data_path, out_path);
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}
