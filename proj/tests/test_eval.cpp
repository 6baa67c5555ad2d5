#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "protokd/eval.hpp"

using namespace protokd;

TEST_CASE("default regions cover every foreground class plus the union") {
    auto r = eval::default_regions(3);
    REQUIRE(r.size() == 3);
    CHECK(r[0].name == "c1");
    CHECK(r[0].classes == std::vector<int>{1});
    CHECK(r[1].name == "c2");
    CHECK(r[1].classes == std::vector<int>{2});
    CHECK(r[2].name == "whole");
    CHECK(r[2].classes == std::vector<int>{1, 2});
    CHECK_THROWS_AS(eval::default_regions(1), ConfigError);
}

TEST_CASE("dice score basics") {
    LabelMap a{{1, 1, 0, 0}};
    LabelMap b{{1, 1, 0, 0}};
    CHECK(eval::dice_score(a, b, {1}) == 1.0);

    LabelMap c{{0, 0, 1, 1}};
    CHECK(eval::dice_score(a, c, {1}) == 0.0);

    LabelMap d{{1, 0, 0, 0}};
    // |P|=1, |G|=2, overlap 1 -> 2*1/3
    CHECK(eval::dice_score(d, a, {1}) == doctest::Approx(2.0 / 3.0));

    // both empty counts as a perfect match, exactly one empty as a miss
    LabelMap e{{0, 0, 0, 0}};
    CHECK(eval::dice_score(e, e, {1}) == 1.0);
    CHECK(eval::dice_score(a, e, {1}) == 0.0);
    CHECK(eval::dice_score(e, a, {1}) == 0.0);

    // symmetric in its arguments
    CHECK(eval::dice_score(d, a, {1}) == eval::dice_score(a, d, {1}));

    // union region treats member classes interchangeably
    LabelMap f{{1, 2, 0, 0}};
    CHECK(eval::dice_score(f, a, {1, 2}) == 1.0);

    CHECK_THROWS_AS(eval::dice_score(a, LabelMap{{1, 1}}, {1}), ShapeError);
    CHECK_THROWS_AS(eval::dice_score(a, b, {}), ConfigError);
}

TEST_CASE("predicted labels are the per-pixel argmax") {
    Tensor logits({3, 3}, {0.1, 0.9, 0.2,
                           2.0, -1.0, 0.0,
                           0.0, 0.5, 0.5});
    LabelMap p = eval::predict_labels(logits);
    CHECK(p.labels == std::vector<int>{1, 0, 1});  // earliest index wins ties
    CHECK_THROWS_AS(eval::predict_labels(Tensor::zeros({4})), ShapeError);
}

TEST_CASE("method names map to the expected ablation settings") {
    trainer::TrainConfig base;
    auto uni = eval::method_train_config("unimodal", base);
    CHECK_FALSE(uni.ablation.use_kd);
    CHECK_FALSE(uni.ablation.use_proto);
    auto kd = eval::method_train_config("+kd", base);
    CHECK(kd.ablation.use_kd);
    CHECK_FALSE(kd.ablation.use_proto);
    auto pr = eval::method_train_config("+proto", base);
    CHECK_FALSE(pr.ablation.use_kd);
    CHECK(pr.ablation.use_proto);
    auto both = eval::method_train_config("protokd", base);
    CHECK(both.ablation.use_kd);
    CHECK(both.ablation.use_proto);
    CHECK(both.proto_mode == proto::VariationMode::IntraInter);
    auto intra = eval::method_train_config("protokd-intra", base);
    CHECK(intra.ablation.use_kd);
    CHECK(intra.ablation.use_proto);
    CHECK(intra.proto_mode == proto::VariationMode::IntraOnly);
    CHECK_THROWS_AS(eval::method_train_config("bogus", base), ConfigError);
}

TEST_CASE("matrix run produces one record per cell and coherent summaries") {
    data::GeneratorConfig dc = data::GeneratorConfig::defaults();
    dc.height = 8;
    dc.width = 8;
    dc.train_count = 8;
    dc.val_count = 2;
    dc.test_count = 4;
    data::Dataset d = data::generate(dc);

    eval::MatrixConfig mc;
    mc.methods = {"unimodal", "protokd"};
    mc.modalities = {0};
    mc.seeds = {1, 2, 3};
    mc.model.hidden = 4;
    mc.model.classes = dc.classes;
    mc.train.epochs = 3;
    mc.train.batch_size = 4;
    mc.threads = 3;
    eval::MatrixResult r = eval::run_matrix(d, mc);

    // 3 seeds x (teacher + 2 student methods)
    REQUIRE(r.records.size() == 9);
    REQUIRE(r.logs.size() == 9);
    int teachers = 0, students = 0;
    for (const auto& rec : r.records) {
        CHECK(rec.region_dice.size() == 3);
        double m = 0.0;
        for (const auto& [_, v] : rec.region_dice) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            m += v;
        }
        CHECK(rec.mean_dice == doctest::Approx(m / 3.0).epsilon(1e-12));
        if (rec.method == "teacher") {
            ++teachers;
            CHECK(rec.modality == -1);
        } else {
            ++students;
            CHECK(rec.modality == 0);
        }
    }
    CHECK(teachers == 3);
    CHECK(students == 6);

    REQUIRE(r.summary.size() == 3);  // teacher, unimodal, protokd
    for (const auto& row : r.summary) {
        double m = 0.0;
        int count = 0;
        for (const auto& rec : r.records)
            if (rec.method == row.method && rec.modality == row.modality) {
                m += rec.mean_dice;
                ++count;
            }
        CHECK(count == 3);
        CHECK(row.mean_dice == doctest::Approx(m / 3.0).epsilon(1e-12));
        if (row.method == "unimodal")
            CHECK_FALSE(row.has_test);
    }

    // unimodal rows must show exactly zero distillation losses
    for (const auto& log : r.logs)
        if (log.method == "unimodal")
            for (const auto& e : log.log.epochs) {
                CHECK(e.l_kd == 0.0);
                CHECK(e.l_proto == 0.0);
            }

    // threaded and sequential runs agree bit for bit
    eval::MatrixConfig seq = mc;
    seq.threads = 1;
    eval::MatrixResult r2 = eval::run_matrix(d, seq);
    REQUIRE(r2.records.size() == r.records.size());
    for (size_t i = 0; i < r.records.size(); ++i) {
        CHECK(r.records[i].method == r2.records[i].method);
        CHECK(r.records[i].seed == r2.records[i].seed);
        CHECK(r.records[i].mean_dice == r2.records[i].mean_dice);
        for (size_t j = 0; j < r.records[i].region_dice.size(); ++j)
            CHECK(r.records[i].region_dice[j].second == r2.records[i].region_dice[j].second);
    }

    // writers produce parseable artifacts
    const char* rc = "test_eval_records.csv";
    const char* sc = "test_eval_summary.csv";
    const char* js = "test_eval_result.json";
    eval::write_records_csv(rc, r);
    eval::write_summary_csv(sc, r);
    eval::write_result_json(js, r);
    std::ifstream f(rc);
    std::string line;
    std::getline(f, line);
    CHECK(line == "method,modality,seed,c1,c2,whole,mean_dice");
    int rows = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 9);
    f.close();
    std::ifstream f2(sc);
    std::getline(f2, line);
    CHECK(line == "method,modality,c1,c2,whole,mean_dice,t,p,significant");
    f2.close();
    std::remove(rc);
    std::remove(sc);
    std::remove(js);
}

TEST_CASE("matrix run validates its configuration") {
    data::GeneratorConfig dc = data::GeneratorConfig::defaults();
    dc.height = 8;
    dc.width = 8;
    dc.train_count = 4;
    dc.val_count = 1;
    dc.test_count = 1;
    data::Dataset d = data::generate(dc);
    eval::MatrixConfig mc;
    mc.model.hidden = 4;
    mc.train.epochs = 1;
    mc.seeds = {};
    CHECK_THROWS_AS(eval::run_matrix(d, mc), ConfigError);
    mc.seeds = {1};
    mc.methods = {"nope"};
    CHECK_THROWS_AS(eval::run_matrix(d, mc), ConfigError);
}
