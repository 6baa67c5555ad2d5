#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "protokd/losses.hpp"
#include "protokd/proto.hpp"

using namespace protokd;

TEST_CASE("cross entropy of zero logits is log K") {
    LabelMap labels{{0, 1, 0, 1}};
    CHECK(losses::cross_entropy(Tensor::zeros({4, 2}), labels) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    LabelMap labels4{{0, 1, 2, 3}};
    CHECK(losses::cross_entropy(Tensor::zeros({4, 4}), labels4) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy hand-evaluated case") {
    Tensor logits({1, 2}, {2.0, 0.0});
    LabelMap labels{{0}};
    double want = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    CHECK(losses::cross_entropy(logits, labels) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cross entropy is invariant to per-pixel logit shifts") {
    Rng rng(1);
    Tensor logits = oracle::random_tensor(rng, {6, 3});
    LabelMap labels = oracle::random_labels(rng, 6, 3);
    double base = losses::cross_entropy(logits, labels);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) logits.at(i, j) += 1.5 * (i - 2);
    CHECK(std::abs(losses::cross_entropy(logits, labels) - base) < 1e-12);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    CHECK_THROWS_AS(losses::cross_entropy(Tensor::zeros({2, 2}), LabelMap{{0, 2}}),
                    DegenerateInputError);
}

TEST_CASE("dice loss near zero for one-hot-sharp predictions matching labels") {
    LabelMap labels{{0, 1, 1, 0}};
    Tensor logits = Tensor::zeros({4, 2});
    for (int i = 0; i < 4; ++i) logits.at(i, labels.at(i)) = 80.0;
    CHECK(losses::dice_loss(logits, labels) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dice loss matches naive oracle on uniform and random inputs") {
    LabelMap labels{{0, 0, 1, 1}};
    Tensor zero = Tensor::zeros({4, 2});
    CHECK(std::abs(losses::dice_loss(zero, labels) -
                   oracle::dice_loss(zero, labels, losses::kDiceEps)) < 1e-12);
    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor logits = oracle::random_tensor(rng, {9, 3});
        LabelMap lab = oracle::random_labels(rng, 9, 3);
        CHECK(std::abs(losses::dice_loss(logits, lab) -
                       oracle::dice_loss(logits, lab, losses::kDiceEps)) < 1e-12);
    }
}

TEST_CASE("dice loss near one on disjoint prediction") {
    LabelMap labels{{0, 0, 0, 0}};
    Tensor logits = Tensor::zeros({4, 2});
    for (int i = 0; i < 4; ++i) logits.at(i, 1) = 80.0;
    CHECK(losses::dice_loss(logits, labels) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("dice loss stays in [0, 1] on random inputs") {
    Rng rng(4);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor logits = oracle::random_tensor(rng, {8, 3}, -6.0, 6.0);
        LabelMap lab = oracle::random_labels(rng, 8, 3);
        double v = losses::dice_loss(logits, lab);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-9);
    }
}

TEST_CASE("seg loss is cross entropy plus dice") {
    LabelMap labels{{0, 1, 0, 1}};
    Tensor zero = Tensor::zeros({4, 2});
    double want = std::log(2.0) + oracle::dice_loss(zero, labels, losses::kDiceEps);
    CHECK(losses::seg_loss(zero, labels) == doctest::Approx(want).epsilon(1e-12));

    // sharp correct predictions give a near-zero seg loss
    Tensor sharp = Tensor::zeros({4, 2});
    for (int i = 0; i < 4; ++i) sharp.at(i, labels.at(i)) = 80.0;
    CHECK(losses::seg_loss(sharp, labels) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("raising the correct-class logit lowers seg loss") {
    Rng rng(5);
    Tensor logits = oracle::random_tensor(rng, {5, 3});
    LabelMap labels = oracle::random_labels(rng, 5, 3);
    double before = losses::seg_loss(logits, labels);
    logits.at(2, labels.at(2)) += 0.5;
    CHECK(losses::seg_loss(logits, labels) < before);
}

TEST_CASE("kd loss of identical logits is zero") {
    Rng rng(6);
    Tensor p = oracle::random_tensor(rng, {7, 4});
    for (double t : {0.5, 1.0, 10.0, 100.0})
        CHECK(std::abs(losses::kd_loss(p, p, t)) < 1e-12);
}

TEST_CASE("kd loss matches direct KL oracle") {
    Tensor s({1, 2}, {1.0, 0.0});
    Tensor t({1, 2}, {0.0, 0.0});
    CHECK(losses::kd_loss(s, t, 1.0) ==
          doctest::Approx(oracle::kd_loss(s, t, 1.0)).epsilon(1e-12));
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor a = oracle::random_tensor(rng, {6, 3});
        Tensor b = oracle::random_tensor(rng, {6, 3});
        CHECK(std::abs(losses::kd_loss(a, b, 10.0) - oracle::kd_loss(a, b, 10.0)) < 1e-12);
        CHECK(std::abs(losses::kd_loss(a, b, 2.0, losses::KlDirection::Classic) -
                       oracle::kd_loss(a, b, 2.0, false)) < 1e-12);
        CHECK(std::abs(losses::kd_loss(a, b, 2.0, losses::KlDirection::AsPaper, true) -
                       oracle::kd_loss(a, b, 2.0, true, true)) < 1e-12);
    }
}

TEST_CASE("kd loss is non-negative and flattens as temperature grows") {
    Rng rng(8);
    Tensor a = oracle::random_tensor(rng, {5, 3});
    Tensor b = oracle::random_tensor(rng, {5, 3});
    double prev = losses::kd_loss(a, b, 1.0);
    CHECK(prev >= -1e-12);
    for (double t : {2.0, 5.0, 10.0, 30.0, 100.0}) {
        double cur = losses::kd_loss(a, b, t);
        CHECK(cur >= -1e-12);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK(prev < 1e-3);
    CHECK_THROWS_AS(losses::kd_loss(a, Tensor::zeros({4, 3}), 10.0), ShapeError);
}

TEST_CASE("total loss weighting") {
    losses::LossWeights w;  // alpha 10, beta 0.1
    CHECK(losses::total_loss(1.0, 0.2, 0.5, w) == doctest::Approx(3.05).epsilon(1e-12));
    w.alpha = 0.0;
    w.beta = 0.0;
    CHECK(losses::total_loss(0.77, 123.0, 9.0, w) == doctest::Approx(0.77));
    w.alpha = -1.0;
    CHECK_THROWS_AS(losses::total_loss(1, 1, 1, w), ConfigError);
}

TEST_CASE("total loss gradient decomposes into weighted component gradients") {
    Rng rng(9);
    const int n = 6, k = 3, d = 4;
    Tensor logits = oracle::random_tensor(rng, {n, k});
    Tensor feats = oracle::random_tensor(rng, {n, d});
    Tensor teacher_logits = oracle::random_tensor(rng, {n, k});
    Tensor teacher_feats = oracle::random_tensor(rng, {n, d});
    LabelMap labels = oracle::random_labels(rng, n, k);
    losses::LossWeights w;

    auto grad_of = [&](int which) {
        Graph g;
        NodeId lg = g.input("logits", logits.shape);
        NodeId ft = g.input("feats", feats.shape);
        NodeId seg = losses::seg_loss_node(g, lg, labels, k);
        NodeId kd = losses::kd_loss_node(g, lg, teacher_logits, w.temperature);
        NodeId pr = proto::i2fv_pipeline_node(g, ft, teacher_feats, labels, k);
        if (which == 0) g.set_output(seg);
        if (which == 1) g.set_output(kd);
        if (which == 2) g.set_output(pr);
        if (which == 3) g.set_output(losses::total_loss_node(g, seg, kd, pr, w));
        return backward(g, {{"logits", logits}, {"feats", feats}});
    };
    auto gseg = grad_of(0), gkd = grad_of(1), gpr = grad_of(2), gtot = grad_of(3);
    for (const char* name : {"logits", "feats"}) {
        const auto &a = gseg.at(name), &b = gkd.at(name), &c = gpr.at(name),
                   &t = gtot.at(name);
        for (size_t i = 0; i < t.data.size(); ++i)
            CHECK(std::abs(t.data[i] - (a.data[i] + w.alpha * b.data[i] + w.beta * c.data[i])) <
                  1e-10);
    }
}

TEST_CASE("loss gradients pass grad_check") {
    Rng rng(10);
    Tensor logits = oracle::random_tensor(rng, {8, 3});
    LabelMap labels = oracle::random_labels(rng, 8, 3);
    Tensor teacher = oracle::random_tensor(rng, {8, 3});

    Graph g;
    NodeId in = g.input("logits", logits.shape);
    NodeId seg = losses::seg_loss_node(g, in, labels, 3);
    NodeId kd = losses::kd_loss_node(g, in, teacher, 10.0);
    g.set_output(g.add(seg, kd));
    GradCheckReport rep = grad_check(g, {{"logits", logits}}, 1e-5, 1e-4);
    CHECK_MESSAGE(rep.pass, "max rel err ", rep.max_rel_err);
}
