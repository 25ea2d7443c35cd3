#include <cmath>
#include <functional>

#include "doctest.h"

#include "ddrive/adam.hpp"
#include "ddrive/layers.hpp"
#include "ddrive/rng.hpp"

using namespace dd;

namespace {

using DT = TensorT<double>;

DT random_dtensor(std::vector<int> shape, Rng& rng) {
    DT t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-1.0f, 1.0f);
    return t;
}

// Central finite differences of a scalar loss w.r.t. one tensor.
void check_against_fd(DT& param, const DT& analytic, const std::function<double()>& loss) {
    REQUIRE(param.same_shape(analytic));
    const double h = 1e-5;
    for (int i = 0; i < param.size(); ++i) {
        double orig = param.data[i];
        param.data[i] = orig + h;
        double lp = loss();
        param.data[i] = orig - h;
        double lm = loss();
        param.data[i] = orig;
        double num = (lp - lm) / (2 * h);
        double ana = analytic.data[i];
        double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
        REQUIRE(std::abs(num - ana) / denom <= 1e-4);
    }
}

// Random linear functional of the output makes the loss scalar but generic.
double dot_loss(const DT& out, const DT& coef) {
    double acc = 0;
    for (int i = 0; i < out.size(); ++i) acc += out.data[i] * coef.data[i];
    return acc;
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(21);
    for (Padding pad : {Padding::Valid, Padding::Same}) {
        for (Activation act : {Activation::Linear, Activation::Relu}) {
            LayerSpec layer{LayerKind::Conv2D, 3, 3, 2, 2, pad, 2, 3, act};
            DT in = random_dtensor({5, 6, 2}, rng);
            DT w = random_dtensor({3, 3, 2, 3}, rng);
            DT b = random_dtensor({3}, rng);
            DT out = conv2d_forward(in, layer, w, b);
            DT coef = random_dtensor(out.shape, rng);

            ConvGrads<double> g = conv2d_backward(in, layer, w, b, out, coef);
            auto loss = [&] { return dot_loss(conv2d_forward(in, layer, w, b), coef); };
            check_against_fd(w, g.dw, loss);
            check_against_fd(b, g.db, loss);
            check_against_fd(in, g.dx, loss);
        }
    }
}

TEST_CASE("separable conv gradients match finite differences") {
    Rng rng(22);
    for (Padding pad : {Padding::Valid, Padding::Same}) {
        LayerSpec layer{LayerKind::SeparableConv2D, 3, 3, 1, 1, pad, 3, 4, Activation::Relu};
        DT in = random_dtensor({5, 5, 3}, rng);
        DT dw = random_dtensor({3, 3, 3}, rng);
        DT pw = random_dtensor({3, 4}, rng);
        DT b = random_dtensor({4}, rng);
        DT mid;
        DT out = separable_conv2d_forward(in, layer, dw, pw, b, &mid);
        DT coef = random_dtensor(out.shape, rng);

        ConvGrads<double> g = separable_conv2d_backward(in, layer, dw, pw, mid, out, coef);
        auto loss = [&] { return dot_loss(separable_conv2d_forward(in, layer, dw, pw, b), coef); };
        check_against_fd(dw, g.dw, loss);
        check_against_fd(pw, g.dw2, loss);
        check_against_fd(b, g.db, loss);
        check_against_fd(in, g.dx, loss);
    }
}

TEST_CASE("dense gradients match finite differences") {
    Rng rng(23);
    for (Activation act : {Activation::Linear, Activation::Relu}) {
        DT x = random_dtensor({10}, rng);
        DT w = random_dtensor({10, 7}, rng);
        DT b = random_dtensor({7}, rng);
        DT out = dense_forward(x, w, b, act);
        DT coef = random_dtensor(out.shape, rng);

        DenseGrads<double> g = dense_backward(x, w, out, coef, act);
        auto loss = [&] { return dot_loss(dense_forward(x, w, b, act), coef); };
        check_against_fd(w, g.dw, loss);
        check_against_fd(x, g.dx, loss);
        // bias gradient equals dz; reuse the dense path via the bias tensor
        DT db_acc({7});
        DT dw_acc(w.shape);
        dense_backward_acc(x, w, out, coef, act, dw_acc, db_acc, false);
        check_against_fd(b, db_acc, loss);
    }
}

TEST_CASE("mse gradient matches finite differences and vanishes at the target") {
    Rng rng(24);
    DT pred = random_dtensor({6}, rng);
    DT target = random_dtensor({6}, rng);
    DT g = mse_grad(pred, target);
    auto loss = [&] { return static_cast<double>(mse_loss(pred, target)); };
    check_against_fd(pred, g, loss);

    DT at_target = mse_grad(target, target);
    for (double v : at_target.data) CHECK(v == 0.0);
}

TEST_CASE("dense zero upstream gradient yields zero parameter gradients") {
    Rng rng(25);
    DT x = random_dtensor({5}, rng);
    DT w = random_dtensor({5, 3}, rng);
    DT b = random_dtensor({3}, rng);
    DT out = dense_forward(x, w, b, Activation::Linear);
    DT zero(out.shape);
    DenseGrads<double> g = dense_backward(x, w, out, zero, Activation::Linear);
    for (double v : g.dw.data) CHECK(v == 0.0);
    for (double v : g.db.data) CHECK(v == 0.0);
}

TEST_CASE("adam single-weight hand example") {
    Tensor w({1}, {1.0f});
    Tensor g({1}, {0.5f});
    AdamState st = make_adam({&w});
    adam_step({&w}, {&g}, st);
    // mhat = 0.5, vhat = 0.25, update = lr * 0.5 / (0.5 + eps) ~= lr
    CHECK(w.data[0] == doctest::Approx(1.0f - 1e-4f).epsilon(1e-6));
    CHECK(st.t == 1);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    Rng rng(26);
    Tensor w({8});
    for (auto& v : w.data) v = rng.uniform(-1.0f, 1.0f);
    Tensor before = w;
    Tensor g({8});
    AdamState st = make_adam({&w});
    for (int i = 0; i < 5; ++i) adam_step({&w}, {&g}, st);
    for (int i = 0; i < w.size(); ++i) CHECK(w.data[i] == before.data[i]);
}

TEST_CASE("adam rejects non-finite gradients and mismatched shapes") {
    Tensor w({2});
    Tensor g({2}, {std::nanf(""), 0.0f});
    AdamState st = make_adam({&w});
    CHECK_THROWS_AS(adam_step({&w}, {&g}, st), std::runtime_error);

    Tensor wrong({3});
    AdamState st2 = make_adam({&w});
    CHECK_THROWS_AS(adam_step({&w}, {&wrong}, st2), std::invalid_argument);
}

TEST_CASE("adam is deterministic across identical runs") {
    auto run = [] {
        Rng rng(27);
        Tensor w({16});
        for (auto& v : w.data) v = rng.uniform(-1.0f, 1.0f);
        AdamState st = make_adam({&w});
        for (int i = 0; i < 20; ++i) {
            Tensor g({16});
            for (auto& v : g.data) v = rng.uniform(-0.1f, 0.1f);
            adam_step({&w}, {&g}, st);
        }
        return w;
    };
    Tensor a = run(), b = run();
    for (int i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
}
