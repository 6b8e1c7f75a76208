#include "doctest.h"
#include "softmark/error.hpp"
#include "softmark/nn.hpp"
#include "softmark/optim.hpp"
#include "test_util.hpp"

using namespace softmark;
using namespace softmark::nn;
using softmark::testing::module_grad_error;
using softmark::testing::random_tensor;

TEST_CASE("layer gradients match central differences") {
  Rng rng(11);
  SUBCASE("linear") {
    Linear l(5, 4, true, rng);
    CHECK(module_grad_error(l, random_tensor({3, 5}, rng), rng) < 1e-6);
  }
  SUBCASE("conv with padding, stride and bias") {
    Conv2d c(3, 4, {3, 2, 1, 1, true}, rng);
    CHECK(module_grad_error(c, random_tensor({2, 3, 7, 6}, rng), rng) < 1e-6);
  }
  SUBCASE("depthwise conv") {
    Conv2d c(4, 4, {3, 1, 1, 4, false}, rng);
    CHECK(module_grad_error(c, random_tensor({2, 4, 5, 5}, rng), rng) < 1e-6);
  }
  SUBCASE("grouped 1x1 conv") {
    Conv2d c(4, 6, {1, 1, 0, 2, true}, rng);
    CHECK(module_grad_error(c, random_tensor({2, 4, 3, 3}, rng), rng) < 1e-6);
  }
  SUBCASE("batchnorm 1d and 2d") {
    BatchNorm b1(4);
    CHECK(module_grad_error(b1, random_tensor({6, 4}, rng), rng) < 1e-5);
    BatchNorm b2(3);
    CHECK(module_grad_error(b2, random_tensor({2, 3, 4, 4}, rng), rng) < 1e-5);
  }
  SUBCASE("activations and pooling") {
    ReLU r;
    CHECK(module_grad_error(r, random_tensor({4, 7}, rng), rng) < 1e-6);
    ReLU6 r6;
    CHECK(module_grad_error(r6, random_tensor({4, 7}, rng, 4.0), rng) < 1e-6);
    MaxPool2d mp(2);
    CHECK(module_grad_error(mp, random_tensor({2, 3, 4, 4}, rng), rng) < 1e-6);
    GlobalAvgPool gap;
    CHECK(module_grad_error(gap, random_tensor({2, 3, 4, 4}, rng), rng) < 1e-6);
  }
  SUBCASE("residual and shuffle units") {
    auto body = std::make_unique<Sequential>();
    body->emplace<Conv2d>(4, 4, ConvOptions{3, 1, 1, 1, true}, rng).emplace<ReLU>();
    Residual res(std::move(body), nullptr);
    CHECK(module_grad_error(res, random_tensor({2, 4, 4, 4}, rng), rng) < 1e-6);

    auto b2 = std::make_unique<Sequential>();
    b2->emplace<Conv2d>(2, 2, ConvOptions{1, 1, 0, 1, true}, rng);
    ShuffleUnit split(std::move(b2), nullptr);
    CHECK(module_grad_error(split, random_tensor({2, 4, 3, 3}, rng), rng) < 1e-6);

    auto b3 = std::make_unique<Sequential>();
    b3->emplace<Conv2d>(4, 3, ConvOptions{3, 2, 1, 1, true}, rng);
    auto s3 = std::make_unique<Sequential>();
    s3->emplace<Conv2d>(4, 3, ConvOptions{1, 2, 0, 1, true}, rng);
    ShuffleUnit down(std::move(b3), std::move(s3));
    CHECK(module_grad_error(down, random_tensor({2, 4, 5, 5}, rng), rng) < 1e-6);
  }
}

TEST_CASE("channel shuffle interleaves halves and unshuffle inverts it") {
  Tensor x({1, 4, 1, 1}, {0, 1, 2, 3});
  const Tensor y = channel_shuffle(x, 2);
  CHECK(y.storage() == std::vector<double>{0, 2, 1, 3});
  CHECK(channel_unshuffle(y, 2) == x);
}

TEST_CASE("batchnorm tracks running statistics with momentum 0.1 and uses them in eval") {
  BatchNorm bn(1);
  Tensor x({4, 1}, {1, 2, 3, 4});
  bn.forward(x, Mode::train);
  auto st = state_of(bn);
  CHECK((*st[2].value)[0] == doctest::Approx(0.25));                // 0.1 * mean 2.5
  CHECK((*st[3].value)[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3));  // unbiased variance
  const Tensor y = bn.forward(Tensor({1, 1}, {0.25}), Mode::eval);
  CHECK(y[0] == doctest::Approx(0.0));
}

TEST_CASE("module state and cloning") {
  Rng rng(3);
  Sequential s;
  s.emplace<Linear>(4, 3, true, rng).emplace<BatchNorm>(3).emplace<ReLU>().emplace<Linear>(3, 2, false, rng);
  CHECK(count_parameters(s) == 4 * 3 + 3 + 3 + 3 + 3 * 2);
  const auto names = state_of(s);
  REQUIRE(names.size() == 7);
  CHECK(names[0].name == "0.weight");
  CHECK(names[0].prunable);
  CHECK(names[4].name == "1.running_mean");
  CHECK(names[4].grad == nullptr);
  auto c = s.clone();
  const Tensor x = random_tensor({5, 4}, rng);
  CHECK(c->forward(x, Mode::eval) == s.forward(x, Mode::eval));
  (*state_of(*c)[0].value)[0] += 1.0;
  CHECK(c->forward(x, Mode::eval) != s.forward(x, Mode::eval));
}

TEST_CASE("shape errors are reported") {
  Rng rng(1);
  Linear l(3, 2, true, rng);
  CHECK_THROWS_AS(l.forward(Tensor({2, 4}), Mode::eval), InvalidArgument);
  CHECK_THROWS_AS(Conv2d(3, 4, {3, 1, 1, 2, true}, rng), InvalidArgument);
}

TEST_CASE("sgd matches the momentum update on a scalar") {
  Tensor w({1}, {1.0}), g({1}, {0.5});
  optim::Sgd opt({{"w", &w, &g, false}}, {.lr = 0.1, .momentum = 0.9, .weight_decay = 0.01});
  opt.step();  // v = 0.5 + 0.01 = 0.51
  CHECK(w[0] == doctest::Approx(1.0 - 0.051));
  opt.step();  // v = 0.9 * 0.51 + 0.5 + 0.01 * 0.949
  CHECK(w[0] == doctest::Approx(0.949 - 0.1 * (0.459 + 0.5 + 0.00949)));
}

TEST_CASE("adam first step moves by lr in the gradient sign") {
  Tensor w({2}, {0.0, 0.0}), g({2}, {3.0, -0.2});
  optim::Adam opt({{"w", &w, &g, false}}, {.lr = 0.008});
  opt.step();
  CHECK(w[0] == doctest::Approx(-0.008).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(0.008).epsilon(1e-6));
}

TEST_CASE("multi-step schedule") {
  optim::MultiStepSchedule s{0.1, {80, 120}, 0.1};
  CHECK(s.at(0) == doctest::Approx(0.1));
  CHECK(s.at(80) == doctest::Approx(0.01));
  CHECK(s.at(200) == doctest::Approx(0.001));
}
