#include "doctest.h"
#include "softmark/error.hpp"
#include "softmark/modelzoo.hpp"
#include "test_util.hpp"

using namespace softmark;

TEST_CASE("parameter counts of the named architectures") {
  CHECK(build_classifier({Arch::resnet18, 10}).param_count() == 11'173'962);
  CHECK(build_classifier({Arch::mobilenet_v2, 10}).param_count() == 2'254'090);
  CHECK(build_classifier({Arch::shufflenet_v2, 10}).param_count() == 1'268'646);
  CHECK(build_classifier({Arch::preresnet20, 10}).param_count() == 272'282);
}

TEST_CASE("small architectures: counts and output shapes") {
  ClassifierSpec s{Arch::mlp_small, 5, 1, 32, {32, 32, 32}};
  Classifier m(s);
  // three Linear+BN blocks and the output layer
  CHECK(m.param_count() == (32 * 32 + 32 + 64) * 3 + 32 * 5 + 5);
  Rng rng(1);
  const Tensor y = m.forward(testing::random_tensor(m.input_shape(7), rng), nn::Mode::train);
  CHECK(y.shape() == Shape{7, 5});

  Classifier cnn({Arch::cnn_small, 10, 1});
  CHECK(cnn.predict(testing::random_tensor(cnn.input_shape(2), rng)).shape() == Shape{2, 10});
}

TEST_CASE("a 4-3-2 MLP has 23 parameters") {
  Rng rng(0);
  nn::Sequential s;
  s.emplace<nn::Linear>(4, 3, true, rng).emplace<nn::ReLU>().emplace<nn::Linear>(3, 2, true, rng);
  CHECK(nn::count_parameters(s) == 23);
}

TEST_CASE("forward passes of the paper-scale architectures produce finite scores") {
  Rng rng(5);
  for (Arch a : {Arch::resnet18, Arch::mobilenet_v2, Arch::shufflenet_v2, Arch::preresnet20}) {
    CAPTURE(to_string(a));
    Classifier m({a, 10, 3});
    const Tensor y = m.predict(testing::random_tensor(m.input_shape(1), rng));
    CHECK(y.shape() == Shape{1, 10});
    CHECK(y.all_finite());
  }
}

TEST_CASE("initialization is deterministic per seed") {
  Classifier a({Arch::mlp_small, 5, 9}), b({Arch::mlp_small, 5, 9}), c({Arch::mlp_small, 5, 10});
  Rng rng(2);
  const Tensor x = testing::random_tensor(a.input_shape(4), rng);
  CHECK(a.predict(x) == b.predict(x));
  CHECK(a.predict(x) != c.predict(x));
}

TEST_CASE("architecture names round-trip and unknown names are rejected") {
  CHECK(arch_from_string("preresnet20") == Arch::preresnet20);
  CHECK_THROWS_AS(arch_from_string("vgg16"), InvalidArgument);
}
