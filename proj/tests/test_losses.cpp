#include <vector>

#include "doctest.h"
#include "softmark/error.hpp"
#include "softmark/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace softmark;
using softmark::testing::random_tensor;
using softmark::testing::rel_err;
using softmark::oracle::fd_error;

namespace {

std::vector<std::size_t> random_labels(std::size_t n, std::size_t c, Rng& rng) {
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = rng.below(c);
  return y;
}

}  // namespace

TEST_CASE("kld matches the scalar oracle on 100 random batches") {
  Rng rng(31);
  double worst_value = 0.0, worst_grad = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng.below(6), c = 2 + rng.below(8);
    const double t = rng.uniform(0.5, 6.0);
    const Tensor on = random_tensor({n, c}, rng, 3.0), ow = random_tensor({n, c}, rng, 3.0);
    const double v = kld_loss(OutputBatch(on, Source::normal), OutputBatch(ow, Source::watermarked), t);
    worst_value = std::max(worst_value, rel_err(v, oracle::kld(on, ow, t)));
    const LossGrad g = kld_loss_grad(on, ow, t);
    CHECK(g.value == v);
    worst_grad = std::max(worst_grad, fd_error(ow, g.grad, [&](const Tensor& x) { return oracle::kld(on, x, t); }));
  }
  CHECK(worst_value < 1e-5);
  CHECK(worst_grad < 1e-3);
}

TEST_CASE("kld fixed points") {
  const Tensor a({2, 3}, {0.3, -1.0, 2.0, 5.0, 5.0, -5.0});
  CHECK(kld_loss(OutputBatch(a, Source::normal), OutputBatch(a, Source::watermarked), 2.5) ==
        doctest::Approx(0.0).epsilon(1e-7));
  const Tensor n({1, 2}, {1.0, 0.0}), w({1, 2}, {0.0, 1.0});
  // p = softmax(w) = (1-s, s), q = (s, 1-s) with s = sigmoid(1)
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  const double hand = (1 - s) * std::log((1 - s) / s) + s * std::log(s / (1 - s));
  CHECK(kld_loss(OutputBatch(n, Source::normal), OutputBatch(w, Source::watermarked), 1.0) == doctest::Approx(hand));
  const double s2 = 1.0 / (1.0 + std::exp(-0.5));
  const double hand2 = 4.0 * ((1 - s2) * std::log((1 - s2) / s2) + s2 * std::log(s2 / (1 - s2)));
  CHECK(kld_loss(OutputBatch(n, Source::normal), OutputBatch(w, Source::watermarked), 2.0) == doctest::Approx(hand2));
  CHECK_THROWS_AS(kld_loss_grad(Tensor({1, 3}), Tensor({1, 2}), 1.0), InvalidArgument);
  CHECK_THROWS_AS(kld_loss_grad(Tensor({1, 2}, {1.0, std::nan("")}), Tensor({1, 2}), 1.0), NumericError);
}

TEST_CASE("main task loss matches the oracle and its gradient") {
  Rng rng(32);
  double worst_value = 0.0, worst_grad = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng.below(6), c = 2 + rng.below(8);
    const Tensor s = random_tensor({n, c}, rng, 3.0);
    const auto y = random_labels(n, c, rng);
    worst_value = std::max(worst_value, rel_err(main_task_loss(OutputBatch(s, Source::normal), y), oracle::ce(s, y)));
    const LossGrad g = cross_entropy(s, y);
    worst_grad = std::max(worst_grad, fd_error(s, g.grad, [&](const Tensor& x) { return oracle::ce(x, y); }));
  }
  CHECK(worst_value < 1e-5);
  CHECK(worst_grad < 1e-3);
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(cross_entropy(Tensor({1, 3}), bad), InvalidArgument);
}

TEST_CASE("detector loss matches the oracle and its logit gradient") {
  Rng rng(33);
  double worst_value = 0.0, worst_grad = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng.below(10);
    const Tensor logits = random_tensor({n, 1}, rng, 3.0);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(2));
    auto sig = [](const Tensor& z) {
      std::vector<double> p(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-z[i]));
      return p;
    };
    const auto p = sig(logits);
    worst_value = std::max(worst_value, rel_err(detector_loss(p, y), oracle::bce(p, y)));
    const LossGrad g = detector_loss_logits(logits, y);
    worst_grad = std::max(worst_grad, fd_error(logits, g.grad, [&](const Tensor& z) { return oracle::bce(sig(z), y); }));
  }
  CHECK(worst_value < 1e-5);
  CHECK(worst_grad < 1e-3);

  const std::vector<double> sure{0.0, 1.0};
  const std::vector<int> wrong{1, 0};
  CHECK(detector_loss(sure, wrong) == doctest::Approx(-std::log(1e-7)));
  CHECK_THROWS_AS(detector_loss(sure, std::vector<int>{1}), InvalidArgument);
}

TEST_CASE("model and total loss compose") {
  Rng rng(34);
  const Tensor wm = random_tensor({4, 5}, rng), n = random_tensor({4, 5}, rng);
  const auto y = random_labels(4, 5, rng);
  const LossConfig cfg{-0.1, 1.0, 4.0, 85.0};
  const OutputBatch bw(wm, Source::watermarked), bn(n, Source::normal);
  const double ml = model_loss(bw, y, bw, bn, cfg);
  CHECK(ml == doctest::Approx(oracle::ce(wm, y) - 0.1 * oracle::kld(n, wm, 4.0)));
  CHECK(ml < oracle::ce(wm, y));
  CHECK(total_loss(ml, 0.7, 0.5) == doctest::Approx(ml + 0.35));
}

TEST_CASE("finetune branch follows the strict threshold") {
  CHECK(finetune_branch(85.0, 85.0) == FinetuneBranch::reembed);
  CHECK(finetune_branch(85.0001, 85.0) == FinetuneBranch::unperturbed);
  CHECK(finetune_branch(10.0, 85.0) == FinetuneBranch::reembed);
  Rng rng(35);
  const Tensor raw = random_tensor({3, 4}, rng);
  const WatermarkSignal s{{1, -1, 0, 1}, 2.0, {}, 0};
  const OutputBatch bw(raw, Source::watermarked);
  const OutputBatch pert = apply_perturbation(bw, s);
  const auto y = random_labels(3, 4, rng);
  const auto hi = finetune_loss(bw, pert, y, 99.0, 85.0);
  const auto lo = finetune_loss(bw, pert, y, 60.0, 85.0);
  CHECK(hi.branch == FinetuneBranch::unperturbed);
  CHECK(hi.loss.value == doctest::Approx(oracle::ce(raw, y)));
  CHECK(lo.branch == FinetuneBranch::reembed);
  CHECK(lo.loss.value == doctest::Approx(oracle::ce(pert.scores(), y)));
}

TEST_CASE("distillation loss mixes hard and soft terms") {
  Rng rng(36);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 2 + rng.below(4), c = 2 + rng.below(6);
    const Tensor st = random_tensor({n, c}, rng, 2.0), te = random_tensor({n, c}, rng, 2.0);
    const auto y = random_labels(n, c, rng);
    const double t = 4.0, lam = rng.uniform();
    auto f = [&](const Tensor& x) { return (1 - lam) * oracle::ce(x, y) + lam * oracle::kld(x, te, t); };
    // KL(p_teacher || p_student) is kld(o_n = student, o_wm = teacher)
    const LossGrad g = distillation_loss(st, te, y, t, lam);
    CHECK(rel_err(g.value, f(st)) < 1e-9);
    CHECK(fd_error(st, g.grad, f) < 1e-3);
  }
  CHECK_THROWS_AS(distillation_loss(Tensor({1, 2}), Tensor({1, 2}), std::vector<std::size_t>{0}, 4.0, 1.5),
                  InvalidArgument);
}

TEST_CASE("loss config validation") {
  CHECK_NOTHROW(LossConfig{}.validate());
  CHECK_THROWS_AS((LossConfig{-0.1, 1.0, 0.0, 85.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((LossConfig{-0.1, 1.0, 4.0, 101.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((LossConfig{-0.1, -1.0, 4.0, 85.0}.validate()), InvalidArgument);
}
