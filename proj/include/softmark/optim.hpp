#pragma once

#include <vector>

#include "softmark/nn.hpp"

namespace softmark::optim {

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = false;
};

// Momentum SGD with coupled L2 weight decay (the usual deep-learning update).
class Sgd {
 public:
  Sgd(std::vector<nn::StateRef> params, SgdOptions opt);
  void step();
  void set_lr(double lr) { opt_.lr = lr; }
  double lr() const { return opt_.lr; }
  std::vector<Tensor>& state() { return velocity_; }
  const std::vector<Tensor>& state() const { return velocity_; }

 private:
  std::vector<nn::StateRef> params_;
  SgdOptions opt_;
  std::vector<Tensor> velocity_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<nn::StateRef> params, AdamOptions opt);
  void step();
  void set_lr(double lr) { opt_.lr = lr; }
  double lr() const { return opt_.lr; }
  // First moments, then second moments; the step count is kept separately.
  std::vector<Tensor>& state() { return moments_; }
  const std::vector<Tensor>& state() const { return moments_; }
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }

 private:
  std::vector<nn::StateRef> params_;
  AdamOptions opt_;
  std::vector<Tensor> moments_;
  long t_ = 0;
};

// Learning rate multiplied by `factor` at each milestone epoch (0-based).
struct MultiStepSchedule {
  double base = 0.1;
  std::vector<int> milestones;
  double factor = 0.1;

  double at(int epoch) const;
};

}  // namespace softmark::optim
