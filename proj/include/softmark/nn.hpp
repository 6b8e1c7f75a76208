#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "softmark/rng.hpp"
#include "softmark/tensor.hpp"

namespace softmark::nn {

enum class Mode { train, eval };

// A named slot of model state. Buffers (normalization running statistics)
// have no gradient. Prunable marks convolution and fully-connected weights.
struct StateRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool prunable = false;
};

// Layers cache what backward needs during forward; backward accumulates into
// parameter gradients and returns the gradient w.r.t. the forward input.
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_state(const std::string& prefix, std::vector<StateRef>& out);
  virtual std::unique_ptr<Module> clone() const = 0;
};

using ModulePtr = std::unique_ptr<Module>;

std::vector<StateRef> state_of(Module& m);
std::vector<StateRef> parameters_of(Module& m);
std::size_t count_parameters(const Module& m);
void zero_grad(Module& m);

class Linear final : public Module {
 public:
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) override;
  ModulePtr clone() const override { return std::make_unique<Linear>(*this); }

 private:
  std::size_t in_, out_;
  bool has_bias_;
  Tensor w_, b_, gw_, gb_, x_;
};

struct ConvOptions {
  std::size_t kernel = 3, stride = 1, pad = 0, groups = 1;
  bool bias = true;
};

class Conv2d final : public Module {
 public:
  Conv2d(std::size_t in, std::size_t out, ConvOptions opt, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) override;
  ModulePtr clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  std::size_t in_, out_;
  ConvOptions opt_;
  Tensor w_, b_, gw_, gb_, x_;
};

// Normalizes over every axis except the channel axis (axis 1); handles both
// [N, C] and [N, C, H, W] inputs.
class BatchNorm final : public Module {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) override;
  ModulePtr clone() const override { return std::make_unique<BatchNorm>(*this); }

 private:
  std::size_t c_;
  double momentum_, eps_;
  Tensor gamma_, beta_, ggamma_, gbeta_, running_mean_, running_var_;
  Tensor xhat_, inv_std_;
  Mode last_mode_ = Mode::train;
};

class ReLU final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  ModulePtr clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Tensor x_;
};

class ReLU6 final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  ModulePtr clone() const override { return std::make_unique<ReLU6>(*this); }

 private:
  Tensor x_;
};

// Non-overlapping max pooling with window = stride = k.
class MaxPool2d final : public Module {
 public:
  explicit MaxPool2d(std::size_t k) : k_(k) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  ModulePtr clone() const override { return std::make_unique<MaxPool2d>(*this); }

 private:
  std::size_t k_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// [N, C, H, W] -> [N, C]
class GlobalAvgPool final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  ModulePtr clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  Shape in_shape_;
};

class Flatten final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  ModulePtr clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Shape in_shape_;
};

class Sequential final : public Module {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential&) = delete;

  Sequential& add(ModulePtr m);
  template <class M, class... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<M>(std::forward<Args>(args)...));
  }
  std::size_t size() const { return layers_.size(); }
  Module& operator[](std::size_t i) { return *layers_.at(i); }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) override;
  ModulePtr clone() const override { return std::make_unique<Sequential>(*this); }

 private:
  std::vector<ModulePtr> layers_;
};

// body(x) + shortcut(x); a null shortcut is the identity.
class Residual final : public Module {
 public:
  Residual(ModulePtr body, ModulePtr shortcut);
  Residual(const Residual& other);
  Residual& operator=(const Residual&) = delete;

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) override;
  ModulePtr clone() const override { return std::make_unique<Residual>(*this); }

 private:
  ModulePtr body_, shortcut_;
};

// Two-branch unit that concatenates [shortcut, body] along channels and then
// interleaves the two halves. With a null shortcut the input is split in two
// channel halves: the first passes through, the second feeds the body.
class ShuffleUnit final : public Module {
 public:
  ShuffleUnit(ModulePtr body, ModulePtr shortcut);
  ShuffleUnit(const ShuffleUnit& other);
  ShuffleUnit& operator=(const ShuffleUnit&) = delete;

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef>& out) override;
  ModulePtr clone() const override { return std::make_unique<ShuffleUnit>(*this); }

 private:
  ModulePtr body_, shortcut_;
  std::size_t left_channels_ = 0;
};

// Channel helpers on [N, C, H, W] tensors.
Tensor channel_slice(const Tensor& x, std::size_t begin, std::size_t end);
Tensor channel_concat(const Tensor& a, const Tensor& b);
Tensor channel_shuffle(const Tensor& x, std::size_t groups);
Tensor channel_unshuffle(const Tensor& x, std::size_t groups);

}  // namespace softmark::nn
