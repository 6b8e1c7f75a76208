#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softmark/nn.hpp"

namespace softmark {

enum class Arch { mlp_small, cnn_small, resnet18, mobilenet_v2, shufflenet_v2, preresnet20 };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct ClassifierSpec {
  Arch arch = Arch::mlp_small;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;
  // mlp_small only.
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden_widths{32, 32, 32};
};

// A classifier network plus the spec that built it. Copies are deep.
class Classifier {
 public:
  explicit Classifier(ClassifierSpec spec);
  Classifier(const Classifier& other);
  Classifier& operator=(const Classifier& other);
  Classifier(Classifier&&) noexcept = default;
  Classifier& operator=(Classifier&&) noexcept = default;

  const ClassifierSpec& spec() const { return spec_; }
  // Input rows are [N, input_dim] for mlp_small and [N, 3, 32, 32] otherwise.
  Shape input_shape(std::size_t batch) const;

  Tensor forward(const Tensor& x, nn::Mode mode) { return net_->forward(x, mode); }
  Tensor backward(const Tensor& grad) { return net_->backward(grad); }
  // Eval-mode scores computed in chunks; does not disturb training caches.
  Tensor predict(const Tensor& x, std::size_t chunk = 256) const;

  nn::Module& net() { return *net_; }
  const nn::Module& net() const { return *net_; }
  std::size_t param_count() const { return nn::count_parameters(*net_); }

 private:
  ClassifierSpec spec_;
  nn::ModulePtr net_;
};

Classifier build_classifier(const ClassifierSpec& spec);
std::size_t count_parameters(const Classifier& model);

}  // namespace softmark
