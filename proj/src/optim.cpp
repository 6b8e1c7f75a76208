#include "softmark/optim.hpp"

#include <cmath>

namespace softmark::optim {

Sgd::Sgd(std::vector<nn::StateRef> params, SgdOptions opt) : params_(std::move(params)), opt_(opt) {
  for (const auto& p : params_) velocity_.emplace_back(p.value->shape());
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = *params_[i].value;
    const Tensor& g = *params_[i].grad;
    Tensor& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double d = g[j] + opt_.weight_decay * w[j];
      v[j] = opt_.momentum * v[j] + d;
      w[j] -= opt_.lr * (opt_.nesterov ? d + opt_.momentum * v[j] : v[j]);
    }
  }
}

Adam::Adam(std::vector<nn::StateRef> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& p : params_) moments_.emplace_back(p.value->shape());
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const std::size_t n = params_.size();
  for (std::size_t i = 0; i < n; ++i) {
    Tensor& w = *params_[i].value;
    const Tensor& g = *params_[i].grad;
    Tensor& m = moments_[i];
    Tensor& v = moments_[n + i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g[j];
      v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g[j] * g[j];
      w[j] -= opt_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt_.eps);
    }
  }
}

double MultiStepSchedule::at(int epoch) const {
  double lr = base;
  for (int m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

}  // namespace softmark::optim
