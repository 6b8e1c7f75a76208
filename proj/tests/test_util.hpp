#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "softmark/nn.hpp"
#include "softmark/rng.hpp"
#include "softmark/tensor.hpp"

namespace softmark::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Worst relative error between analytic and central-difference gradients of
// sum(r * m(x)) w.r.t. the input and every parameter, sampled at up to
// `samples` coordinates per tensor.
inline double module_grad_error(nn::Module& m, Tensor x, Rng& rng, std::size_t samples = 12, double h = 1e-5) {
  const Tensor y0 = m.forward(x, nn::Mode::train);
  const Tensor r = random_tensor(y0.shape(), rng);
  nn::zero_grad(m);
  m.forward(x, nn::Mode::train);
  const Tensor gx = m.backward(r);
  auto loss = [&] { return dot(m.forward(x, nn::Mode::train), r); };
  double worst = 0.0;
  auto check = [&](Tensor& t, const Tensor& g) {
    for (std::size_t s = 0; s < std::min(samples, t.size()); ++s) {
      const std::size_t i = t.size() <= samples ? s : rng.below(t.size());
      const double old = t[i];
      t[i] = old + h;
      const double up = loss();
      t[i] = old - h;
      const double down = loss();
      t[i] = old;
      const double num = (up - down) / (2 * h);
      if (std::abs(num) < 1e-6 && std::abs(g[i]) < 1e-6) continue;
      worst = std::max(worst, rel_err(num, g[i]));
    }
  };
  check(x, gx);
  for (auto& p : nn::parameters_of(m)) check(*p.value, *p.grad);
  return worst;
}

}  // namespace softmark::testing
