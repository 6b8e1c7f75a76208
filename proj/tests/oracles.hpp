#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "softmark/tensor.hpp"

// Scalar long-double reference implementations of the losses.
namespace softmark::oracle {

using LD = long double;

inline std::vector<LD> softmax(const Tensor& t, std::size_t row, LD temp) {
  const std::size_t c = t.dim(1);
  std::vector<LD> p(c);
  LD z = 0;
  for (std::size_t j = 0; j < c; ++j) z += p[j] = std::exp(static_cast<LD>(t.at(row, j)) / temp);
  for (auto& v : p) v /= z;
  return p;
}

inline double kld(const Tensor& o_n, const Tensor& o_wm, double temp) {
  LD s = 0;
  for (std::size_t i = 0; i < o_n.dim(0); ++i) {
    const auto p = softmax(o_wm, i, temp), q = softmax(o_n, i, temp);
    for (std::size_t j = 0; j < p.size(); ++j) s += p[j] * std::log(p[j] / q[j]);
  }
  return static_cast<double>(s * temp * temp / o_n.dim(0));
}

inline double ce(const Tensor& s, const std::vector<std::size_t>& y) {
  LD t = 0;
  for (std::size_t i = 0; i < y.size(); ++i) t -= std::log(softmax(s, i, 1)[y[i]]);
  return static_cast<double>(t / y.size());
}

inline double bce(const std::vector<double>& p, const std::vector<int>& y) {
  LD t = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const LD q = std::min<LD>(std::max<LD>(p[i], 1e-7L), 1 - 1e-7L);
    t -= y[i] ? std::log(q) : std::log(1 - q);
  }
  return static_cast<double>(t / p.size());
}

// Worst relative error between grad and central differences of f over every coordinate.
template <class F>
double fd_error(Tensor x, const Tensor& grad, F f, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double old = x[i];
    x[i] = old + h;
    const double up = f(x);
    x[i] = old - h;
    const double down = f(x);
    x[i] = old;
    const double num = (up - down) / (2 * h);
    if (std::abs(num) < 1e-7 && std::abs(grad[i]) < 1e-7) continue;
    worst = std::max(worst, std::abs(num - grad[i]) / std::max({1e-8, std::abs(num), std::abs(grad[i])}));
  }
  return worst;
}

}  // namespace softmark::oracle
