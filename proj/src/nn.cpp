#include "softmark/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "softmark/error.hpp"
#include "softmark/kernels.hpp"

namespace softmark::nn {

namespace k = kernels::parallel;
using kernels::Trans;

void Module::collect_state(const std::string&, std::vector<StateRef>&) {}

std::vector<StateRef> state_of(Module& m) {
  std::vector<StateRef> out;
  m.collect_state("", out);
  return out;
}

std::vector<StateRef> parameters_of(Module& m) {
  auto all = state_of(m);
  std::erase_if(all, [](const StateRef& s) { return s.grad == nullptr; });
  return all;
}

std::size_t count_parameters(const Module& m) {
  std::size_t n = 0;
  // collect_state only hands out pointers; nothing is written here.
  for (const auto& p : parameters_of(const_cast<Module&>(m))) n += p.value->size();
  return n;
}

void zero_grad(Module& m) {
  for (auto& p : parameters_of(m)) p.grad->fill(0.0);
}

namespace {

void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

void expect_rank(const Tensor& x, std::size_t rank, const char* layer) {
  if (x.rank() != rank)
    throw InvalidArgument(std::string(layer) + " expects rank " + std::to_string(rank) + " input, got " +
                          shape_str(x.shape()));
}

}  // namespace

// ---- Linear

Linear::Linear(std::size_t in, std::size_t out, bool bias, Rng& rng)
    : in_(in), out_(out), has_bias_(bias), w_({out, in}), gw_({out, in}) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  init_uniform(w_, bound, rng);
  if (has_bias_) {
    b_ = Tensor({out});
    gb_ = Tensor({out});
    init_uniform(b_, bound, rng);
  }
}

Tensor Linear::forward(const Tensor& x, Mode) {
  expect_rank(x, 2, "Linear");
  if (x.dim(1) != in_)
    throw InvalidArgument("Linear expects " + std::to_string(in_) + " features, got " + std::to_string(x.dim(1)));
  x_ = x;
  const std::size_t n = x.dim(0);
  Tensor y({n, out_});
  k::gemm(Trans::no, Trans::yes, n, out_, in_, x.data(), w_.data(), y.data(), false);
  if (has_bias_)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_; ++j) y.at(i, j) += b_[j];
  return y;
}

Tensor Linear::backward(const Tensor& gy) {
  const std::size_t n = gy.dim(0);
  k::gemm(Trans::yes, Trans::no, out_, in_, n, gy.data(), x_.data(), gw_.data(), true);
  if (has_bias_)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_; ++j) gb_[j] += gy.at(i, j);
  Tensor gx({n, in_});
  k::gemm(Trans::no, Trans::no, n, in_, out_, gy.data(), w_.data(), gx.data(), false);
  return gx;
}

void Linear::collect_state(const std::string& prefix, std::vector<StateRef>& out) {
  out.push_back({prefix + "weight", &w_, &gw_, true});
  if (has_bias_) out.push_back({prefix + "bias", &b_, &gb_, false});
}

// ---- Conv2d

Conv2d::Conv2d(std::size_t in, std::size_t out, ConvOptions opt, Rng& rng) : in_(in), out_(out), opt_(opt) {
  if (opt_.groups == 0 || in % opt_.groups || out % opt_.groups)
    throw InvalidArgument("Conv2d channels must be divisible by groups");
  const std::size_t cin_g = in / opt_.groups;
  w_ = Tensor({out, cin_g, opt_.kernel, opt_.kernel});
  gw_ = Tensor(w_.shape());
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin_g * opt_.kernel * opt_.kernel));
  init_uniform(w_, bound, rng);
  if (opt_.bias) {
    b_ = Tensor({out});
    gb_ = Tensor({out});
    init_uniform(b_, bound, rng);
  }
}

Tensor Conv2d::forward(const Tensor& x, Mode) {
  expect_rank(x, 4, "Conv2d");
  if (x.dim(1) != in_)
    throw InvalidArgument("Conv2d expects " + std::to_string(in_) + " channels, got " + std::to_string(x.dim(1)));
  x_ = x;
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t g = opt_.groups, cin_g = in_ / g, cout_g = out_ / g;
  const kernels::ConvGeom geom{cin_g, h, w, opt_.kernel, opt_.stride, opt_.pad};
  const std::size_t oh = geom.out_h(), ow = geom.out_w(), ohw = oh * ow, kk = geom.col_rows();
  Tensor y({n, out_, oh, ow});
  std::vector<double> col(kk * ohw);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t gi = 0; gi < g; ++gi) {
      k::im2col(x.data() + (i * in_ + gi * cin_g) * h * w, geom, col.data());
      k::gemm(Trans::no, Trans::no, cout_g, ohw, kk, w_.data() + gi * cout_g * kk, col.data(),
              y.data() + (i * out_ + gi * cout_g) * ohw, false);
    }
  if (opt_.bias)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < out_; ++c) {
        double* p = y.data() + (i * out_ + c) * ohw;
        for (std::size_t s = 0; s < ohw; ++s) p[s] += b_[c];
      }
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  const std::size_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const std::size_t g = opt_.groups, cin_g = in_ / g, cout_g = out_ / g;
  const kernels::ConvGeom geom{cin_g, h, w, opt_.kernel, opt_.stride, opt_.pad};
  const std::size_t ohw = geom.out_h() * geom.out_w(), kk = geom.col_rows();
  Tensor gx(x_.shape());
  std::vector<double> col(kk * ohw), gcol(kk * ohw);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t gi = 0; gi < g; ++gi) {
      const double* gyp = gy.data() + (i * out_ + gi * cout_g) * ohw;
      k::im2col(x_.data() + (i * in_ + gi * cin_g) * h * w, geom, col.data());
      k::gemm(Trans::no, Trans::yes, cout_g, kk, ohw, gyp, col.data(), gw_.data() + gi * cout_g * kk, true);
      k::gemm(Trans::yes, Trans::no, kk, ohw, cout_g, w_.data() + gi * cout_g * kk, gyp, gcol.data(), false);
      k::col2im(gcol.data(), geom, gx.data() + (i * in_ + gi * cin_g) * h * w);
    }
  if (opt_.bias)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < out_; ++c) {
        const double* p = gy.data() + (i * out_ + c) * ohw;
        for (std::size_t s = 0; s < ohw; ++s) gb_[c] += p[s];
      }
  return gx;
}

void Conv2d::collect_state(const std::string& prefix, std::vector<StateRef>& out) {
  out.push_back({prefix + "weight", &w_, &gw_, true});
  if (opt_.bias) out.push_back({prefix + "bias", &b_, &gb_, false});
}

// ---- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : c_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_({channels}, 1.0),
      beta_({channels}),
      ggamma_({channels}),
      gbeta_({channels}),
      running_mean_({channels}),
      running_var_({channels}, 1.0) {}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.rank() < 2 || x.dim(1) != c_)
    throw InvalidArgument("BatchNorm expects " + std::to_string(c_) + " channels, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), s = x.size() / (n * c_), m = n * s;
  last_mode_ = mode;
  xhat_ = Tensor(x.shape());
  inv_std_ = Tensor({c_});
  Tensor y(x.shape());
  for (std::size_t c = 0; c < c_; ++c) {
    double mean = running_mean_[c], var = running_var_[c];
    if (mode == Mode::train) {
      if (m < 2) throw InvalidArgument("BatchNorm needs more than one value per channel in training");
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) sum += x[(i * c_ + c) * s + j];
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          const double d = x[(i * c_ + c) * s + j] - mean;
          sq += d * d;
        }
      var = sq / static_cast<double>(m);
      running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] =
          (1.0 - momentum_) * running_var_[c] + momentum_ * var * static_cast<double>(m) / static_cast<double>(m - 1);
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t idx = (i * c_ + c) * s + j;
        xhat_[idx] = (x[idx] - mean) * inv;
        y[idx] = gamma_[c] * xhat_[idx] + beta_[c];
      }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& gy) {
  const std::size_t n = gy.dim(0), s = gy.size() / (n * c_), m = n * s;
  Tensor gx(gy.shape());
  for (std::size_t c = 0; c < c_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t idx = (i * c_ + c) * s + j;
        sum_g += gy[idx];
        sum_gx += gy[idx] * xhat_[idx];
      }
    ggamma_[c] += sum_gx;
    gbeta_[c] += sum_g;
    const double scale = gamma_[c] * inv_std_[c];
    const double md = static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t idx = (i * c_ + c) * s + j;
        gx[idx] = last_mode_ == Mode::train ? scale * (gy[idx] - sum_g / md - xhat_[idx] * sum_gx / md)
                                            : scale * gy[idx];
      }
  }
  return gx;
}

void BatchNorm::collect_state(const std::string& prefix, std::vector<StateRef>& out) {
  out.push_back({prefix + "weight", &gamma_, &ggamma_, false});
  out.push_back({prefix + "bias", &beta_, &gbeta_, false});
  out.push_back({prefix + "running_mean", &running_mean_, nullptr, false});
  out.push_back({prefix + "running_var", &running_var_, nullptr, false});
}

// ---- activations

Tensor ReLU::forward(const Tensor& x, Mode) {
  x_ = x;
  Tensor y(x.shape());
  k::relu_forward(x.size(), x.data(), y.data());
  return y;
}

Tensor ReLU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  k::relu_backward(gy.size(), x_.data(), gy.data(), gx.data());
  return gx;
}

Tensor ReLU6::forward(const Tensor& x, Mode) {
  x_ = x;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::clamp(x[i], 0.0, 6.0);
  return y;
}

Tensor ReLU6::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = (x_[i] > 0.0 && x_[i] < 6.0) ? gy[i] : 0.0;
  return gx;
}

// ---- pooling and reshaping

Tensor MaxPool2d::forward(const Tensor& x, Mode) {
  expect_rank(x, 4, "MaxPool2d");
  in_shape_ = x.shape();
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / k_, ow = w / k_;
  Tensor y({n, c, oh, ow});
  argmax_.assign(y.size(), 0);
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t yy = 0; yy < oh; ++yy)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t a = 0; a < k_; ++a)
          for (std::size_t b = 0; b < k_; ++b) {
            const std::size_t idx = (p * h + yy * k_ + a) * w + xx * k_ + b;
            if (x[idx] > best) {
              best = x[idx];
              arg = idx;
            }
          }
        const std::size_t o = (p * oh + yy) * ow + xx;
        y[o] = best;
        argmax_[o] = arg;
      }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  for (std::size_t o = 0; o < gy.size(); ++o) gx[argmax_[o]] += gy[o];
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  expect_rank(x, 4, "GlobalAvgPool");
  in_shape_ = x.shape();
  const std::size_t nc = x.dim(0) * x.dim(1), s = x.dim(2) * x.dim(3);
  Tensor y({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < nc; ++p) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s; ++j) sum += x[p * s + j];
    y[p] = sum / static_cast<double>(s);
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  const std::size_t s = in_shape_[2] * in_shape_[3];
  for (std::size_t p = 0; p < gy.size(); ++p)
    for (std::size_t j = 0; j < s; ++j) gx[p * s + j] = gy[p] / static_cast<double>(s);
  return gx;
}

Tensor Flatten::forward(const Tensor& x, Mode) {
  in_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

Tensor Flatten::backward(const Tensor& gy) { return gy.reshaped(in_shape_); }

// ---- containers

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::add(ModulePtr m) {
  layers_.push_back(std::move(m));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& gy) {
  Tensor g = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_state(const std::string& prefix, std::vector<StateRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_state(prefix + std::to_string(i) + ".", out);
}

Residual::Residual(ModulePtr body, ModulePtr shortcut) : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

Residual::Residual(const Residual& other)
    : body_(other.body_->clone()), shortcut_(other.shortcut_ ? other.shortcut_->clone() : nullptr) {}

Tensor Residual::forward(const Tensor& x, Mode mode) {
  Tensor y = body_->forward(x, mode);
  const Tensor s = shortcut_ ? shortcut_->forward(x, mode) : x;
  if (s.shape() != y.shape())
    throw InvalidArgument("residual branches disagree: " + shape_str(y.shape()) + " vs " + shape_str(s.shape()));
  k::axpy(y.size(), 1.0, s.data(), y.data());
  return y;
}

Tensor Residual::backward(const Tensor& gy) {
  Tensor gx = body_->backward(gy);
  if (shortcut_) {
    const Tensor gs = shortcut_->backward(gy);
    k::axpy(gx.size(), 1.0, gs.data(), gx.data());
  } else {
    k::axpy(gx.size(), 1.0, gy.data(), gx.data());
  }
  return gx;
}

void Residual::collect_state(const std::string& prefix, std::vector<StateRef>& out) {
  body_->collect_state(prefix + "body.", out);
  if (shortcut_) shortcut_->collect_state(prefix + "shortcut.", out);
}

ShuffleUnit::ShuffleUnit(ModulePtr body, ModulePtr shortcut)
    : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

ShuffleUnit::ShuffleUnit(const ShuffleUnit& other)
    : body_(other.body_->clone()),
      shortcut_(other.shortcut_ ? other.shortcut_->clone() : nullptr),
      left_channels_(other.left_channels_) {}

Tensor ShuffleUnit::forward(const Tensor& x, Mode mode) {
  expect_rank(x, 4, "ShuffleUnit");
  Tensor left, right;
  if (shortcut_) {
    left = shortcut_->forward(x, mode);
    right = body_->forward(x, mode);
  } else {
    const std::size_t half = x.dim(1) / 2;
    left = channel_slice(x, 0, half);
    right = body_->forward(channel_slice(x, half, x.dim(1)), mode);
  }
  left_channels_ = left.dim(1);
  return channel_shuffle(channel_concat(left, right), 2);
}

Tensor ShuffleUnit::backward(const Tensor& gy) {
  const Tensor g = channel_unshuffle(gy, 2);
  const Tensor gl = channel_slice(g, 0, left_channels_);
  const Tensor gr = channel_slice(g, left_channels_, g.dim(1));
  if (!shortcut_) return channel_concat(gl, body_->backward(gr));
  Tensor gx = body_->backward(gr);
  const Tensor gs = shortcut_->backward(gl);
  k::axpy(gx.size(), 1.0, gs.data(), gx.data());
  return gx;
}

void ShuffleUnit::collect_state(const std::string& prefix, std::vector<StateRef>& out) {
  body_->collect_state(prefix + "body.", out);
  if (shortcut_) shortcut_->collect_state(prefix + "shortcut.", out);
}

Tensor channel_slice(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.size() / (n * c), w = end - begin;
  Shape shape = x.shape();
  shape[1] = w;
  Tensor y(shape);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data() + (i * c + begin) * s, w * s, y.data() + i * w * s);
  return y;
}

Tensor channel_concat(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), s = a.size() / (n * ca);
  Shape shape = a.shape();
  shape[1] = ca + cb;
  Tensor y(shape);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * s, ca * s, y.data() + i * (ca + cb) * s);
    std::copy_n(b.data() + i * cb * s, cb * s, y.data() + (i * (ca + cb) + ca) * s);
  }
  return y;
}

Tensor channel_shuffle(const Tensor& x, std::size_t groups) {
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.size() / (n * c), per = c / groups;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < per; ++j)
        std::copy_n(x.data() + (i * c + g * per + j) * s, s, y.data() + (i * c + j * groups + g) * s);
  return y;
}

Tensor channel_unshuffle(const Tensor& x, std::size_t groups) {
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.size() / (n * c), per = c / groups;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < per; ++j)
        std::copy_n(x.data() + (i * c + j * groups + g) * s, s, y.data() + (i * c + g * per + j) * s);
  return y;
}

}  // namespace softmark::nn
