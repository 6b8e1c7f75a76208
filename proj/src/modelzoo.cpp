#include "softmark/modelzoo.hpp"

#include <algorithm>

#include "softmark/error.hpp"
#include "softmark/rng.hpp"

namespace softmark {

std::string to_string(Arch a) {
  switch (a) {
    case Arch::mlp_small: return "mlp_small";
    case Arch::cnn_small: return "cnn_small";
    case Arch::resnet18: return "resnet18";
    case Arch::mobilenet_v2: return "mobilenet_v2";
    case Arch::shufflenet_v2: return "shufflenet_v2";
    case Arch::preresnet20: return "preresnet20";
  }
  return "?";
}

Arch arch_from_string(const std::string& s) {
  for (Arch a : {Arch::mlp_small, Arch::cnn_small, Arch::resnet18, Arch::mobilenet_v2, Arch::shufflenet_v2,
                 Arch::preresnet20})
    if (to_string(a) == s) return a;
  throw InvalidArgument("unknown architecture '" + s + "'");
}

namespace {

using nn::BatchNorm;
using nn::Conv2d;
using nn::ConvOptions;
using nn::Linear;
using nn::ModulePtr;
using nn::Sequential;

ModulePtr conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad, bool bias,
               Rng& rng, std::size_t groups = 1) {
  return std::make_unique<Conv2d>(in, out, ConvOptions{kernel, stride, pad, groups, bias}, rng);
}

ModulePtr mlp_small(const ClassifierSpec& s, Rng& rng) {
  auto net = std::make_unique<Sequential>();
  std::size_t width = s.input_dim;
  for (std::size_t h : s.hidden_widths) {
    net->emplace<Linear>(width, h, true, rng).emplace<BatchNorm>(h).emplace<nn::ReLU>();
    width = h;
  }
  net->emplace<Linear>(width, s.num_classes, true, rng);
  return net;
}

ModulePtr cnn_small(const ClassifierSpec& s, Rng& rng) {
  auto net = std::make_unique<Sequential>();
  std::size_t in = 3;
  for (std::size_t width : {32u, 64u}) {
    net->add(conv(in, width, 3, 1, 1, true, rng)).emplace<BatchNorm>(width).emplace<nn::ReLU>();
    net->add(conv(width, width, 3, 1, 1, true, rng)).emplace<BatchNorm>(width).emplace<nn::ReLU>();
    net->emplace<nn::MaxPool2d>(2);
    in = width;
  }
  net->emplace<nn::Flatten>();
  net->emplace<Linear>(64 * 8 * 8, 128, true, rng).emplace<nn::ReLU>();
  net->emplace<Linear>(128, s.num_classes, true, rng);
  return net;
}

// Post-activation basic block, CIFAR-style stem without max pooling.
ModulePtr resnet18(const ClassifierSpec& s, Rng& rng) {
  auto net = std::make_unique<Sequential>();
  net->add(conv(3, 64, 3, 1, 1, false, rng)).emplace<BatchNorm>(64).emplace<nn::ReLU>();
  std::size_t in = 64;
  const std::size_t widths[] = {64, 128, 256, 512};
  for (std::size_t stage = 0; stage < 4; ++stage)
    for (std::size_t b = 0; b < 2; ++b) {
      const std::size_t out = widths[stage], stride = (stage > 0 && b == 0) ? 2 : 1;
      auto body = std::make_unique<Sequential>();
      body->add(conv(in, out, 3, stride, 1, false, rng)).emplace<BatchNorm>(out).emplace<nn::ReLU>();
      body->add(conv(out, out, 3, 1, 1, false, rng)).emplace<BatchNorm>(out);
      ModulePtr shortcut;
      if (stride != 1 || in != out) {
        auto sc = std::make_unique<Sequential>();
        sc->add(conv(in, out, 1, stride, 0, false, rng)).emplace<BatchNorm>(out);
        shortcut = std::move(sc);
      }
      net->emplace<nn::Residual>(std::move(body), std::move(shortcut));
      net->emplace<nn::ReLU>();
      in = out;
    }
  net->emplace<nn::GlobalAvgPool>();
  net->emplace<Linear>(512, s.num_classes, true, rng);
  return net;
}

ModulePtr bottleneck(std::size_t in, std::size_t out, std::size_t stride, std::size_t t, Rng& rng) {
  const std::size_t mid = in * t;
  auto body = std::make_unique<Sequential>();
  body->add(conv(in, mid, 1, 1, 0, true, rng)).emplace<BatchNorm>(mid).emplace<nn::ReLU6>();
  body->add(conv(mid, mid, 3, stride, 1, true, rng, mid)).emplace<BatchNorm>(mid).emplace<nn::ReLU6>();
  body->add(conv(mid, out, 1, 1, 0, true, rng)).emplace<BatchNorm>(out);
  if (stride == 1 && in == out) return std::make_unique<nn::Residual>(std::move(body), nullptr);
  return body;
}

// Inverted-residual network; the stem is a padded 1x1 convolution, so the
// spatial size grows to 34x34 before the first stage.
ModulePtr mobilenet_v2(const ClassifierSpec& s, Rng& rng) {
  auto net = std::make_unique<Sequential>();
  net->add(conv(3, 32, 1, 1, 1, true, rng)).emplace<BatchNorm>(32).emplace<nn::ReLU6>();
  struct Stage {
    std::size_t repeat, in, out, stride, t;
  };
  const Stage stages[] = {{1, 32, 16, 1, 1},  {2, 16, 24, 2, 6},  {3, 24, 32, 2, 6},   {4, 32, 64, 2, 6},
                          {3, 64, 96, 1, 6},  {3, 96, 160, 1, 6}, {1, 160, 320, 1, 6}};
  for (const Stage& st : stages)
    for (std::size_t r = 0; r < st.repeat; ++r)
      net->add(bottleneck(r == 0 ? st.in : st.out, st.out, r == 0 ? st.stride : 1, st.t, rng));
  net->add(conv(320, 1280, 1, 1, 0, true, rng)).emplace<BatchNorm>(1280).emplace<nn::ReLU6>();
  net->emplace<nn::GlobalAvgPool>();
  net->emplace<Linear>(1280, s.num_classes, true, rng);
  return net;
}

ModulePtr shuffle_unit(std::size_t in, std::size_t out, std::size_t stride, Rng& rng) {
  if (stride == 1 && in == out) {
    const std::size_t c = in / 2;
    auto body = std::make_unique<Sequential>();
    body->add(conv(c, c, 1, 1, 0, true, rng)).emplace<BatchNorm>(c).emplace<nn::ReLU>();
    body->add(conv(c, c, 3, 1, 1, true, rng, c)).emplace<BatchNorm>(c);
    body->add(conv(c, c, 1, 1, 0, true, rng)).emplace<BatchNorm>(c).emplace<nn::ReLU>();
    return std::make_unique<nn::ShuffleUnit>(std::move(body), nullptr);
  }
  auto body = std::make_unique<Sequential>();
  body->add(conv(in, in, 1, 1, 0, true, rng)).emplace<BatchNorm>(in).emplace<nn::ReLU>();
  body->add(conv(in, in, 3, stride, 1, true, rng, in)).emplace<BatchNorm>(in);
  body->add(conv(in, out / 2, 1, 1, 0, true, rng)).emplace<BatchNorm>(out / 2).emplace<nn::ReLU>();
  auto shortcut = std::make_unique<Sequential>();
  shortcut->add(conv(in, in, 3, stride, 1, true, rng, in)).emplace<BatchNorm>(in);
  shortcut->add(conv(in, out / 2, 1, 1, 0, true, rng)).emplace<BatchNorm>(out / 2).emplace<nn::ReLU>();
  return std::make_unique<nn::ShuffleUnit>(std::move(body), std::move(shortcut));
}

ModulePtr shufflenet_v2(const ClassifierSpec& s, Rng& rng) {
  auto net = std::make_unique<Sequential>();
  net->add(conv(3, 24, 3, 1, 1, true, rng)).emplace<BatchNorm>(24);
  std::size_t in = 24;
  const std::pair<std::size_t, std::size_t> stages[] = {{116, 3}, {232, 7}, {464, 3}};
  for (const auto& [out, repeat] : stages) {
    net->add(shuffle_unit(in, out, 2, rng));
    for (std::size_t r = 0; r < repeat; ++r) net->add(shuffle_unit(out, out, 1, rng));
    in = out;
  }
  net->add(conv(464, 1024, 1, 1, 0, true, rng)).emplace<BatchNorm>(1024).emplace<nn::ReLU>();
  net->emplace<nn::GlobalAvgPool>();
  net->emplace<Linear>(1024, s.num_classes, true, rng);
  return net;
}

// Pre-activation blocks; the projection shortcut is a bare strided 1x1
// convolution applied to the block input.
ModulePtr preresnet20(const ClassifierSpec& s, Rng& rng) {
  auto net = std::make_unique<Sequential>();
  net->add(conv(3, 16, 3, 1, 1, false, rng));
  std::size_t in = 16;
  const std::size_t widths[] = {16, 32, 64};
  for (std::size_t stage = 0; stage < 3; ++stage)
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t out = widths[stage], stride = (stage > 0 && b == 0) ? 2 : 1;
      auto body = std::make_unique<Sequential>();
      body->emplace<BatchNorm>(in).emplace<nn::ReLU>();
      body->add(conv(in, out, 3, stride, 1, false, rng));
      body->emplace<BatchNorm>(out).emplace<nn::ReLU>();
      body->add(conv(out, out, 3, 1, 1, false, rng));
      ModulePtr shortcut;
      if (stride != 1 || in != out) shortcut = conv(in, out, 1, stride, 0, false, rng);
      net->emplace<nn::Residual>(std::move(body), std::move(shortcut));
      in = out;
    }
  net->emplace<BatchNorm>(64).emplace<nn::ReLU>();
  net->emplace<nn::GlobalAvgPool>();
  net->emplace<Linear>(64, s.num_classes, true, rng);
  return net;
}

ModulePtr build_net(const ClassifierSpec& s) {
  if (s.num_classes < 2) throw InvalidArgument("classifier needs at least 2 classes");
  Rng rng(s.seed);
  switch (s.arch) {
    case Arch::mlp_small:
      if (s.input_dim == 0 || s.hidden_widths.empty()) throw InvalidArgument("mlp_small needs input_dim and widths");
      return mlp_small(s, rng);
    case Arch::cnn_small: return cnn_small(s, rng);
    case Arch::resnet18: return resnet18(s, rng);
    case Arch::mobilenet_v2: return mobilenet_v2(s, rng);
    case Arch::shufflenet_v2: return shufflenet_v2(s, rng);
    case Arch::preresnet20: return preresnet20(s, rng);
  }
  throw InvalidArgument("unsupported architecture");
}

}  // namespace

Classifier::Classifier(ClassifierSpec spec) : spec_(std::move(spec)), net_(build_net(spec_)) {}

Classifier::Classifier(const Classifier& other) : spec_(other.spec_), net_(other.net_->clone()) {}

Classifier& Classifier::operator=(const Classifier& other) {
  if (this != &other) {
    spec_ = other.spec_;
    net_ = other.net_->clone();
  }
  return *this;
}

Shape Classifier::input_shape(std::size_t batch) const {
  if (spec_.arch == Arch::mlp_small) return {batch, spec_.input_dim};
  return {batch, 3, 32, 32};
}

Tensor Classifier::predict(const Tensor& x, std::size_t chunk) const {
  const nn::ModulePtr scratch = net_->clone();
  const std::size_t n = x.dim(0);
  Tensor out;
  for (std::size_t b = 0; b < n; b += chunk) {
    const Tensor y = scratch->forward(slice_rows(x, b, std::min(n, b + chunk)), nn::Mode::eval);
    if (b == 0) {
      out = Tensor({n, y.dim(1)});
    }
    std::copy(y.storage().begin(), y.storage().end(), out.data() + b * y.dim(1));
  }
  return out;
}

Classifier build_classifier(const ClassifierSpec& spec) { return Classifier(spec); }

std::size_t count_parameters(const Classifier& model) { return model.param_count(); }

}  // namespace softmark
