#include "softmark/losses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "softmark/error.hpp"

namespace softmark {
namespace {

std::atomic<std::uint64_t> g_kld_calls{0};

constexpr double kProbClamp = 1e-7;

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || a.shape() != b.shape())
    throw InvalidArgument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  if (!a.all_finite() || !b.all_finite()) throw NumericError(std::string(what) + ": non-finite input");
}

void check_labels(const Tensor& scores, std::span<const std::size_t> labels) {
  if (scores.rank() != 2 || labels.size() != scores.dim(0))
    throw InvalidArgument("cross_entropy: " + std::to_string(labels.size()) + " labels for scores " +
                          shape_str(scores.shape()));
  for (std::size_t y : labels)
    if (y >= scores.dim(1)) throw InvalidArgument("cross_entropy: label " + std::to_string(y) + " out of range");
  if (!scores.all_finite()) throw NumericError("cross_entropy: non-finite scores");
}

Tensor scaled(const Tensor& t, double s) {
  Tensor out = t;
  for (double& v : out.values()) v *= s;
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!std::isfinite(alpha)) throw InvalidArgument("loss.alpha must be finite");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("loss.beta must be finite and >= 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidArgument("loss.temperature must be > 0");
  if (!(tau >= 0.0 && tau <= 100.0)) throw InvalidArgument("loss.tau must be in [0, 100]");
}

Tensor log_softmax_rows(const Tensor& scores) {
  Tensor out(scores.shape());
  const std::size_t n = scores.dim(0), c = scores.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = scores.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, scores.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(scores.at(i, j) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = scores.at(i, j) - lse;
  }
  return out;
}

Tensor log_softmax_rows_backward(const Tensor& log_probs, const Tensor& grad_out) {
  Tensor gx(log_probs.shape());
  const std::size_t n = log_probs.dim(0), c = log_probs.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += grad_out.at(i, j);
    for (std::size_t j = 0; j < c; ++j) gx.at(i, j) = grad_out.at(i, j) - std::exp(log_probs.at(i, j)) * s;
  }
  return gx;
}

Tensor softmax_rows(const Tensor& scores) {
  Tensor p = log_softmax_rows(scores);
  for (double& v : p.values()) v = std::exp(v);
  return p;
}

LossGrad kld_loss_grad(const Tensor& o_n, const Tensor& o_wm, double temperature) {
  ++g_kld_calls;
  check_pair(o_n, o_wm, "kld_loss");
  if (!(temperature > 0.0)) throw InvalidArgument("kld_loss: temperature must be > 0");
  const double t = temperature;
  const Tensor lp = log_softmax_rows(scaled(o_n, 1.0 / t));
  const Tensor lq = log_softmax_rows(scaled(o_wm, 1.0 / t));
  const std::size_t n = o_n.dim(0), c = o_n.dim(1);
  LossGrad out{0.0, Tensor(o_wm.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    double kl = 0.0;
    for (std::size_t j = 0; j < c; ++j) kl += std::exp(lq.at(i, j)) * (lq.at(i, j) - lp.at(i, j));
    out.value += kl;
    for (std::size_t j = 0; j < c; ++j)
      out.grad.at(i, j) = t / static_cast<double>(n) * std::exp(lq.at(i, j)) * (lq.at(i, j) - lp.at(i, j) - kl);
  }
  out.value *= t * t / static_cast<double>(n);
  return out;
}

double kld_loss(const OutputBatch& o_n, const OutputBatch& o_wm, double temperature) {
  return kld_loss_grad(o_n.scores(), o_wm.scores(), temperature).value;
}

LossGrad cross_entropy(const Tensor& scores, std::span<const std::size_t> labels) {
  check_labels(scores, labels);
  const std::size_t n = scores.dim(0);
  const Tensor lp = log_softmax_rows(scores);
  LossGrad out{0.0, Tensor(scores.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    out.value -= lp.at(i, labels[i]);
    for (std::size_t j = 0; j < scores.dim(1); ++j)
      out.grad.at(i, j) = (std::exp(lp.at(i, j)) - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

double main_task_loss(const OutputBatch& scores, std::span<const std::size_t> labels) {
  return cross_entropy(scores.scores(), labels).value;
}

double model_loss(const OutputBatch& scores_for_ce, std::span<const std::size_t> labels, const OutputBatch& o_wm_raw,
                  const OutputBatch& o_n, const LossConfig& cfg) {
  if (!std::isfinite(cfg.alpha)) throw InvalidArgument("model_loss: alpha must be finite");
  return main_task_loss(scores_for_ce, labels) + cfg.alpha * kld_loss(o_n, o_wm_raw, cfg.temperature);
}

double detector_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw InvalidArgument("detector_loss: " + std::to_string(probs.size()) + " probabilities for " +
                          std::to_string(labels.size()) + " labels");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i])) throw NumericError("detector_loss: non-finite probability");
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    s += labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -s / static_cast<double>(probs.size());
}

LossGrad detector_loss_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.size() != labels.size() || logits.empty())
    throw InvalidArgument("detector_loss: logits/labels size mismatch");
  std::vector<double> probs(logits.size());
  LossGrad out{0.0, Tensor(logits.shape())};
  const double n = static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    out.grad[i] = (probs[i] - labels[i]) / n;
  }
  out.value = detector_loss(probs, labels);
  return out;
}

double total_loss(double model_loss_value, double detect_loss_value, double beta) {
  return model_loss_value + beta * detect_loss_value;
}

FinetuneBranch finetune_branch(double current_wm_acc, double tau) {
  return current_wm_acc > tau ? FinetuneBranch::unperturbed : FinetuneBranch::reembed;
}

FinetuneLoss finetune_loss(const OutputBatch& o_wm, const OutputBatch& perturbed, std::span<const std::size_t> labels,
                           double current_wm_acc, double tau) {
  if (o_wm.scores().shape() != perturbed.scores().shape())
    throw InvalidArgument("finetune_loss: raw and perturbed batches differ in shape");
  const FinetuneBranch b = finetune_branch(current_wm_acc, tau);
  return {b, cross_entropy(b == FinetuneBranch::unperturbed ? o_wm.scores() : perturbed.scores(), labels)};
}

LossGrad distillation_loss(const Tensor& student, const Tensor& teacher, std::span<const std::size_t> labels,
                           double temperature, double lambda) {
  check_pair(student, teacher, "distillation_loss");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("distillation_loss: lambda must be in [0, 1]");
  if (!(temperature > 0.0)) throw InvalidArgument("distillation_loss: temperature must be > 0");
  LossGrad ce = cross_entropy(student, labels);
  const double t = temperature;
  const Tensor ls = log_softmax_rows(scaled(student, 1.0 / t));
  const Tensor lt = log_softmax_rows(scaled(teacher, 1.0 / t));
  const std::size_t n = student.dim(0), c = student.dim(1);
  double kl = 0.0;
  LossGrad out{0.0, Tensor(student.shape())};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double pt = std::exp(lt.at(i, j));
      kl += pt * (lt.at(i, j) - ls.at(i, j));
      out.grad.at(i, j) = (1.0 - lambda) * ce.grad.at(i, j) +
                          lambda * t / static_cast<double>(n) * (std::exp(ls.at(i, j)) - pt);
    }
  out.value = (1.0 - lambda) * ce.value + lambda * t * t * kl / static_cast<double>(n);
  return out;
}

std::uint64_t kld_invocations() { return g_kld_calls.load(); }

}  // namespace softmark
