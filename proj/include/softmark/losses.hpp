#pragma once

#include <cstdint>
#include <span>

#include "softmark/signal.hpp"
#include "softmark/tensor.hpp"

namespace softmark {

// alpha is the KLD coefficient and is meant to be negative (the model is
// pushed away from the adversary). tau is a percentage.
struct LossConfig {
  double alpha = -0.1;
  double beta = 1.0;
  double temperature = 4.0;
  double tau = 85.0;

  void validate() const;
};

// A scalar loss and its gradient with respect to one score matrix.
struct LossGrad {
  double value = 0.0;
  Tensor grad;
};

// T^2 * KL(softmax(o_wm/T) || softmax(o_n/T)), summed over classes and
// averaged over rows. This is kl_div(log_softmax(o_n/T), softmax(o_wm/T)) in
// the (input, target) convention. The gradient is taken w.r.t. o_wm only.
double kld_loss(const OutputBatch& o_n, const OutputBatch& o_wm, double temperature);
LossGrad kld_loss_grad(const Tensor& o_n, const Tensor& o_wm, double temperature);

// Mean cross-entropy of softmax(scores) against integer labels.
double main_task_loss(const OutputBatch& scores, std::span<const std::size_t> labels);
LossGrad cross_entropy(const Tensor& scores, std::span<const std::size_t> labels);

// CE(scores_for_ce) + alpha * KLD(o_n, o_wm_raw).
double model_loss(const OutputBatch& scores_for_ce, std::span<const std::size_t> labels, const OutputBatch& o_wm_raw,
                  const OutputBatch& o_n, const LossConfig& cfg);

// Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 - 1e-7].
double detector_loss(std::span<const double> probs, std::span<const int> labels);
// Same loss expressed on pre-sigmoid logits; gradient w.r.t. the logits.
LossGrad detector_loss_logits(const Tensor& logits, std::span<const int> labels);

double total_loss(double model_loss_value, double detect_loss_value, double beta);

enum class FinetuneBranch { unperturbed, reembed };

struct FinetuneLoss {
  FinetuneBranch branch;
  LossGrad loss;  // gradient w.r.t. o_wm; the perturbation shift is constant
};

// Raw-output cross-entropy when current_wm_acc > tau, perturbed-output
// cross-entropy otherwise.
FinetuneBranch finetune_branch(double current_wm_acc, double tau);
FinetuneLoss finetune_loss(const OutputBatch& o_wm, const OutputBatch& perturbed, std::span<const std::size_t> labels,
                           double current_wm_acc, double tau);

// (1 - lambda) * CE(student) + lambda * T^2 * KL(p_teacher || p_student);
// gradient w.r.t. the student scores.
LossGrad distillation_loss(const Tensor& student, const Tensor& teacher, std::span<const std::size_t> labels,
                           double temperature, double lambda);

// Row-wise log_softmax and its backward pass.
Tensor log_softmax_rows(const Tensor& scores);
Tensor log_softmax_rows_backward(const Tensor& log_probs, const Tensor& grad_out);
Tensor softmax_rows(const Tensor& scores);

// Number of kld_loss / kld_loss_grad evaluations in this process.
std::uint64_t kld_invocations();

}  // namespace softmark
