#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "softmark/losses.hpp"
#include "softmark/nn.hpp"
#include "softmark/optim.hpp"
#include "softmark/signal.hpp"

namespace softmark {

enum class InputMode { raw, log_softmax };

std::string to_string(InputMode m);
InputMode input_mode_from_string(const std::string& s);

// Rows of (possibly transformed) output vectors with 1 = watermarked source.
struct DetectionBatch {
  Tensor inputs;
  std::vector<int> labels;
};

struct DetectResult {
  std::vector<double> probabilities;
  std::vector<bool> decisions;  // probability > 0.5
};

// Five fully-connected layers with ReLU between them and one sigmoid output,
// trained with Adam. Training stops once an epoch is fully correct and
// resumes if a later epoch is not.
class Detector {
 public:
  static constexpr double kDefaultLr = 0.008;

  Detector(std::size_t num_classes, std::vector<std::size_t> hidden_widths, InputMode mode, std::uint64_t seed,
           double lr = kDefaultLr);
  Detector(const Detector& other);
  Detector& operator=(const Detector& other);

  std::size_t num_classes() const { return num_classes_; }
  const std::vector<std::size_t>& hidden_widths() const { return hidden_; }
  InputMode input_mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  bool early_stopped() const { return early_stopped_; }
  void set_early_stopped(bool v) { early_stopped_ = v; }
  void set_lr(double lr) { opt_.set_lr(lr); }
  double lr() const { return opt_.lr(); }

  nn::Sequential& net() { return net_; }
  optim::Adam& optimizer() { return opt_; }
  const optim::Adam& optimizer() const { return opt_; }

  // One batch of training on already-transformed inputs. Returns how many rows
  // the detector got right before the update; no update while early-stopped.
  std::size_t train_batch(const DetectionBatch& batch);
  // Closes an epoch: returns its accuracy (percent) and updates early stopping.
  double finish_epoch(std::size_t correct, std::size_t total);

  // Loss of the frozen detector on transformed inputs and its gradient w.r.t.
  // those inputs. Parameter gradients are left at zero.
  LossGrad input_gradient(const Tensor& inputs, std::span<const int> labels);

  // Pre-sigmoid scores for transformed inputs. Does not touch training caches.
  std::vector<double> logits(const Tensor& inputs) const;

 private:
  std::size_t num_classes_;
  std::vector<std::size_t> hidden_;
  InputMode mode_;
  std::uint64_t seed_;
  nn::Sequential net_;
  optim::Adam opt_;
  bool early_stopped_ = false;
};

Detector build_detector(std::size_t num_classes, const std::vector<std::size_t>& hidden_widths, InputMode mode,
                        std::uint64_t seed);

// Applies the detector's input transform row-wise.
Tensor transform_outputs(const Tensor& scores, InputMode mode);

// wm rows labeled 1, normal rows labeled 0, transformed, then shuffled.
DetectionBatch make_detection_batch(const OutputBatch& o_wm, const OutputBatch& o_n, InputMode mode,
                                    std::uint64_t shuffle_seed);

// Trains over all batches (in order) and returns the epoch accuracy.
double train_detector_epoch(Detector& det, std::span<const DetectionBatch> batches);

DetectResult detect(const Detector& det, const OutputBatch& outputs);

}  // namespace softmark
