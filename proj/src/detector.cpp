#include "softmark/detector.hpp"

#include <cmath>

#include "softmark/error.hpp"
#include "softmark/rng.hpp"

namespace softmark {

std::string to_string(InputMode m) { return m == InputMode::raw ? "raw" : "log_softmax"; }

InputMode input_mode_from_string(const std::string& s) {
  if (s == "raw") return InputMode::raw;
  if (s == "log_softmax") return InputMode::log_softmax;
  throw InvalidArgument("unknown detector input mode '" + s + "' (expected raw or log_softmax)");
}

namespace {

nn::Sequential make_net(std::size_t in, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  if (in < 2) throw InvalidArgument("detector needs at least 2 input classes");
  if (hidden.size() != 4)
    throw InvalidArgument("detector needs exactly 4 hidden widths, got " + std::to_string(hidden.size()));
  Rng rng(seed);
  nn::Sequential net;
  std::size_t width = in;
  for (std::size_t h : hidden) {
    if (h == 0) throw InvalidArgument("detector hidden widths must be positive");
    net.emplace<nn::Linear>(width, h, true, rng);
    net.emplace<nn::ReLU>();
    width = h;
  }
  net.emplace<nn::Linear>(width, 1, true, rng);
  return net;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Detector::Detector(std::size_t num_classes, std::vector<std::size_t> hidden_widths, InputMode mode,
                   std::uint64_t seed, double lr)
    : num_classes_(num_classes),
      hidden_(std::move(hidden_widths)),
      mode_(mode),
      seed_(seed),
      net_(make_net(num_classes_, hidden_, seed_)),
      opt_(nn::parameters_of(net_), {.lr = lr}) {}

Detector::Detector(const Detector& other)
    : num_classes_(other.num_classes_),
      hidden_(other.hidden_),
      mode_(other.mode_),
      seed_(other.seed_),
      net_(other.net_),
      opt_(nn::parameters_of(net_), {.lr = other.opt_.lr()}),
      early_stopped_(other.early_stopped_) {
  opt_.state() = other.opt_.state();
  opt_.set_steps(other.opt_.steps());
}

Detector& Detector::operator=(const Detector& other) {
  if (this == &other) return *this;
  if (other.num_classes_ != num_classes_ || other.hidden_ != hidden_)
    throw InvalidArgument("cannot assign detectors of different shape");
  mode_ = other.mode_;
  seed_ = other.seed_;
  early_stopped_ = other.early_stopped_;
  auto dst = nn::state_of(net_);
  auto src = nn::state_of(const_cast<Detector&>(other).net_);
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value = *src[i].value;
  opt_.state() = other.opt_.state();
  opt_.set_steps(other.opt_.steps());
  opt_.set_lr(other.opt_.lr());
  return *this;
}

std::size_t Detector::train_batch(const DetectionBatch& batch) {
  if (batch.inputs.rank() != 2 || batch.inputs.dim(1) != num_classes_)
    throw InvalidArgument("detection batch has shape " + shape_str(batch.inputs.shape()) + ", detector expects " +
                          std::to_string(num_classes_) + " columns");
  const Tensor z = net_.forward(batch.inputs, nn::Mode::train);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < z.size(); ++i) correct += (z[i] > 0.0) == (batch.labels[i] == 1);
  if (!early_stopped_) {
    nn::zero_grad(net_);
    const LossGrad l = detector_loss_logits(z, batch.labels);
    if (!std::isfinite(l.value)) throw NumericError("detector loss is not finite");
    net_.backward(l.grad);
    opt_.step();
  }
  return correct;
}

double Detector::finish_epoch(std::size_t correct, std::size_t total) {
  if (total == 0) throw InvalidArgument("detector epoch saw no rows");
  const double acc = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  early_stopped_ = acc >= 100.0;
  return acc;
}

LossGrad Detector::input_gradient(const Tensor& inputs, std::span<const int> labels) {
  const Tensor z = net_.forward(inputs, nn::Mode::train);
  LossGrad l = detector_loss_logits(z, labels);
  Tensor gx = net_.backward(l.grad);
  nn::zero_grad(net_);
  return {l.value, std::move(gx)};
}

std::vector<double> Detector::logits(const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.dim(1) != num_classes_)
    throw InvalidArgument("detector expects " + std::to_string(num_classes_) + " columns, got " +
                          shape_str(inputs.shape()));
  nn::Sequential scratch(net_);
  const Tensor z = scratch.forward(inputs, nn::Mode::eval);
  return z.storage();
}

Detector build_detector(std::size_t num_classes, const std::vector<std::size_t>& hidden_widths, InputMode mode,
                        std::uint64_t seed) {
  return Detector(num_classes, hidden_widths, mode, seed);
}

Tensor transform_outputs(const Tensor& scores, InputMode mode) {
  return mode == InputMode::raw ? scores : log_softmax_rows(scores);
}

DetectionBatch make_detection_batch(const OutputBatch& o_wm, const OutputBatch& o_n, InputMode mode,
                                    std::uint64_t shuffle_seed) {
  if (o_wm.classes() != o_n.classes())
    throw InvalidArgument("make_detection_batch: class dims differ (" + std::to_string(o_wm.classes()) + " vs " +
                          std::to_string(o_n.classes()) + ")");
  if (o_wm.rows() == 0 || o_n.rows() == 0) throw InvalidArgument("make_detection_batch: empty batch");
  const Tensor all = transform_outputs(concat_rows(o_wm.scores(), o_n.scores()), mode);
  std::vector<int> labels(all.dim(0), 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(o_wm.rows()), 1);
  Rng rng(shuffle_seed);
  const auto perm = rng.permutation(all.dim(0));
  DetectionBatch out{gather_rows(all, perm), std::vector<int>(labels.size())};
  for (std::size_t i = 0; i < perm.size(); ++i) out.labels[i] = labels[perm[i]];
  return out;
}

double train_detector_epoch(Detector& det, std::span<const DetectionBatch> batches) {
  if (batches.empty()) throw InvalidArgument("train_detector_epoch: empty batch stream");
  std::size_t correct = 0, total = 0;
  for (const auto& b : batches) {
    correct += det.train_batch(b);
    total += b.labels.size();
  }
  return det.finish_epoch(correct, total);
}

DetectResult detect(const Detector& det, const OutputBatch& outputs) {
  if (outputs.classes() != det.num_classes())
    throw InvalidArgument("detector expects " + std::to_string(det.num_classes()) + " classes, outputs have " +
                          std::to_string(outputs.classes()));
  const auto z = det.logits(transform_outputs(outputs.scores(), det.input_mode()));
  DetectResult r;
  r.probabilities.reserve(z.size());
  r.decisions.reserve(z.size());
  for (double v : z) {
    r.probabilities.push_back(sigmoid(v));
    r.decisions.push_back(r.probabilities.back() > 0.5);
  }
  return r;
}

}  // namespace softmark
