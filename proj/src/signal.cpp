#include "softmark/signal.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "softmark/error.hpp"
#include "softmark/rng.hpp"

namespace softmark {

void WatermarkSignal::validate(std::size_t num_classes) const {
  if (values.size() < 2) throw InvalidArgument("signal length must be at least 2");
  for (int v : values)
    if (v != -1 && v != 0 && v != 1) throw InvalidArgument("signal entries must be -1, 0 or 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("signal gamma must be finite and >= 0");
  if (!label_filter) {
    if (values.size() != num_classes)
      throw InvalidArgument("signal length " + std::to_string(values.size()) + " does not match " +
                            std::to_string(num_classes) + " classes");
    return;
  }
  std::set<std::size_t> targets;
  for (const auto& [cls, idx] : *label_filter) {
    if (cls >= num_classes)
      throw InvalidArgument("label filter class " + std::to_string(cls) + " out of range for " +
                            std::to_string(num_classes) + " classes");
    if (idx >= values.size()) throw InvalidArgument("label filter index " + std::to_string(idx) + " out of range");
    if (!targets.insert(idx).second) throw InvalidArgument("label filter is not injective");
  }
  if (targets.size() != values.size()) throw InvalidArgument("label filter must cover every signal index");
}

OutputBatch::OutputBatch(Tensor scores, Source source) : scores_(std::move(scores)), source_(source) {
  if (scores_.rank() != 2) throw InvalidArgument("output batch must be [rows, classes], got " + shape_str(scores_.shape()));
  if (scores_.dim(1) < 2) throw InvalidArgument("output batch needs at least 2 classes");
  if (!scores_.all_finite()) throw NumericError("output batch contains non-finite scores");
}

WatermarkSignal generate_signal(std::size_t length, std::int64_t seed, double zero_fraction, double gamma) {
  if (length < 2) throw InvalidArgument("signal length must be at least 2");
  if (!(zero_fraction >= 0.0 && zero_fraction < 1.0)) throw InvalidArgument("zero_fraction must be in [0, 1)");
  for (std::int64_t s = seed;; ++s) {
    Rng rng(static_cast<std::uint64_t>(s) ^ 0x5157'4e41'4c00'0000ULL);
    WatermarkSignal sig;
    sig.values.resize(length);
    for (int& v : sig.values) v = rng.uniform() < zero_fraction ? 0 : (rng.uniform() < 0.5 ? 1 : -1);
    if (std::any_of(sig.values.begin(), sig.values.end(), [](int v) { return v != 0; })) {
      sig.gamma = gamma;
      sig.seed = s;
      return sig;
    }
  }
}

namespace {

void check_unfiltered(const OutputBatch& batch, const WatermarkSignal& signal) {
  if (signal.label_filter) throw InvalidArgument("apply_perturbation needs a signal without label filter");
  if (signal.length() != batch.classes())
    throw InvalidArgument("signal length " + std::to_string(signal.length()) + " does not match " +
                          std::to_string(batch.classes()) + " classes");
}

}  // namespace

Tensor perturb_scores(const Tensor& scores, const WatermarkSignal& signal) {
  const std::size_t n = scores.dim(0), c = scores.dim(1);
  // shift[j] is gamma * S[k] for the signal index k that class j maps to.
  std::vector<double> shift(c, 0.0);
  if (signal.label_filter) {
    for (const auto& [cls, idx] : *signal.label_filter) {
      if (cls >= c) throw InvalidArgument("label filter class " + std::to_string(cls) + " out of range");
      shift[cls] = signal.gamma * signal.values.at(idx);
    }
  } else {
    if (signal.length() != c) throw InvalidArgument("signal length does not match class count");
    for (std::size_t j = 0; j < c; ++j) shift[j] = signal.gamma * signal.values[j];
  }
  Tensor out = scores;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) -= shift[j];
  return out;
}

OutputBatch apply_perturbation(const OutputBatch& batch, const WatermarkSignal& signal) {
  check_unfiltered(batch, signal);
  return OutputBatch(perturb_scores(batch.scores(), signal), batch.source());
}

OutputBatch apply_filtered_perturbation(const OutputBatch& batch, const WatermarkSignal& signal) {
  if (!signal.label_filter) throw InvalidArgument("apply_filtered_perturbation needs a label filter");
  signal.validate(batch.classes());
  return OutputBatch(perturb_scores(batch.scores(), signal), batch.source());
}

std::size_t signal_distance(const WatermarkSignal& a, const WatermarkSignal& b) {
  if (a.length() != b.length()) throw InvalidArgument("signal_distance needs equal-length signals");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.length(); ++i) d += a.values[i] != b.values[i];
  return d;
}

}  // namespace softmark
