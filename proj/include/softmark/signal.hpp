#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "softmark/tensor.hpp"

namespace softmark {

// A watermark signal S with entries in {-1, 0, 1} and strength gamma. When a
// label filter is present, class j is shifted by gamma * S[filter[j]] and
// classes outside the filter are left alone.
struct WatermarkSignal {
  std::vector<int> values;
  double gamma = 2.0;
  std::optional<std::map<std::size_t, std::size_t>> label_filter;
  std::int64_t seed = 0;

  std::size_t length() const { return values.size(); }
  // Throws InvalidArgument if the signal cannot be used with num_classes outputs.
  void validate(std::size_t num_classes) const;
};

enum class Source { watermarked, normal };

// Raw pre-softmax scores [rows, classes] tagged with the model they came from.
class OutputBatch {
 public:
  OutputBatch(Tensor scores, Source source);

  const Tensor& scores() const noexcept { return scores_; }
  Source source() const noexcept { return source_; }
  std::size_t rows() const { return scores_.dim(0); }
  std::size_t classes() const { return scores_.dim(1); }

 private:
  Tensor scores_;
  Source source_;
};

// Each entry is zero with probability zero_fraction, otherwise +1 or -1 with
// equal odds. An all-zero draw is redrawn with seed + 1; the returned seed is
// the one that produced the values.
WatermarkSignal generate_signal(std::size_t length, std::int64_t seed, double zero_fraction = 0.2,
                                double gamma = 2.0);

// out[i][j] = in[i][j] - gamma * S[j]
OutputBatch apply_perturbation(const OutputBatch& batch, const WatermarkSignal& signal);
// out[i][j] = in[i][j] - gamma * S[filter[j]] for j in the filter, unchanged otherwise.
OutputBatch apply_filtered_perturbation(const OutputBatch& batch, const WatermarkSignal& signal);
// Dispatches on whether the signal carries a label filter.
Tensor perturb_scores(const Tensor& scores, const WatermarkSignal& signal);

// Number of positions where two equal-length signals differ.
std::size_t signal_distance(const WatermarkSignal& a, const WatermarkSignal& b);

}  // namespace softmark
