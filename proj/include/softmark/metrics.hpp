#pragma once

#include <string>
#include <vector>

#include "softmark/datasets.hpp"
#include "softmark/detector.hpp"
#include "softmark/modelzoo.hpp"

namespace softmark {

inline constexpr double kVerifyThreshold = 85.0;

double main_accuracy(const Tensor& scores, std::span<const std::size_t> labels);
double main_accuracy(const Classifier& model, const Split& test);

// x suspect rows labeled 1 followed by x reference rows labeled 0, transformed
// for the detector's input mode.
DetectionBatch balanced_detection_set(const Tensor& suspect_scores, const Tensor& reference_scores, InputMode mode);

// Decision accuracy (percent) on the balanced set built from the two score banks.
double wm_accuracy(const Detector& det, const Tensor& suspect_scores, const Tensor& reference_scores);
double wm_accuracy(const Detector& det, const Classifier& m_wm, const Classifier& m_n, const Split& test);

// Percent of rows the detector flags as watermarked.
double wm_det_rate(const Detector& det, const Tensor& scores);
double wm_det_rate(const Detector& det, const Classifier& model, const Split& test);

struct CustomizationMatrix {
  std::vector<std::vector<double>> det_rate;  // [detector][model], percent
  double identified_rate = 0.0;               // mean of the diagonal
  double misidentified_rate = 0.0;            // mean off the diagonal
  bool misidentified_defined = true;          // false for a 1x1 matrix
  double f1 = 0.0;

  std::string to_csv() const;
  std::string to_table() const;
};

// Each cell is a claim "detector i owns model j" when its rate exceeds
// threshold; diagonal cells are the true owners.
CustomizationMatrix summarize_matrix(std::vector<std::vector<double>> det_rate, double threshold = kVerifyThreshold);
CustomizationMatrix customization_matrix(const std::vector<const Detector*>& detectors,
                                         const std::vector<const Classifier*>& models, const Split& test);

// teacher parameters / student parameters
double compression_ratio(const Classifier& student, const Classifier& teacher);
double compression_ratio(std::size_t student_params, std::size_t teacher_params);

struct VerifyResult {
  bool owned = false;
  double wm_acc = 0.0;
};

bool is_owned(double wm_acc, double threshold = kVerifyThreshold);
// The reference bank holds the clean model's outputs on the same probe inputs.
VerifyResult verify(const Detector& det, const Tensor& suspect_scores, const Tensor& reference_bank,
                    double threshold = kVerifyThreshold);
VerifyResult verify(const Detector& det, const Classifier& suspect, const Split& probe, const Tensor& reference_bank,
                    double threshold = kVerifyThreshold);

}  // namespace softmark
