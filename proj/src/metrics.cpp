#include "softmark/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "softmark/error.hpp"

namespace softmark {

double main_accuracy(const Tensor& scores, std::span<const std::size_t> labels) {
  if (labels.empty()) throw InvalidArgument("main_accuracy: empty split");
  if (scores.rank() != 2 || scores.dim(0) != labels.size()) throw InvalidArgument("main_accuracy: shape mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = scores.row(i);
    hit += static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin()) == labels[i];
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

double main_accuracy(const Classifier& model, const Split& test) {
  if (test.size() == 0) throw InvalidArgument("main_accuracy: empty split");
  return main_accuracy(model.predict(test.all()), test.labels);
}

DetectionBatch balanced_detection_set(const Tensor& suspect_scores, const Tensor& reference_scores, InputMode mode) {
  if (suspect_scores.rank() != 2 || suspect_scores.shape() != reference_scores.shape())
    throw InvalidArgument("balanced detection set needs equally shaped score banks, got " +
                          shape_str(suspect_scores.shape()) + " and " + shape_str(reference_scores.shape()));
  const std::size_t x = suspect_scores.dim(0);
  DetectionBatch b{transform_outputs(concat_rows(suspect_scores, reference_scores), mode), std::vector<int>(2 * x, 0)};
  std::fill(b.labels.begin(), b.labels.begin() + static_cast<std::ptrdiff_t>(x), 1);
  return b;
}

double wm_accuracy(const Detector& det, const Tensor& suspect_scores, const Tensor& reference_scores) {
  if (suspect_scores.rank() != 2 || suspect_scores.dim(1) != det.num_classes())
    throw InvalidArgument("wm_accuracy: detector expects " + std::to_string(det.num_classes()) + " classes, got " +
                          shape_str(suspect_scores.shape()));
  const DetectionBatch b = balanced_detection_set(suspect_scores, reference_scores, det.input_mode());
  const auto z = det.logits(b.inputs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < z.size(); ++i) hit += (z[i] > 0.0) == (b.labels[i] == 1);
  return 100.0 * static_cast<double>(hit) / static_cast<double>(z.size());
}

double wm_accuracy(const Detector& det, const Classifier& m_wm, const Classifier& m_n, const Split& test) {
  const Tensor x = test.all();
  return wm_accuracy(det, m_wm.predict(x), m_n.predict(x));
}

double wm_det_rate(const Detector& det, const Tensor& scores) {
  const DetectResult r = detect(det, OutputBatch(scores, Source::watermarked));
  if (r.decisions.empty()) throw InvalidArgument("wm_det_rate: no rows");
  const auto flagged = std::count(r.decisions.begin(), r.decisions.end(), true);
  return 100.0 * static_cast<double>(flagged) / static_cast<double>(r.decisions.size());
}

double wm_det_rate(const Detector& det, const Classifier& model, const Split& test) {
  return wm_det_rate(det, model.predict(test.all()));
}

CustomizationMatrix summarize_matrix(std::vector<std::vector<double>> det_rate, double threshold) {
  const std::size_t n = det_rate.size();
  if (n == 0) throw InvalidArgument("customization matrix needs at least one pair");
  CustomizationMatrix m;
  std::size_t tp = 0, fp = 0, fn = 0;
  double diag = 0.0, off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (det_rate[i].size() != n) throw InvalidArgument("customization matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = det_rate[i][j];
      if (!(v >= 0.0 && v <= 100.0)) throw InvalidArgument("detection rates must be in [0, 100]");
      const bool claim = v > threshold;
      if (i == j) {
        diag += v;
        (claim ? tp : fn) += 1;
      } else {
        off += v;
        fp += claim;
      }
    }
  }
  m.identified_rate = diag / static_cast<double>(n);
  m.misidentified_defined = n > 1;
  m.misidentified_rate = n > 1 ? off / static_cast<double>(n * (n - 1)) : 0.0;
  m.f1 = 2 * tp + fp + fn == 0 ? 0.0 : 100.0 * 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  m.det_rate = std::move(det_rate);
  return m;
}

CustomizationMatrix customization_matrix(const std::vector<const Detector*>& detectors,
                                         const std::vector<const Classifier*>& models, const Split& test) {
  if (detectors.empty() || detectors.size() != models.size())
    throw InvalidArgument("customization matrix needs equal, non-empty lists of detectors and models");
  const Tensor x = test.all();
  std::vector<Tensor> outputs;
  for (const auto* m : models) outputs.push_back(m->predict(x));
  std::vector<std::vector<double>> rates(detectors.size(), std::vector<double>(models.size()));
  for (std::size_t i = 0; i < detectors.size(); ++i)
    for (std::size_t j = 0; j < models.size(); ++j) rates[i][j] = wm_det_rate(*detectors[i], outputs[j]);
  return summarize_matrix(std::move(rates));
}

std::string CustomizationMatrix::to_csv() const {
  std::string s = "detector";
  for (std::size_t j = 0; j < det_rate.size(); ++j) s += fmt::format(",M_wm{}", j + 1);
  s += "\n";
  for (std::size_t i = 0; i < det_rate.size(); ++i) {
    s += fmt::format("M_d{}", i + 1);
    for (double v : det_rate[i]) s += fmt::format(",{:.2f}", v);
    s += "\n";
  }
  return s;
}

std::string CustomizationMatrix::to_table() const {
  std::string s = fmt::format("{:<26}", "wm det rate (%)");
  for (std::size_t j = 0; j < det_rate.size(); ++j) s += fmt::format("{:>10}", fmt::format("M_wm{}", j + 1));
  s += "\n";
  for (std::size_t i = 0; i < det_rate.size(); ++i) {
    s += fmt::format("{:<26}", fmt::format("M_d{}", i + 1));
    for (double v : det_rate[i]) s += fmt::format("{:>10.2f}", v);
    s += "\n";
  }
  s += fmt::format("identified rate      {:.2f}\n", identified_rate);
  s += misidentified_defined ? fmt::format("misidentified rate   {:.2f}\n", misidentified_rate)
                             : std::string("misidentified rate   0.00 (undefined for one pair)\n");
  s += fmt::format("F1 (threshold 85)    {:.2f}\n", f1);
  return s;
}

double compression_ratio(std::size_t student_params, std::size_t teacher_params) {
  if (student_params == 0 || teacher_params == 0) throw InvalidArgument("compression ratio of a model with no parameters");
  return static_cast<double>(teacher_params) / static_cast<double>(student_params);
}

double compression_ratio(const Classifier& student, const Classifier& teacher) {
  return compression_ratio(student.param_count(), teacher.param_count());
}

bool is_owned(double wm_acc, double threshold) { return wm_acc > threshold; }

VerifyResult verify(const Detector& det, const Tensor& suspect_scores, const Tensor& reference_bank, double threshold) {
  if (reference_bank.empty()) throw InvalidArgument("verify needs the clean reference output bank");
  const double acc = wm_accuracy(det, suspect_scores, reference_bank);
  return {is_owned(acc, threshold), acc};
}

VerifyResult verify(const Detector& det, const Classifier& suspect, const Split& probe, const Tensor& reference_bank,
                    double threshold) {
  return verify(det, suspect.predict(probe.all()), reference_bank, threshold);
}

}  // namespace softmark
