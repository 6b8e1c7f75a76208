#pragma once

#include <optional>
#include <string>
#include <vector>

#include "softmark/datasets.hpp"
#include "softmark/detector.hpp"
#include "softmark/modelzoo.hpp"

namespace softmark {

enum class AttackKind { finetune, prune, prune_retrain, distill };
std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackConfig {
  AttackKind kind = AttackKind::finetune;
  double lr = 0.01;
  int epochs = 20;
  std::vector<int> lr_milestones;  // decay x0.1 at these epochs
  double prune_ratio = 0.8;
  double distill_temperature = 4.0;
  double distill_lambda = 0.5;  // weight of the soft term
  std::optional<ClassifierSpec> student_spec;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 7;

  void validate() const;
};

struct AttackPoint {
  int epoch = 0;
  double main_acc = 0.0;
  double wm_acc = 0.0;
  double det_rate = 0.0;
};

// Trajectory starts with the pre-attack point (epoch 0). Pruning without
// retraining records a single post-pruning point at epoch 1.
struct AttackReport {
  AttackConfig config;
  std::vector<AttackPoint> trajectory;
  AttackPoint final_point;
  AttackPoint best_main;  // highest main acc after the attack started
  std::optional<double> compression_ratio;
  std::optional<std::size_t> pruned_weights, prunable_weights;
};

// Owner-side scoring of a suspect: detector plus clean reference bank on the test split.
struct Judge {
  const Detector& detector;
  const Tensor& reference_bank;
  const Split& test;

  AttackPoint score(const Classifier& model, int epoch) const;
};

// 1 = kept, 0 = pruned, one entry per prunable weight tensor in state order.
struct PruneMask {
  std::vector<std::vector<unsigned char>> keep;
  std::size_t zeroed = 0, total = 0;

  void apply(Classifier& model) const;
};

// Global unstructured magnitude pruning over convolution and fully-connected
// weights. Exactly ceil(ratio * N) weights are zeroed, ties broken by position.
PruneMask magnitude_prune(Classifier& model, double ratio);

// Forward-only access to a teacher; distillation sees nothing else.
class TeacherOracle {
 public:
  explicit TeacherOracle(const Classifier& teacher) : teacher_(teacher) {}
  Tensor query(const Tensor& x) const { return teacher_.predict(x); }
  std::size_t parameter_count() const { return teacher_.param_count(); }
  std::size_t num_classes() const { return teacher_.spec().num_classes; }

 private:
  const Classifier& teacher_;
};

struct AttackResult {
  Classifier model;
  AttackReport report;
  std::optional<PruneMask> mask;
};

AttackResult finetune_attack(const Classifier& m_wm, const DatasetHandle& data, const Judge& judge,
                             const AttackConfig& cfg);
AttackResult prune_attack(const Classifier& m_wm, const Judge& judge, const AttackConfig& cfg);
AttackResult prune_retrain_attack(const Classifier& m_wm, const DatasetHandle& data, const Judge& judge,
                                  const AttackConfig& cfg);
AttackResult distill_attack(const TeacherOracle& teacher, const DatasetHandle& data, const Judge& judge,
                            const AttackConfig& cfg);

// Dispatch on cfg.kind. Distillation wraps m_wm in a TeacherOracle.
AttackResult run_attack(const Classifier& m_wm, const DatasetHandle& data, const Judge& judge, const AttackConfig& cfg);

}  // namespace softmark
