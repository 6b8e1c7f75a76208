#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "softmark/datasets.hpp"
#include "softmark/detector.hpp"
#include "softmark/losses.hpp"
#include "softmark/modelzoo.hpp"
#include "softmark/optim.hpp"
#include "softmark/signal.hpp"

namespace softmark {

struct DetectorConfig {
  std::vector<std::size_t> hidden_widths{64, 64, 32, 16};
  double lr = Detector::kDefaultLr;
  int lr_decay_epoch = -1;  // negative: never decay
  double lr_decay_factor = 0.1;
  std::optional<InputMode> input_mode;  // default: raw for USP, log_softmax for CSP
};

struct TrainConfig {
  int epochs = 20;
  int finetune_epochs = 20;  // CSP only
  std::size_t batch_size = 64;
  optim::MultiStepSchedule lr{0.05, {}, 0.1};  // milestones count across all phases
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LossConfig loss;
  DetectorConfig detector;
  std::optional<WatermarkSignal> signal;
  bool use_kld = true;
  bool use_detector = true;
  bool init_from_adversary = false;  // start the watermarked model as a copy of M_n
  double validation_fraction = 0.1;  // slice used to measure wm acc for the re-embed switch
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Scheme { usp, csp };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // pretrain, embed, finetune
  double lr = 0.0;
  double train_loss = 0.0;
  double main_acc = 0.0;
  std::optional<double> wm_acc;
  std::optional<double> detector_train_acc;
  bool detector_early_stopped = false;
  std::optional<double> validation_wm_acc;
  std::optional<std::string> branch;  // unperturbed / reembed during finetune
  std::optional<double> kld;          // mean KLD between M_wm and M_n on the test split
};

struct TrainedPair {
  Classifier watermarked;
  std::optional<Detector> detector;
  std::optional<WatermarkSignal> signal;
  Scheme scheme = Scheme::usp;
  std::string adversary_ref;
  TrainConfig config;
  std::vector<EpochRecord> log;
  Tensor reference_bank;  // M_n scores on the test split
  double main_acc = 0.0;
  std::optional<double> wm_acc;
  int reembed_epochs = 0;
  std::optional<double> kld_statistic;
};

// Complete mid-run state, captured at the end of every epoch.
struct EmbedState {
  int next_epoch = 0;
  Classifier model;
  std::optional<Detector> detector;
  std::vector<Tensor> optimizer_state;
  std::string rng_state;
  std::vector<EpochRecord> log;
  int reembed_epochs = 0;
};

struct RunHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const EmbedState&)> on_checkpoint;
  std::optional<EmbedState> resume_from;
};

struct PretrainResult {
  Classifier model;
  double test_acc = 0.0;
  std::vector<EpochRecord> log;
};

PretrainResult pretrain_adversary(const DatasetHandle& data, const ClassifierSpec& spec, const TrainConfig& cfg,
                                  const RunHooks& hooks = {});

TrainedPair embed_usp(const Classifier& m_n, const DatasetHandle& data, const ClassifierSpec& spec,
                      const TrainConfig& cfg, const RunHooks& hooks = {});

TrainedPair embed_csp(const Classifier& m_n, const DatasetHandle& data, const ClassifierSpec& spec,
                      const WatermarkSignal& signal, const TrainConfig& cfg, const RunHooks& hooks = {});

// Shared mini-batch loop for any plain cross-entropy training (pretraining and
// fine-tuning style attacks).
Tensor training_batch(const DatasetHandle& data, std::span<const std::size_t> idx, Rng& rng);

}  // namespace softmark
