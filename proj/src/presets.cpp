#include "softmark/presets.hpp"

#include "softmark/error.hpp"

namespace softmark::desk {

ClassifierSpec mlp_spec(std::uint64_t seed) { return {Arch::mlp_small, 5, seed, 32, {32, 32, 32}}; }

TrainConfig pretrain_config() {
  TrainConfig c;
  c.epochs = 20;
  c.finetune_epochs = 0;
  c.lr = {0.05, {13}, 0.1};
  c.seed = 1;
  return c;
}

TrainConfig usp_config() {
  TrainConfig c;
  c.epochs = 20;
  c.finetune_epochs = 0;
  c.lr = {0.01, {13}, 0.1};
  c.init_from_adversary = true;
  c.loss = {.alpha = -0.1, .beta = 0.0, .temperature = 4.0, .tau = 85.0};
  c.detector.lr_decay_epoch = 11;
  c.seed = 2;
  return c;
}

TrainConfig csp_config() {
  TrainConfig c;
  c.epochs = 20;
  c.finetune_epochs = 20;
  c.lr = {0.05, {26}, 0.1};
  c.loss = {.alpha = -0.03, .beta = 0.0, .temperature = 4.0, .tau = 85.0};
  c.detector.lr_decay_epoch = 23;
  c.seed = 3;
  return c;
}

AttackConfig finetune_config(double lr) {
  AttackConfig a;
  a.kind = AttackKind::finetune;
  a.lr = lr;
  a.epochs = 20;
  return a;
}

AttackConfig prune_config() {
  AttackConfig a;
  a.kind = AttackKind::prune;
  a.prune_ratio = 0.8;
  a.epochs = 0;
  return a;
}

AttackConfig prune_retrain_config() {
  AttackConfig a = finetune_config(0.01);
  a.kind = AttackKind::prune_retrain;
  a.prune_ratio = 0.8;
  return a;
}

AttackConfig distill_config(const ClassifierSpec& student) {
  AttackConfig a;
  a.kind = AttackKind::distill;
  a.lr = 0.05;
  a.lr_milestones = {13};
  a.epochs = 20;
  a.distill_temperature = 4.0;
  a.distill_lambda = 0.5;
  a.student_spec = student;
  a.seed = 5;
  return a;
}

std::vector<WatermarkSignal> customization_signals() {
  const std::vector<std::vector<int>> rows = {{-1, -1, -1, 1, 1}, {-1, 1, 1, -1, -1}, {1, -1, 1, -1, 1}};
  std::vector<WatermarkSignal> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    WatermarkSignal s;
    s.values = rows[i];
    s.gamma = 2.0;
    s.seed = static_cast<std::int64_t>(i);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<WatermarkSignal> distinct_signals(std::size_t count, std::size_t length, std::int64_t seed,
                                              std::size_t min_distance, double zero_fraction, double gamma) {
  std::vector<WatermarkSignal> kept;
  for (std::int64_t s = seed; kept.size() < count; ++s) {
    if (s - seed > 100000) throw InvalidArgument("could not find enough mutually distant signals");
    WatermarkSignal cand = generate_signal(length, s, zero_fraction, gamma);
    s = cand.seed;
    bool ok = true;
    for (const auto& k : kept) ok = ok && signal_distance(k, cand) >= min_distance;
    if (ok) kept.push_back(std::move(cand));
  }
  return kept;
}

}  // namespace softmark::desk
