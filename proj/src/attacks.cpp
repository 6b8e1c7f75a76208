#include "softmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "softmark/error.hpp"
#include "softmark/losses.hpp"
#include "softmark/metrics.hpp"
#include "softmark/optim.hpp"
#include "softmark/pipelines.hpp"

namespace softmark {

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::finetune: return "finetune";
    case AttackKind::prune: return "prune";
    case AttackKind::prune_retrain: return "prune_retrain";
    case AttackKind::distill: return "distill";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  for (AttackKind k : {AttackKind::finetune, AttackKind::prune, AttackKind::prune_retrain, AttackKind::distill})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown attack kind '" + s + "' (expected finetune, prune, prune_retrain or distill)");
}

void AttackConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("attack.epochs must be >= 0");
  if (kind != AttackKind::prune && !(lr > 0.0)) throw InvalidArgument("attack.lr must be > 0");
  if ((kind == AttackKind::prune || kind == AttackKind::prune_retrain) && !(prune_ratio >= 0.0 && prune_ratio < 1.0))
    throw InvalidArgument("attack.prune_ratio must be in [0, 1)");
  if (kind == AttackKind::distill) {
    if (!(distill_temperature > 0.0)) throw InvalidArgument("attack.temperature must be > 0");
    if (!(distill_lambda >= 0.0 && distill_lambda <= 1.0)) throw InvalidArgument("attack.lambda must be in [0, 1]");
  }
  if (batch_size < 2) throw InvalidArgument("attack.batch_size must be >= 2");
}

AttackPoint Judge::score(const Classifier& model, int epoch) const {
  const Tensor scores = model.predict(test.all());
  return {epoch, main_accuracy(scores, test.labels), wm_accuracy(detector, scores, reference_bank),
          wm_det_rate(detector, scores)};
}

void PruneMask::apply(Classifier& model) const {
  std::size_t t = 0;
  for (auto& s : nn::state_of(model.net())) {
    if (!s.prunable) continue;
    const auto& k = keep.at(t++);
    for (std::size_t i = 0; i < k.size(); ++i)
      if (!k[i]) (*s.value)[i] = 0.0;
  }
}

PruneMask magnitude_prune(Classifier& model, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw InvalidArgument("prune ratio must be in [0, 1)");
  std::vector<Tensor*> weights;
  for (auto& s : nn::state_of(model.net()))
    if (s.prunable) weights.push_back(s.value);
  struct Ref {
    double mag;
    std::size_t tensor, index;
  };
  std::vector<Ref> all;
  for (std::size_t t = 0; t < weights.size(); ++t)
    for (std::size_t i = 0; i < weights[t]->size(); ++i) all.push_back({std::abs((*weights[t])[i]), t, i});

  const double want = ratio * static_cast<double>(all.size());
  auto k = static_cast<std::size_t>(std::ceil(want));
  if (k > 0 && static_cast<double>(k) - want > 1.0 - 1e-9) --k;  // guard against 8.0000000001-style products
  // all is already in position order, so a stable sort breaks ties by position.
  std::stable_sort(all.begin(), all.end(), [](const Ref& a, const Ref& b) { return a.mag < b.mag; });

  PruneMask mask;
  mask.total = all.size();
  mask.zeroed = k;
  for (const Tensor* w : weights) mask.keep.emplace_back(w->size(), 1);
  for (std::size_t j = 0; j < k; ++j) mask.keep[all[j].tensor][all[j].index] = 0;
  mask.apply(model);
  return mask;
}

namespace {

AttackReport start_report(const AttackConfig& cfg, const Judge& judge, const Classifier& before) {
  AttackReport r;
  r.config = cfg;
  r.trajectory.push_back(judge.score(before, 0));
  return r;
}

void close_report(AttackReport& r) {
  r.final_point = r.trajectory.back();
  r.best_main = r.trajectory.size() > 1 ? r.trajectory[1] : r.trajectory[0];
  for (std::size_t i = 1; i < r.trajectory.size(); ++i)
    if (r.trajectory[i].main_acc > r.best_main.main_acc) r.best_main = r.trajectory[i];
}

// Plain cross-entropy SGD over the attacker's data, optionally keeping pruned weights at zero.
void cross_entropy_epochs(Classifier& model, const DatasetHandle& data, const Judge& judge, const AttackConfig& cfg,
                          const PruneMask* mask, AttackReport& report) {
  optim::Sgd opt(nn::parameters_of(model.net()), {cfg.lr, cfg.momentum, cfg.weight_decay});
  const optim::MultiStepSchedule sched{cfg.lr, cfg.lr_milestones, 0.1};
  Rng rng(cfg.seed);
  for (int e = 0; e < cfg.epochs; ++e) {
    opt.set_lr(sched.at(e));
    for (const auto& idx : make_batches(data.train.size(), cfg.batch_size, rng)) {
      const Tensor x = training_batch(data, idx, rng);
      std::vector<std::size_t> y;
      for (std::size_t i : idx) y.push_back(data.train.labels[i]);
      const Tensor out = model.forward(x, nn::Mode::train);
      const LossGrad lg = cross_entropy(out, y);
      if (!std::isfinite(lg.value)) throw TrainingError("fine-tuning attack diverged", e);
      nn::zero_grad(model.net());
      model.backward(lg.grad);
      opt.step();
      if (mask) mask->apply(model);
    }
    report.trajectory.push_back(judge.score(model, e + 1));
  }
}

}  // namespace

AttackResult finetune_attack(const Classifier& m_wm, const DatasetHandle& data, const Judge& judge,
                             const AttackConfig& cfg) {
  cfg.validate();
  Classifier model = m_wm;
  AttackReport report = start_report(cfg, judge, model);
  cross_entropy_epochs(model, data, judge, cfg, nullptr, report);
  close_report(report);
  return {std::move(model), std::move(report), std::nullopt};
}

AttackResult prune_attack(const Classifier& m_wm, const Judge& judge, const AttackConfig& cfg) {
  cfg.validate();
  Classifier model = m_wm;
  AttackReport report = start_report(cfg, judge, model);
  PruneMask mask = magnitude_prune(model, cfg.prune_ratio);
  report.trajectory.push_back(judge.score(model, 1));
  report.pruned_weights = mask.zeroed;
  report.prunable_weights = mask.total;
  close_report(report);
  return {std::move(model), std::move(report), std::move(mask)};
}

AttackResult prune_retrain_attack(const Classifier& m_wm, const DatasetHandle& data, const Judge& judge,
                                  const AttackConfig& cfg) {
  cfg.validate();
  Classifier model = m_wm;
  AttackReport report = start_report(cfg, judge, model);
  PruneMask mask = magnitude_prune(model, cfg.prune_ratio);
  cross_entropy_epochs(model, data, judge, cfg, &mask, report);
  report.pruned_weights = mask.zeroed;
  report.prunable_weights = mask.total;
  close_report(report);
  return {std::move(model), std::move(report), std::move(mask)};
}

AttackResult distill_attack(const TeacherOracle& teacher, const DatasetHandle& data, const Judge& judge,
                            const AttackConfig& cfg) {
  cfg.validate();
  if (!cfg.student_spec) throw InvalidArgument("distillation needs a student architecture");
  if (cfg.student_spec->num_classes != teacher.num_classes())
    throw InvalidArgument("student and teacher class counts differ");
  Classifier student = build_classifier(*cfg.student_spec);
  const Shape in = student.input_shape(1);
  if (Shape(in.begin() + 1, in.end()) != data.train.sample_shape)
    throw InvalidArgument("student " + to_string(cfg.student_spec->arch) + " takes inputs " +
                          shape_str(Shape(in.begin() + 1, in.end())) + " but " + data.name + " samples are " +
                          shape_str(data.train.sample_shape));
  AttackReport report = start_report(cfg, judge, student);
  optim::Sgd opt(nn::parameters_of(student.net()), {cfg.lr, cfg.momentum, cfg.weight_decay});
  const optim::MultiStepSchedule sched{cfg.lr, cfg.lr_milestones, 0.1};
  Rng rng(cfg.seed);
  for (int e = 0; e < cfg.epochs; ++e) {
    opt.set_lr(sched.at(e));
    for (const auto& idx : make_batches(data.train.size(), cfg.batch_size, rng)) {
      const Tensor x = training_batch(data, idx, rng);
      std::vector<std::size_t> y;
      for (std::size_t i : idx) y.push_back(data.train.labels[i]);
      const Tensor soft = teacher.query(x);
      const Tensor out = student.forward(x, nn::Mode::train);
      const LossGrad lg = distillation_loss(out, soft, y, cfg.distill_temperature, cfg.distill_lambda);
      if (!std::isfinite(lg.value)) throw TrainingError("distillation diverged", e);
      nn::zero_grad(student.net());
      student.backward(lg.grad);
      opt.step();
    }
    report.trajectory.push_back(judge.score(student, e + 1));
  }
  report.compression_ratio = compression_ratio(student.param_count(), teacher.parameter_count());
  close_report(report);
  return {std::move(student), std::move(report), std::nullopt};
}

AttackResult run_attack(const Classifier& m_wm, const DatasetHandle& data, const Judge& judge, const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::finetune: return finetune_attack(m_wm, data, judge, cfg);
    case AttackKind::prune: return prune_attack(m_wm, judge, cfg);
    case AttackKind::prune_retrain: return prune_retrain_attack(m_wm, data, judge, cfg);
    case AttackKind::distill: return distill_attack(TeacherOracle(m_wm), data, judge, cfg);
  }
  throw InvalidArgument("unsupported attack kind");
}

}  // namespace softmark
