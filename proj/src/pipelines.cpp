#include "softmark/pipelines.hpp"

#include <cmath>

#include "softmark/error.hpp"
#include "softmark/metrics.hpp"

namespace softmark {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train.epochs must be >= 1");
  if (finetune_epochs < 0) throw InvalidArgument("train.finetune_epochs must be >= 0");
  if (batch_size < 2) throw InvalidArgument("train.batch_size must be >= 2");
  if (!(lr.base > 0.0)) throw InvalidArgument("train.lr must be > 0");
  for (int m : lr.milestones)
    if (m < 0 || m > epochs + finetune_epochs) throw InvalidArgument("train.milestones must reference valid epochs");
  if (!(validation_fraction > 0.0 && validation_fraction <= 1.0))
    throw InvalidArgument("train.validation_fraction must be in (0, 1]");
  if (detector.hidden_widths.size() != 4) throw InvalidArgument("detector.hidden_widths must have 4 entries");
  loss.validate();
}

std::string to_string(Scheme s) { return s == Scheme::usp ? "usp" : "csp"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "usp") return Scheme::usp;
  if (s == "csp") return Scheme::csp;
  throw InvalidArgument("unknown scheme '" + s + "' (expected usp or csp)");
}

Tensor training_batch(const DatasetHandle& data, std::span<const std::size_t> idx, Rng& rng) {
  return augment(data.train.gather(idx), data.augmentation, rng);
}

namespace {

std::vector<std::size_t> slice_labels(const std::vector<std::size_t>& labels, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

void add_scaled(Tensor& dst, const Tensor& src, double s) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

void require_finite(double v, int epoch, const char* what) {
  if (!std::isfinite(v)) throw TrainingError(std::string(what) + " diverged: loss is not finite", epoch);
}

double mean_kld(const Tensor& reference, const Tensor& scores, double t) {
  return kld_loss(OutputBatch(reference, Source::normal), OutputBatch(scores, Source::watermarked), t);
}

void check_classes(const DatasetHandle& data, const ClassifierSpec& spec, const Classifier* m_n) {
  if (spec.num_classes != data.num_classes)
    throw InvalidArgument("model has " + std::to_string(spec.num_classes) + " classes but dataset " + data.name +
                          " has " + std::to_string(data.num_classes));
  if (m_n && m_n->spec().num_classes != data.num_classes)
    throw InvalidArgument("adversary model class count does not match the dataset");
}

struct EmbedInputs {
  Scheme scheme;
  const Classifier& m_n;
  const DatasetHandle& data;
  const ClassifierSpec& spec;
  const WatermarkSignal* signal;
  const TrainConfig& cfg;
  const RunHooks& hooks;
};

TrainedPair run_embedding(const EmbedInputs& in) {
  const TrainConfig& cfg = in.cfg;
  cfg.validate();
  check_classes(in.data, in.spec, &in.m_n);
  const bool csp = in.scheme == Scheme::csp;
  if (csp) {
    if (!in.signal) throw InvalidArgument("CSP embedding needs a watermark signal");
    in.signal->validate(in.data.num_classes);
  }
  const InputMode mode = cfg.detector.input_mode.value_or(csp ? InputMode::log_softmax : InputMode::raw);
  const std::size_t nc = in.data.num_classes;

  // A private copy keeps the caller's adversary untouched by forward caches.
  Classifier frozen = in.m_n;
  EmbedState st = in.hooks.resume_from ? *in.hooks.resume_from
                                       : EmbedState{0,
                                                    cfg.init_from_adversary ? in.m_n : build_classifier(in.spec),
                                                    std::nullopt,
                                                    {},
                                                    {},
                                                    {},
                                                    0};
  Rng rng(cfg.seed);
  if (in.hooks.resume_from) {
    rng.load(st.rng_state);
  } else if (cfg.use_detector) {
    st.detector.emplace(nc, cfg.detector.hidden_widths, mode, cfg.seed + 1000, cfg.detector.lr);
  }
  Classifier& model = st.model;
  optim::Sgd opt(nn::parameters_of(model.net()), {cfg.lr.base, cfg.momentum, cfg.weight_decay});
  if (in.hooks.resume_from) opt.state() = st.optimizer_state;

  const Tensor test_x = in.data.test.all();
  const Tensor bank = frozen.predict(test_x);
  const int total = cfg.epochs + (csp ? cfg.finetune_epochs : 0);
  const std::size_t n_train = in.data.train.size();

  for (int e = st.next_epoch; e < total; ++e) {
    const bool finetune = csp && e >= cfg.epochs;
    opt.set_lr(cfg.lr.at(e));
    if (st.detector) {
      const bool decayed = cfg.detector.lr_decay_epoch >= 0 && e >= cfg.detector.lr_decay_epoch;
      st.detector->set_lr(cfg.detector.lr * (decayed ? cfg.detector.lr_decay_factor : 1.0));
    }

    EpochRecord rec;
    rec.epoch = e;
    rec.phase = finetune ? "finetune" : "embed";
    rec.lr = opt.lr();

    FinetuneBranch branch = FinetuneBranch::reembed;
    if (finetune) {
      // Fresh validation slice each epoch; without a detector the switch
      // cannot be measured and the perturbed branch is kept.
      const auto perm = rng.permutation(n_train);
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(cfg.validation_fraction * static_cast<double>(n_train))));
      const std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
      if (st.detector) {
        const Tensor xv = in.data.train.gather(val);
        const double acc = wm_accuracy(*st.detector, model.predict(xv), frozen.predict(xv));
        rec.validation_wm_acc = acc;
        branch = finetune_branch(acc, cfg.loss.tau);
      }
      rec.branch = branch == FinetuneBranch::unperturbed ? "unperturbed" : "reembed";
      if (branch == FinetuneBranch::reembed) ++st.reembed_epochs;
    }

    std::size_t det_correct = 0, det_total = 0;
    double loss_sum = 0.0;
    const auto batches = make_batches(n_train, cfg.batch_size, rng);
    for (const auto& idx : batches) {
      const Tensor x = training_batch(in.data, idx, rng);
      const auto y = slice_labels(in.data.train.labels, idx);
      const Tensor ow = model.forward(x, nn::Mode::train);
      const Tensor on = frozen.forward(x, nn::Mode::eval);
      if (!ow.all_finite()) throw TrainingError("watermarked model produced non-finite outputs", e);

      if (st.detector) {
        const DetectionBatch db = make_detection_batch(OutputBatch(ow, Source::watermarked),
                                                       OutputBatch(on, Source::normal), mode, rng.next());
        det_correct += st.detector->train_batch(db);
        det_total += db.labels.size();
      }

      LossGrad lg;
      if (finetune) {
        const Tensor shifted = perturb_scores(ow, *in.signal);
        lg = finetune_loss(OutputBatch(ow, Source::watermarked), OutputBatch(shifted, Source::watermarked), y,
                           rec.validation_wm_acc.value_or(0.0), cfg.loss.tau)
                 .loss;
      } else {
        lg = cross_entropy(csp ? perturb_scores(ow, *in.signal) : ow, y);
        if (cfg.use_kld) {
          const LossGrad k = kld_loss_grad(on, ow, cfg.loss.temperature);
          lg.value += cfg.loss.alpha * k.value;
          add_scaled(lg.grad, k.grad, cfg.loss.alpha);
        }
        if (st.detector && cfg.loss.beta > 0.0) {
          // Gradient flows through the just-updated, now frozen detector into the watermarked rows.
          const Tensor both = transform_outputs(concat_rows(ow, on), mode);
          std::vector<int> labels(both.dim(0), 0);
          std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(ow.dim(0)), 1);
          const LossGrad d = st.detector->input_gradient(both, labels);
          Tensor g = slice_rows(d.grad, 0, ow.dim(0));
          if (mode == InputMode::log_softmax) g = log_softmax_rows_backward(slice_rows(both, 0, ow.dim(0)), g);
          lg.value = total_loss(lg.value, d.value, cfg.loss.beta);
          add_scaled(lg.grad, g, cfg.loss.beta);
        }
      }
      require_finite(lg.value, e, "embedding");
      loss_sum += lg.value;
      nn::zero_grad(model.net());
      model.backward(lg.grad);
      opt.step();
    }

    if (st.detector) {
      rec.detector_train_acc = st.detector->finish_epoch(det_correct, det_total);
      rec.detector_early_stopped = st.detector->early_stopped();
    }
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    const Tensor scores = model.predict(test_x);
    rec.main_acc = main_accuracy(scores, in.data.test.labels);
    if (st.detector) rec.wm_acc = wm_accuracy(*st.detector, scores, bank);
    rec.kld = mean_kld(bank, scores, cfg.loss.temperature);
    st.log.push_back(rec);
    if (in.hooks.on_epoch) in.hooks.on_epoch(rec);
    if (in.hooks.on_checkpoint) {
      st.next_epoch = e + 1;
      st.optimizer_state = opt.state();
      st.rng_state = rng.save();
      in.hooks.on_checkpoint(st);
    }
  }

  const EpochRecord& last = st.log.back();
  return TrainedPair{.watermarked = model,
                     .detector = st.detector,
                     .signal = csp ? std::optional<WatermarkSignal>(*in.signal) : std::nullopt,
                     .scheme = in.scheme,
                     .adversary_ref = "",
                     .config = cfg,
                     .log = st.log,
                     .reference_bank = bank,
                     .main_acc = last.main_acc,
                     .wm_acc = last.wm_acc,
                     .reembed_epochs = st.reembed_epochs,
                     .kld_statistic = last.kld};
}

}  // namespace

PretrainResult pretrain_adversary(const DatasetHandle& data, const ClassifierSpec& spec, const TrainConfig& cfg,
                                  const RunHooks& hooks) {
  cfg.validate();
  check_classes(data, spec, nullptr);
  if (cfg.signal) throw InvalidArgument("adversary pretraining takes no watermark signal");
  EmbedState st = hooks.resume_from ? *hooks.resume_from
                                    : EmbedState{0, build_classifier(spec), std::nullopt, {}, {}, {}, 0};
  Rng rng(cfg.seed);
  if (hooks.resume_from) rng.load(st.rng_state);
  Classifier& model = st.model;
  optim::Sgd opt(nn::parameters_of(model.net()), {cfg.lr.base, cfg.momentum, cfg.weight_decay});
  if (hooks.resume_from) opt.state() = st.optimizer_state;
  const Tensor test_x = data.test.all();

  for (int e = st.next_epoch; e < cfg.epochs; ++e) {
    opt.set_lr(cfg.lr.at(e));
    double loss_sum = 0.0;
    const auto batches = make_batches(data.train.size(), cfg.batch_size, rng);
    for (const auto& idx : batches) {
      const Tensor x = training_batch(data, idx, rng);
      const auto y = slice_labels(data.train.labels, idx);
      const Tensor out = model.forward(x, nn::Mode::train);
      if (!out.all_finite()) throw TrainingError("pretraining produced non-finite outputs", e);
      const LossGrad lg = cross_entropy(out, y);
      loss_sum += lg.value;
      nn::zero_grad(model.net());
      model.backward(lg.grad);
      opt.step();
    }
    EpochRecord rec;
    rec.epoch = e;
    rec.phase = "pretrain";
    rec.lr = opt.lr();
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.main_acc = main_accuracy(model.predict(test_x), data.test.labels);
    st.log.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.on_checkpoint) {
      st.next_epoch = e + 1;
      st.optimizer_state = opt.state();
      st.rng_state = rng.save();
      hooks.on_checkpoint(st);
    }
  }
  return {model, st.log.back().main_acc, st.log};
}

TrainedPair embed_usp(const Classifier& m_n, const DatasetHandle& data, const ClassifierSpec& spec,
                      const TrainConfig& cfg, const RunHooks& hooks) {
  return run_embedding({Scheme::usp, m_n, data, spec, nullptr, cfg, hooks});
}

TrainedPair embed_csp(const Classifier& m_n, const DatasetHandle& data, const ClassifierSpec& spec,
                      const WatermarkSignal& signal, const TrainConfig& cfg, const RunHooks& hooks) {
  return run_embedding({Scheme::csp, m_n, data, spec, &signal, cfg, hooks});
}

}  // namespace softmark
