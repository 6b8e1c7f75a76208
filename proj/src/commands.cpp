#include "softmark/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "softmark/error.hpp"
#include "softmark/io.hpp"

namespace softmark::cli {

namespace {

using io::Json;

struct Halted {};

std::string yaml_quote(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    q += c;
  }
  return q + "\"";
}

std::string fingerprint(const Classifier& model) {
  Classifier copy = model;
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& s : nn::state_of(copy.net())) {
    const auto* p = reinterpret_cast<const unsigned char*>(s.value->data());
    for (std::size_t i = 0; i < s.value->size() * sizeof(double); ++i) h = (h ^ p[i]) * 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

// Per-epoch line-delimited records, flushed after every line.
class MetricsLog {
 public:
  MetricsLog(const fs::path& path, const std::vector<EpochRecord>& prior) : out_(path, std::ios::trunc) {
    if (!out_) throw ResourceError("cannot write " + path.string());
    for (const auto& r : prior) append(r);
  }
  void append(const EpochRecord& r) {
    out_ << io::to_json(r).dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void progress(bool quiet, const std::string& what, const EpochRecord& r) {
  if (quiet) return;
  std::string line = fmt::format("[{}] epoch {:>3} {:<8} lr {:.4g} loss {:.4f} main {:.2f}", what, r.epoch, r.phase,
                                 r.lr, r.train_loss, r.main_acc);
  if (r.wm_acc) line += fmt::format(" wm {:.2f}", *r.wm_acc);
  if (r.branch) line += " branch " + *r.branch;
  fmt::print(stderr, "{}\n", line);
}

RunHooks make_hooks(const fs::path& dir, const RunOptions& opt, const std::string& what,
                    std::optional<MetricsLog>& log) {
  RunHooks hooks;
  const fs::path state = dir / "state.ckpt";
  if (opt.resume) {
    if (fs::exists(state)) {
      hooks.resume_from = io::load_embed_state(state);
      if (!opt.quiet) fmt::print(stderr, "resuming {} at epoch {}\n", what, hooks.resume_from->next_epoch);
    } else if (!opt.quiet) {
      fmt::print(stderr, "no checkpoint in {}, starting from scratch\n", dir.string());
    }
  }
  log.emplace(dir / "metrics.jsonl", hooks.resume_from ? hooks.resume_from->log : std::vector<EpochRecord>{});
  hooks.on_epoch = [&log, quiet = opt.quiet, what](const EpochRecord& r) {
    log->append(r);
    progress(quiet, what, r);
  };
  hooks.on_checkpoint = [state, halt = opt.halt_after_epoch](const EmbedState& st) {
    io::save_embed_state(state, st);
    if (halt >= 0 && st.next_epoch - 1 >= halt) throw Halted{};
  };
  return hooks;
}

Json read_json(const fs::path& p) {
  try {
    return Json::parse(io::read_text(p));
  } catch (const Json::exception& e) {
    throw InvalidArgument(p.string() + ": " + e.what());
  }
}

fs::path checkpoint_in(const fs::path& p, const char* name) { return fs::is_directory(p) ? p / name : p; }

}  // namespace

ExperimentConfig resolve_config(const RunOptions& opt) {
  ExperimentConfig cfg = opt.config ? ExperimentConfig::load(*opt.config) : ExperimentConfig{};
  for (const auto& s : opt.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("<command line>", 0, "--set expects key=value, got '" + s + "'");
    cfg.override_value(s.substr(0, eq), s.substr(eq + 1));
  }
  if (opt.output) cfg.override_value("output_dir", yaml_quote(opt.output->string()));
  return cfg;
}

DatasetHandle load_configured_dataset(const ExperimentConfig& cfg) {
  return load_dataset(cfg.dataset_name(), cfg.dataset_seed(), cfg.dataset_fraction(), cfg.data_root());
}

PretrainOutcome cmd_pretrain(const RunOptions& opt) {
  const ExperimentConfig cfg = resolve_config(opt);
  const DatasetHandle data = load_configured_dataset(cfg);
  const std::size_t nc = data.num_classes;
  const ClassifierSpec spec = cfg.model_spec(Stage::pretrain, nc);
  const TrainConfig tc = cfg.train_config(Stage::pretrain);
  const fs::path dir = cfg.output_dir();
  fs::create_directories(dir);
  io::write_atomic(dir / "config.yaml", cfg.snapshot(Stage::pretrain, false, nc));

  std::optional<MetricsLog> log;
  const RunHooks hooks = make_hooks(dir, opt, "pretrain", log);
  PretrainResult res{build_classifier(spec), 0.0, {}};
  try {
    res = pretrain_adversary(data, spec, tc, hooks);
  } catch (const Halted&) {
    return {dir, 0.0, true};
  }
  io::save_classifier(dir / "M_n.ckpt", res.model);
  const Json summary = {{"command", "pretrain"},
                        {"dataset", data.name},
                        {"arch", to_string(spec.arch)},
                        {"param_count", res.model.param_count()},
                        {"epochs", tc.epochs},
                        {"clean_acc", res.test_acc},
                        {"main_acc", res.test_acc},
                        {"adversary_ref", fingerprint(res.model)}};
  io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");
  if (!opt.quiet) fmt::print("clean main acc {:.2f}\n", res.test_acc);
  return {dir, res.test_acc, false};
}

EmbedOutcome cmd_embed(const EmbedOptions& opt) {
  ExperimentConfig cfg = resolve_config(opt.run);
  if (opt.no_kld) cfg.override_value("train.use_kld", "false");
  if (opt.no_detector) cfg.override_value("train.use_detector", "false");
  const DatasetHandle data = load_configured_dataset(cfg);
  const std::size_t nc = data.num_classes;
  const Stage stage = opt.scheme == Scheme::usp ? Stage::usp : Stage::csp;
  const ClassifierSpec spec = cfg.model_spec(stage, nc);
  const TrainConfig tc = cfg.train_config(stage);
  const std::optional<WatermarkSignal> signal =
      stage == Stage::csp ? std::optional<WatermarkSignal>(cfg.signal(nc)) : std::nullopt;
  const fs::path dir = cfg.output_dir();
  fs::create_directories(dir);
  io::write_atomic(dir / "config.yaml", cfg.snapshot(stage, false, nc));

  // The adversary comes from --adversary, an earlier run in this directory, or a fresh pretraining.
  const fs::path local = dir / "M_n.ckpt";
  std::optional<Classifier> m_n;
  std::string source;
  if (opt.adversary) {
    const fs::path p = checkpoint_in(*opt.adversary, "M_n.ckpt");
    m_n = io::load_classifier(p);
    source = p.string();
    if (!fs::exists(local) || !fs::equivalent(p, local)) io::save_classifier(local, *m_n);
  } else if (fs::exists(local)) {
    m_n = io::load_classifier(local);
    source = local.string();
  } else {
    const TrainConfig pc = cfg.train_config(Stage::pretrain);
    std::ofstream plog(dir / "pretrain.jsonl", std::ios::trunc);
    RunHooks ph;
    ph.on_epoch = [&](const EpochRecord& r) {
      plog << io::to_json(r).dump() << '\n';
      plog.flush();
      progress(opt.run.quiet, "pretrain", r);
    };
    m_n = pretrain_adversary(data, cfg.model_spec(Stage::pretrain, nc), pc, ph).model;
    io::save_classifier(local, *m_n);
    source = local.string();
  }
  if (m_n->spec().num_classes != nc)
    throw InvalidArgument("adversary has " + std::to_string(m_n->spec().num_classes) + " classes, dataset has " +
                          std::to_string(nc));
  const double clean_acc = main_accuracy(*m_n, data.test);

  std::optional<MetricsLog> log;
  const RunHooks hooks = make_hooks(dir, opt.run, to_string(opt.scheme), log);
  std::optional<TrainedPair> pair;
  try {
    pair = opt.scheme == Scheme::usp ? embed_usp(*m_n, data, spec, tc, hooks)
                                     : embed_csp(*m_n, data, spec, *signal, tc, hooks);
  } catch (const Halted&) {
    EmbedOutcome out;
    out.run_dir = dir;
    out.clean_acc = clean_acc;
    out.halted = true;
    return out;
  }
  pair->adversary_ref = source + "#" + fingerprint(*m_n);

  io::save_classifier(dir / "M_wm.ckpt", pair->watermarked);
  if (pair->detector) io::save_detector(dir / "M_d.ckpt", *pair->detector);
  io::save_tensor(dir / "reference_bank.ckpt", pair->reference_bank);
  if (pair->signal) io::save_signal(dir / "signal.json", *pair->signal);

  Json summary = {{"command", "embed"},
                  {"scheme", to_string(pair->scheme)},
                  {"dataset", data.name},
                  {"arch", to_string(spec.arch)},
                  {"param_count", pair->watermarked.param_count()},
                  {"adversary_ref", pair->adversary_ref},
                  {"use_kld", tc.use_kld},
                  {"use_detector", tc.use_detector},
                  {"tau", tc.loss.tau},
                  {"epochs", tc.epochs},
                  {"finetune_epochs", tc.finetune_epochs},
                  {"clean_acc", clean_acc},
                  {"main_acc", pair->main_acc},
                  {"main_drop", clean_acc - pair->main_acc},
                  {"wm_acc", pair->wm_acc ? Json(*pair->wm_acc) : Json(nullptr)},
                  {"reembed_epochs", pair->reembed_epochs},
                  {"kld", pair->kld_statistic ? Json(*pair->kld_statistic) : Json(nullptr)}};
  io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");
  if (!opt.run.quiet) {
    fmt::print("main acc {:.2f} ({:+.2f} vs clean {:.2f})\n", pair->main_acc, pair->main_acc - clean_acc, clean_acc);
    if (pair->wm_acc)
      fmt::print("wm acc {:.2f}\n", *pair->wm_acc);
    else
      fmt::print("no detector; mean KLD to the adversary {:.4f}\n", pair->kld_statistic.value_or(0.0));
    if (opt.scheme == Scheme::csp) fmt::print("re-embed epochs {}\n", pair->reembed_epochs);
  }
  EmbedOutcome out;
  out.run_dir = dir;
  out.clean_acc = clean_acc;
  out.main_acc = pair->main_acc;
  out.wm_acc = pair->wm_acc;
  out.reembed_epochs = pair->reembed_epochs;
  return out;
}

AttackOutcome cmd_attack(const AttackOptions& opt) {
  const AttackKind kind = attack_kind_from_string(opt.kind);
  if (!fs::exists(opt.run / "M_wm.ckpt")) throw InvalidArgument(opt.run.string() + " is not an embed run directory");
  ExperimentConfig cfg = ExperimentConfig::load(opt.run / "config.yaml");
  for (const auto& s : opt.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("<command line>", 0, "--set expects key=value, got '" + s + "'");
    cfg.override_value(s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.override_value("attack.kind", opt.kind);
  if (opt.ratio) cfg.override_value("attack.ratio", fmt::format("{}", *opt.ratio));
  if (opt.lr) cfg.override_value("attack.lr", fmt::format("{}", *opt.lr));
  if (opt.epochs) cfg.override_value("attack.epochs", std::to_string(*opt.epochs));
  if (opt.student) cfg.override_value("attack.student", *opt.student);
  if (opt.student && kind != AttackKind::distill) throw InvalidArgument("--student only applies to distill");
  if (opt.ratio && kind != AttackKind::prune && kind != AttackKind::prune_retrain)
    throw InvalidArgument("--ratio only applies to prune and prune_retrain");

  const DatasetHandle data = load_configured_dataset(cfg);
  const std::size_t nc = data.num_classes;
  const AttackConfig acfg = cfg.attack_config(nc);
  if (!fs::exists(opt.run / "M_d.ckpt")) throw InvalidArgument(opt.run.string() + " has no detector to score attacks");
  const Classifier m_wm = io::load_classifier(opt.run / "M_wm.ckpt");
  const Detector det = io::load_detector(opt.run / "M_d.ckpt");
  const Tensor bank = io::load_tensor(opt.run / "reference_bank.ckpt");
  const Judge judge{det, bank, data.test};

  std::string name;
  switch (kind) {
    case AttackKind::finetune: name = fmt::format("finetune_lr{}", acfg.lr); break;
    case AttackKind::prune: name = fmt::format("prune_r{}", acfg.prune_ratio); break;
    case AttackKind::prune_retrain: name = fmt::format("prune_retrain_r{}", acfg.prune_ratio); break;
    case AttackKind::distill: name = "distill_" + to_string(acfg.student_spec->arch); break;
  }
  if (opt.name) name = *opt.name;
  const fs::path out = opt.run / "attacks" / name;
  fs::create_directories(out);
  io::write_atomic(out / "config.yaml", cfg.snapshot(std::nullopt, true, nc));

  AttackResult res = run_attack(m_wm, data, judge, acfg);
  std::string traj;
  for (const auto& p : res.report.trajectory) traj += io::to_json(p).dump() + "\n";
  io::write_atomic(out / "trajectory.jsonl", traj);
  io::write_atomic(out / "report.json", io::to_json(res.report).dump(2) + "\n");
  io::save_classifier(out / "model.ckpt", res.model);
  if (!opt.quiet) {
    const auto& f = res.report.final_point;
    const auto& b = res.report.best_main;
    fmt::print("{}: final main {:.2f} wm {:.2f} det rate {:.2f}; best-main epoch {} main {:.2f} wm {:.2f}\n", name,
               f.main_acc, f.wm_acc, f.det_rate, b.epoch, b.main_acc, b.wm_acc);
    if (res.report.compression_ratio) fmt::print("compression ratio {:.2f}\n", *res.report.compression_ratio);
    if (res.report.pruned_weights)
      fmt::print("pruned {} of {} weights\n", *res.report.pruned_weights, *res.report.prunable_weights);
  }
  return {out, std::move(res.report)};
}

VerifyResult cmd_verify(const VerifyOptions& opt) {
  std::optional<fs::path> det_path = opt.detector, ref_path = opt.reference, cfg_path = opt.config;
  if (opt.run) {
    if (!det_path) det_path = *opt.run / "M_d.ckpt";
    if (!ref_path) ref_path = *opt.run / "reference_bank.ckpt";
    if (!cfg_path) cfg_path = *opt.run / "config.yaml";
  }
  if (!det_path || !ref_path || !opt.suspect)
    throw InvalidArgument("verify needs a detector, a reference (bank or clean model) and a suspect model");
  const ExperimentConfig cfg = cfg_path ? ExperimentConfig::load(*cfg_path) : ExperimentConfig{};
  const Detector det = io::load_detector(*det_path);
  const Classifier suspect = io::load_classifier(checkpoint_in(*opt.suspect, "M_wm.ckpt"));
  if (suspect.spec().num_classes != det.num_classes())
    throw InvalidArgument("suspect model has " + std::to_string(suspect.spec().num_classes) +
                          " outputs but the detector expects " + std::to_string(det.num_classes()));
  const DatasetHandle data = load_configured_dataset(cfg);
  if (data.num_classes != det.num_classes())
    throw InvalidArgument("dataset " + data.name + " has " + std::to_string(data.num_classes) +
                          " classes but the detector expects " + std::to_string(det.num_classes()));
  const io::Archive ar = io::read_archive(*ref_path);
  const Tensor bank = ar.meta.value("kind", std::string()) == "classifier"
                          ? io::load_classifier(*ref_path).predict(data.test.all())
                          : io::load_tensor(*ref_path);
  const VerifyResult r = verify(det, suspect, data.test, bank, opt.threshold);
  fmt::print("wm acc {:.2f}\nowned {}\n", r.wm_acc, r.owned ? "true" : "false");
  return r;
}

namespace {

struct RunView {
  fs::path dir;
  Json summary;
  std::map<std::string, Json> attacks;  // name -> report
};

RunView load_run(const fs::path& dir) {
  if (!fs::exists(dir / "summary.json")) throw InvalidArgument(dir.string() + " has no summary.json (unfinished run?)");
  RunView v{dir, read_json(dir / "summary.json"), {}};
  if (fs::exists(dir / "attacks")) {
    for (const auto& e : fs::directory_iterator(dir / "attacks"))
      if (fs::exists(e.path() / "report.json")) v.attacks[e.path().filename().string()] = read_json(e.path() / "report.json");
  }
  return v;
}

std::string num(const Json& j, const char* key, const char* f = "{:.2f}") {
  if (!j.contains(key) || j.at(key).is_null()) return "-";
  return fmt::format(fmt::runtime(f), j.at(key).get<double>());
}

// The attack the overview reports for a kind: highest-lr fine-tune, otherwise the first found.
const Json* pick_attack(const RunView& v, const std::string& kind) {
  const Json* best = nullptr;
  for (const auto& [name, rep] : v.attacks) {
    if (rep.at("config").at("kind") != kind) continue;
    if (!best || (kind == "finetune" && rep.at("config").at("lr").get<double>() > best->at("config").at("lr").get<double>()))
      best = &rep;
  }
  return best;
}

std::string attack_cell(const RunView& v, const std::string& kind) {
  const Json* r = pick_attack(v, kind);
  if (!r) return "-";
  // Prune alone has no training to select from; the others report the best-main snapshot.
  const Json& p = kind == "prune" ? r->at("final") : r->at("best_main");
  return fmt::format("{:.2f} / {:.2f}", p.at("main_acc").get<double>(), p.at("wm_acc").get<double>());
}

std::string overview(const std::vector<RunView>& runs) {
  std::string s = fmt::format("{:<24}{:<8}{:>8}{:>18}{:>8}{:>18}{:>18}{:>18}{:>18}\n", "run", "scheme", "clean",
                              "main (drop)", "wm", "fine-tune", "prune", "retrain", "distill");
  for (const auto& v : runs) {
    const Json& sm = v.summary;
    const bool embed = sm.value("command", std::string()) == "embed";
    std::string main = num(sm, "main_acc");
    if (embed) main += fmt::format(" ({:+.2f})", -sm.at("main_drop").get<double>());
    std::string scheme = embed ? sm.at("scheme").get<std::string>() : "clean";
    if (embed && !sm.value("use_kld", true)) scheme += "-kld";
    if (embed && !sm.value("use_detector", true)) scheme += "-det";
    s += fmt::format("{:<24}{:<8}{:>8}{:>18}{:>8}{:>18}{:>18}{:>18}{:>18}\n", v.dir.filename().string(), scheme,
                     num(sm, "clean_acc"), main, num(sm, "wm_acc"), attack_cell(v, "finetune"), attack_cell(v, "prune"),
                     attack_cell(v, "prune_retrain"), attack_cell(v, "distill"));
  }
  s += "attack cells: main acc / wm acc (best-main snapshot; prune: after pruning)\n";
  return s;
}

std::string tau_table(std::vector<RunView> runs) {
  for (const auto& v : runs)
    if (!v.summary.contains("tau")) throw InvalidArgument(v.dir.string() + " is not an embed run");
  std::stable_sort(runs.begin(), runs.end(), [](const RunView& a, const RunView& b) {
    return a.summary.at("tau").get<double>() < b.summary.at("tau").get<double>();
  });
  auto row = [&](const std::string& label, auto cell) {
    std::string s = fmt::format("{:<22}", label);
    for (const auto& v : runs) s += fmt::format("{:>10}", cell(v));
    return s + "\n";
  };
  auto attack_wm = [](const std::string& kind) {
    return [kind](const RunView& v) {
      const Json* r = pick_attack(v, kind);
      return r ? fmt::format("{:.2f}", r->at("best_main").at("wm_acc").get<double>()) : std::string("-");
    };
  };
  std::string s;
  s += row("tau", [](const RunView& v) { return fmt::format("{:.2f}", v.summary.at("tau").get<double>()); });
  s += row("main acc", [](const RunView& v) { return num(v.summary, "main_acc"); });
  s += row("wm acc", [](const RunView& v) { return num(v.summary, "wm_acc"); });
  s += row("re-embed epochs", [](const RunView& v) { return std::to_string(v.summary.value("reembed_epochs", 0)); });
  s += row("fine-tune wm acc", attack_wm("finetune"));
  s += row("retrain wm acc", attack_wm("prune_retrain"));
  return s;
}

std::string matrix(const std::vector<RunView>& runs) {
  const ExperimentConfig cfg = ExperimentConfig::load(runs.front().dir / "config.yaml");
  const DatasetHandle data = load_configured_dataset(cfg);
  std::vector<Detector> dets;
  std::vector<Classifier> models;
  for (const auto& v : runs) {
    if (!fs::exists(v.dir / "M_d.ckpt")) throw InvalidArgument(v.dir.string() + " has no detector");
    dets.push_back(io::load_detector(v.dir / "M_d.ckpt"));
    models.push_back(io::load_classifier(v.dir / "M_wm.ckpt"));
  }
  std::vector<const Detector*> dp;
  std::vector<const Classifier*> mp;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    dp.push_back(&dets[i]);
    mp.push_back(&models[i]);
  }
  const CustomizationMatrix m = customization_matrix(dp, mp, data.test);
  std::string s;
  for (std::size_t i = 0; i < runs.size(); ++i)
    s += fmt::format("M_wm{0} / M_d{0}: {1}\n", i + 1, runs[i].dir.string());
  return s + m.to_table() + "\n" + m.to_csv();
}

}  // namespace

std::string cmd_report(const ReportOptions& opt) {
  if (opt.runs.empty()) throw InvalidArgument("report needs at least one run directory");
  std::vector<RunView> runs;
  for (const auto& d : opt.runs) runs.push_back(load_run(d));
  std::string text = overview(runs);
  if (opt.tau_sweep) text += "\n" + tau_table(runs);
  if (opt.matrix) text += "\n" + matrix(runs);
  fmt::print("{}", text);
  if (opt.out) io::write_atomic(*opt.out, text);
  return text;
}

std::string cmd_sweep(const SweepOptions& opt) {
  if (opt.taus.empty()) throw InvalidArgument("sweep needs at least one tau");
  const ExperimentConfig base = resolve_config(opt.run);
  const fs::path root = base.output_dir();
  std::vector<fs::path> dirs;
  std::optional<fs::path> adversary;
  for (double tau : opt.taus) {
    EmbedOptions e;
    e.run = opt.run;
    e.run.output = root / fmt::format("tau{}", tau);
    e.run.sets.push_back(fmt::format("loss.tau={}", tau));
    e.scheme = Scheme::csp;
    e.adversary = adversary;
    const EmbedOutcome out = cmd_embed(e);
    if (out.halted) throw TrainingError("sweep run halted", 0);
    adversary = out.run_dir / "M_n.ckpt";
    for (const auto& kind : opt.attacks) {
      AttackOptions a;
      a.run = out.run_dir;
      a.kind = kind;
      a.quiet = opt.run.quiet;
      cmd_attack(a);
    }
    dirs.push_back(out.run_dir);
  }
  ReportOptions r;
  r.runs = dirs;
  r.tau_sweep = true;
  r.out = root / "tau_sweep.txt";
  return cmd_report(r);
}

}  // namespace softmark::cli
