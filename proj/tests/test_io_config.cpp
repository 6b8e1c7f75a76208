#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "softmark/config.hpp"
#include "softmark/io.hpp"
#include "softmark/presets.hpp"
#include "test_util.hpp"

using namespace softmark;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("softmark_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<Tensor> states(nn::Module& m) {
  std::vector<Tensor> out;
  for (const auto& s : nn::state_of(m)) out.push_back(*s.value);
  return out;
}

ConfigError config_error(const std::string& text) {
  try {
    ExperimentConfig::parse(text, "t.yaml");
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a config error");
  return ConfigError("", 0, "");
}

TrainConfig short_csp() {
  TrainConfig c = desk::csp_config();
  c.epochs = 3;
  c.finetune_epochs = 3;
  c.lr.milestones = {4};
  c.detector.lr_decay_epoch = 4;
  c.loss.tau = 99.0;
  return c;
}

}  // namespace

TEST_CASE("classifier and detector checkpoints round-trip bit-exactly") {
  const auto dir = scratch("ckpt");
  ClassifierSpec spec;
  spec.num_classes = 5;
  spec.seed = 4;
  Classifier m = build_classifier(spec);
  io::save_classifier(dir / "m.ckpt", m);
  Classifier back = io::load_classifier(dir / "m.ckpt");
  CHECK(back.spec().arch == spec.arch);
  CHECK(back.spec().hidden_widths == spec.hidden_widths);
  CHECK(states(back.net()) == states(m.net()));

  Rng rng(3);
  Detector det(5, {16, 16, 8, 8}, InputMode::log_softmax, 9, 0.004);
  const auto b = make_detection_batch(OutputBatch(testing::random_tensor({16, 5}, rng), Source::watermarked),
                                      OutputBatch(testing::random_tensor({16, 5}, rng), Source::normal),
                                      InputMode::log_softmax, 1);
  det.train_batch(b);
  det.set_early_stopped(true);
  io::save_detector(dir / "d.ckpt", det);
  Detector d2 = io::load_detector(dir / "d.ckpt");
  CHECK(d2.input_mode() == InputMode::log_softmax);
  CHECK(d2.hidden_widths() == det.hidden_widths());
  CHECK(d2.early_stopped());
  CHECK(d2.lr() == det.lr());
  CHECK(states(d2.net()) == states(det.net()));
  CHECK(d2.optimizer().state() == det.optimizer().state());
  CHECK(d2.optimizer().steps() == det.optimizer().steps());

  const Tensor t({2, 3}, {1e-300, -0.0, 3.141592653589793, 1.0 / 3.0, -7.5e12, 42});
  io::save_tensor(dir / "t.ckpt", t);
  CHECK(io::load_tensor(dir / "t.ckpt") == t);

  WatermarkSignal s{{1, -1, 0}, 2.5, std::map<std::size_t, std::size_t>{{4, 0}, {7, 1}, {9, 2}}, 11};
  io::save_signal(dir / "s.json", s);
  const auto s2 = io::load_signal(dir / "s.json");
  CHECK(s2.values == s.values);
  CHECK(s2.gamma == s.gamma);
  CHECK(s2.label_filter == s.label_filter);
  CHECK(s2.seed == 11);

  CHECK_THROWS_AS(io::load_classifier(dir / "d.ckpt"), InvalidArgument);
  CHECK_THROWS_AS(io::load_classifier(dir / "missing.ckpt"), ResourceError);
  std::ofstream(dir / "junk.ckpt") << "not an archive";
  CHECK_THROWS_AS(io::load_tensor(dir / "junk.ckpt"), InvalidArgument);
  fs::remove_all(dir);
}

TEST_CASE("resuming an embed run from a saved state matches the uninterrupted run") {
  const auto dir = scratch("resume");
  const auto data = load_dataset("synth5", 0, 0.2);
  auto pcfg = desk::pretrain_config();
  pcfg.epochs = 3;
  pcfg.lr.milestones = {};
  const auto pre = pretrain_adversary(data, desk::mlp_spec(1), pcfg);
  const auto sig = desk::customization_signals()[0];

  RunHooks save;
  save.on_checkpoint = [&](const EmbedState& st) {
    if (st.next_epoch == 4) io::save_embed_state(dir / "state.ckpt", st);
  };
  TrainedPair full = embed_csp(pre.model, data, desk::mlp_spec(3), sig, short_csp(), save);

  RunHooks resume;
  resume.resume_from = io::load_embed_state(dir / "state.ckpt");
  CHECK(resume.resume_from->next_epoch == 4);
  TrainedPair cont = embed_csp(pre.model, data, desk::mlp_spec(3), sig, short_csp(), resume);

  CHECK(states(cont.watermarked.net()) == states(full.watermarked.net()));
  CHECK(states(cont.detector->net()) == states(full.detector->net()));
  REQUIRE(cont.log.size() == full.log.size());
  for (std::size_t i = 0; i < full.log.size(); ++i) CHECK(io::to_json(cont.log[i]) == io::to_json(full.log[i]));
  CHECK(cont.reembed_epochs == full.reembed_epochs);
  fs::remove_all(dir);
}

TEST_CASE("config parsing resolves presets and overrides") {
  const auto empty = ExperimentConfig::parse("");
  CHECK(empty.scale() == Scale::desk);
  CHECK(empty.dataset_name() == "synth5");
  const auto t = empty.train_config(Stage::csp);
  const auto ref = desk::csp_config();
  CHECK(t.epochs == ref.epochs);
  CHECK(t.loss.alpha == ref.loss.alpha);
  CHECK(empty.signal(5).values == desk::customization_signals()[0].values);

  auto c = ExperimentConfig::parse(
      "scale: desk\nseed: 0\ntrain:\n  epochs: 7\n  milestones: [3, 5]\nloss:\n  tau: 90\n"
      "signal:\n  values: [1, -1, 0, 1, -1]\n  gamma: 1.5\n");
  CHECK(c.train_config(Stage::usp).epochs == 7);
  CHECK(c.train_config(Stage::usp).lr.milestones == std::vector<int>{3, 5});
  CHECK(c.train_config(Stage::csp).loss.tau == 90.0);
  CHECK(c.signal(5).values == std::vector<int>{1, -1, 0, 1, -1});
  CHECK(c.signal(5).gamma == 1.5);
  c.override_value("loss.tau", "75");
  CHECK(c.train_config(Stage::csp).loss.tau == 75.0);
  CHECK_THROWS_AS(c.override_value("loss.nope", "1"), InvalidArgument);

  // the snapshot parses back to the same settings
  const auto snap = ExperimentConfig::parse(c.snapshot(Stage::csp, false, 5));
  CHECK(snap.train_config(Stage::csp).loss.tau == 75.0);
  CHECK(snap.train_config(Stage::csp).epochs == 7);
  CHECK(snap.signal(5).values == c.signal(5).values);

  const auto paper = ExperimentConfig::parse("scale: paper\n");
  CHECK(paper.dataset_name() == "cifar10");
  CHECK(paper.model_spec(Stage::csp, 10).arch == Arch::resnet18);
  CHECK(paper.train_config(Stage::usp).epochs == 160);

  for (const auto& e : config_schema()) CHECK_FALSE(e.help.empty());
}

#ifdef SOFTMARK_CONFIG_DIR
TEST_CASE("shipped configs resolve") {
  for (const auto& f : fs::directory_iterator(SOFTMARK_CONFIG_DIR)) {
    CAPTURE(f.path().string());
    const auto c = ExperimentConfig::load(f.path());
    const auto name = c.dataset_name();
    const std::size_t nc = name == "cifar100" ? 100 : (name == "synth5" || name == "cifar5") ? 5 : 10;
    for (Stage s : {Stage::pretrain, Stage::usp, Stage::csp}) {
      CHECK_NOTHROW(c.train_config(s).validate());
      CHECK_NOTHROW(c.model_spec(s, nc));
    }
    CHECK_NOTHROW(c.signal(nc).validate(nc));
  }
}
#endif

TEST_CASE("config errors point at the offending line") {
  auto e = config_error("seed: 1\ntrain:\n  epochz: 3\n");
  CHECK(e.line() == 3);
  CHECK(std::string(e.what()).find("t.yaml:3") != std::string::npos);
  CHECK(config_error("loss:\n  alpha: -0.1\n  tau: 150\n").line() == 3);
  CHECK(config_error("train:\n  batch_size: 64\n  milestones: [a, b]\n").line() == 3);
  CHECK(config_error("scale: huge\n").line() == 1);
  CHECK(config_error("train:\n  epochs: [1\n").line() >= 2);
  CHECK(config_error("model:\n  arch: vgg\n").line() == 2);
}

#ifdef SOFTMARK_CLI
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + SOFTMARK_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("command line exit codes and resume") {
  const auto dir = scratch("cli");
  const std::string fast = "-q --set train.epochs=2 --set train.finetune_epochs=2 --set train.milestones=[2] "
                           "--set detector.lr_decay_epoch=2 --set dataset.fraction=0.1";
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("report") == 2);
  std::ofstream(dir / "bad.yaml") << "train:\n  epochs: -4\n";
  CHECK(run_cli("pretrain -c " + (dir / "bad.yaml").string() + " -o " + (dir / "bad").string()) == 2);

  REQUIRE(run_cli("pretrain " + fast + " -o " + (dir / "pre").string()) == 0);
  const std::string adv = " --adversary " + (dir / "pre").string();
  REQUIRE(run_cli("embed csp " + fast + adv + " -o " + (dir / "run").string()) == 0);
  for (const char* f : {"config.yaml", "metrics.jsonl", "M_wm.ckpt", "M_d.ckpt", "reference_bank.ckpt", "signal.json",
                        "summary.json"})
    CHECK(fs::exists(dir / "run" / f));

  CHECK(run_cli("attack -q --run " + (dir / "run").string() + " --kind smash") == 2);
  CHECK(run_cli("attack -q --run " + (dir / "run").string() + " --kind prune --ratio 0.5") == 0);
  CHECK(fs::exists(dir / "run" / "attacks" / "prune_r0.5" / "report.json"));
  CHECK(run_cli("verify --run " + (dir / "run").string() + " --suspect " + (dir / "run" / "M_wm.ckpt").string()) == 0);

  // a 3-class suspect against a 5-class detector
  ClassifierSpec spec;
  spec.num_classes = 3;
  io::save_classifier(dir / "three.ckpt", build_classifier(spec));
  CHECK(run_cli("verify --run " + (dir / "run").string() + " --suspect " + (dir / "three.ckpt").string()) == 2);

  // halted then resumed equals uninterrupted
  REQUIRE(run_cli("embed csp " + fast + adv + " -o " + (dir / "cut").string() + " --halt-after-epoch 2") == 0);
  CHECK_FALSE(fs::exists(dir / "cut" / "M_wm.ckpt"));
  REQUIRE(run_cli("embed csp " + fast + adv + " -o " + (dir / "cut").string() + " --resume") == 0);
  for (const char* f : {"metrics.jsonl", "M_wm.ckpt", "M_d.ckpt"}) CHECK(slurp(dir / "cut" / f) == slurp(dir / "run" / f));

  // report over both runs
  CHECK(run_cli("report " + (dir / "run").string() + " " + (dir / "cut").string()) == 0);
  fs::remove_all(dir);
}
#endif
