#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "softmark/config.hpp"
#include "softmark/metrics.hpp"
#include "softmark/pipelines.hpp"

// Implementations behind the softmark command-line verbs. Each works inside
// one run directory and throws on failure; the tool maps exceptions to exit
// codes (InvalidArgument/ResourceError -> 2, TrainingError/NumericError -> 3).
namespace softmark::cli {

namespace fs = std::filesystem;

struct RunOptions {
  std::optional<fs::path> config;   // experiment file; presets when absent
  std::optional<fs::path> output;   // overrides output_dir
  std::vector<std::string> sets;    // key=value overrides
  bool resume = false;              // continue from state.ckpt in the run directory
  int halt_after_epoch = -1;        // stop after checkpointing this epoch (crash simulation)
  bool quiet = false;
};

// Loads the config file (if any), applies --set overrides and --output.
ExperimentConfig resolve_config(const RunOptions& opt);
DatasetHandle load_configured_dataset(const ExperimentConfig& cfg);

struct PretrainOutcome {
  fs::path run_dir;
  double test_acc = 0.0;
  bool halted = false;
};
PretrainOutcome cmd_pretrain(const RunOptions& opt);

struct EmbedOptions {
  RunOptions run;
  Scheme scheme = Scheme::csp;
  std::optional<fs::path> adversary;  // M_n checkpoint or a run directory holding one
  bool no_kld = false;
  bool no_detector = false;
};

struct EmbedOutcome {
  fs::path run_dir;
  double clean_acc = 0.0;
  double main_acc = 0.0;
  std::optional<double> wm_acc;
  int reembed_epochs = 0;
  bool halted = false;
};
EmbedOutcome cmd_embed(const EmbedOptions& opt);

struct AttackOptions {
  fs::path run;  // an embed run directory
  std::string kind;
  std::optional<double> ratio, lr;
  std::optional<int> epochs;
  std::optional<std::string> student;
  std::vector<std::string> sets;
  std::optional<std::string> name;  // subdirectory under attacks/
  bool quiet = false;
};

struct AttackOutcome {
  fs::path report_dir;
  AttackReport report;
};
AttackOutcome cmd_attack(const AttackOptions& opt);

struct VerifyOptions {
  std::optional<fs::path> run;  // supplies detector, reference bank and dataset
  std::optional<fs::path> detector, suspect, reference, config;
  double threshold = kVerifyThreshold;
};
VerifyResult cmd_verify(const VerifyOptions& opt);

struct ReportOptions {
  std::vector<fs::path> runs;
  bool tau_sweep = false;
  bool matrix = false;
  std::optional<fs::path> out;  // also write the rendered report here
};
// Returns the rendered text (also printed).
std::string cmd_report(const ReportOptions& opt);

struct SweepOptions {
  RunOptions run;
  std::vector<double> taus{75, 80, 85, 90, 95};
  std::vector<std::string> attacks{"finetune", "prune_retrain"};
};
std::string cmd_sweep(const SweepOptions& opt);

}  // namespace softmark::cli
