#include <CLI11.hpp>
#include <fmt/format.h>

#include "softmark/commands.hpp"
#include "softmark/error.hpp"

namespace {

using namespace softmark;

void add_run_options(CLI::App* cmd, cli::RunOptions& o, std::string& config, std::string& output) {
  cmd->add_option("-c,--config", config, "experiment YAML file (presets when omitted)");
  cmd->add_option("-o,--output", output, "run directory (overrides output_dir)");
  cmd->add_option("--set", o.sets, "override a config key, e.g. --set train.epochs=5")->type_name("KEY=VALUE");
  cmd->add_flag("--resume", o.resume, "continue from the run directory's state.ckpt");
  cmd->add_flag("-q,--quiet", o.quiet, "no per-epoch progress");
  cmd->add_option("--halt-after-epoch", o.halt_after_epoch)->group("");
}

void finish_run_options(cli::RunOptions& o, const std::string& config, const std::string& output) {
  if (!config.empty()) o.config = config;
  if (!output.empty()) o.output = output;
}

int run(int argc, char** argv) {
  CLI::App app{"softmark: output-distribution watermarking of classifiers, with removal attacks"};
  app.require_subcommand(1);

  cli::RunOptions pre;
  std::string pre_config, pre_output;
  auto* c_pre = app.add_subcommand("pretrain", "train the clean adversary model M_n");
  add_run_options(c_pre, pre, pre_config, pre_output);

  cli::EmbedOptions emb;
  std::string emb_config, emb_output, emb_scheme, emb_adv;
  auto* c_emb = app.add_subcommand("embed", "embed a watermark (usp or csp) and train its detector");
  c_emb->add_option("scheme", emb_scheme, "usp or csp")->required()->check(CLI::IsMember({"usp", "csp"}));
  add_run_options(c_emb, emb.run, emb_config, emb_output);
  c_emb->add_option("--adversary", emb_adv, "M_n checkpoint or run directory holding M_n.ckpt");
  c_emb->add_flag("--no-kld", emb.no_kld, "drop the KLD term (ablation)");
  c_emb->add_flag("--no-detector", emb.no_detector, "train without a detector (ablation)");

  cli::AttackOptions att;
  std::string att_run, att_name;
  double att_ratio = -1, att_lr = -1;
  int att_epochs = -1;
  std::string att_student;
  auto* c_att = app.add_subcommand("attack", "run a removal attack against an embed run");
  c_att->add_option("--run", att_run, "embed run directory")->required();
  c_att->add_option("--kind", att.kind, "finetune, prune, prune_retrain or distill")->required();
  c_att->add_option("--ratio", att_ratio, "pruning ratio");
  c_att->add_option("--lr", att_lr, "attack learning rate");
  c_att->add_option("--epochs", att_epochs, "attack epochs");
  c_att->add_option("--student", att_student, "distillation student architecture");
  c_att->add_option("--name", att_name, "report subdirectory under attacks/");
  c_att->add_option("--set", att.sets, "override a config key")->type_name("KEY=VALUE");
  c_att->add_flag("-q,--quiet", att.quiet);

  cli::VerifyOptions ver;
  std::string ver_run, ver_det, ver_suspect, ver_ref, ver_cfg;
  auto* c_ver = app.add_subcommand("verify", "decide ownership of a suspect model");
  c_ver->add_option("--run", ver_run, "embed run supplying detector, reference bank and dataset");
  c_ver->add_option("--detector", ver_det, "detector checkpoint");
  c_ver->add_option("--suspect", ver_suspect, "suspect model checkpoint (or run directory)")->required();
  c_ver->add_option("--reference", ver_ref, "reference bank or clean model checkpoint");
  c_ver->add_option("--config", ver_cfg, "config naming the probe dataset");
  c_ver->add_option("--threshold", ver.threshold, "wm acc threshold, percent")->capture_default_str();

  cli::ReportOptions rep;
  std::vector<std::string> rep_runs;
  std::string rep_out;
  auto* c_rep = app.add_subcommand("report", "tabulate finished runs");
  c_rep->add_option("runs", rep_runs, "run directories");
  c_rep->add_flag("--tau-sweep", rep.tau_sweep, "add the re-embed threshold table");
  c_rep->add_flag("--matrix", rep.matrix, "add the customization matrix across the runs");
  c_rep->add_option("--out", rep_out, "also write the report to this file");

  cli::SweepOptions swp;
  std::string swp_config, swp_output;
  auto* c_swp = app.add_subcommand("sweep", "CSP runs over several tau values, attacked and tabulated");
  add_run_options(c_swp, swp.run, swp_config, swp_output);
  c_swp->add_option("--tau", swp.taus, "thresholds")->delimiter(',')->capture_default_str();
  c_swp->add_option("--attacks", swp.attacks, "attacks run on every model")->delimiter(',')->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (c_pre->parsed()) {
    finish_run_options(pre, pre_config, pre_output);
    cli::cmd_pretrain(pre);
  } else if (c_emb->parsed()) {
    finish_run_options(emb.run, emb_config, emb_output);
    emb.scheme = scheme_from_string(emb_scheme);
    if (!emb_adv.empty()) emb.adversary = emb_adv;
    cli::cmd_embed(emb);
  } else if (c_att->parsed()) {
    att.run = att_run;
    if (att_ratio >= 0) att.ratio = att_ratio;
    if (att_lr >= 0) att.lr = att_lr;
    if (att_epochs >= 0) att.epochs = att_epochs;
    if (!att_student.empty()) att.student = att_student;
    if (!att_name.empty()) att.name = att_name;
    cli::cmd_attack(att);
  } else if (c_ver->parsed()) {
    if (!ver_run.empty()) ver.run = ver_run;
    if (!ver_det.empty()) ver.detector = ver_det;
    ver.suspect = ver_suspect;
    if (!ver_ref.empty()) ver.reference = ver_ref;
    if (!ver_cfg.empty()) ver.config = ver_cfg;
    cli::cmd_verify(ver);
  } else if (c_rep->parsed()) {
    rep.runs.assign(rep_runs.begin(), rep_runs.end());
    if (!rep_out.empty()) rep.out = rep_out;
    cli::cmd_report(rep);
  } else if (c_swp->parsed()) {
    finish_run_options(swp.run, swp_config, swp_output);
    cli::cmd_sweep(swp);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const InvalidArgument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const ResourceError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const TrainingError& e) {
    fmt::print(stderr, "training error: {}\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
