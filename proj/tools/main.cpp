#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "config.hpp"
#include "experiments.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<double> alpha_override;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool config_required) {
  auto* config = cmd->add_option("--config", opts.config_path, "Path to a JSON run config");
  if (config_required) config->required();
  cmd->add_option("--out", opts.out_dir, "Output directory")->required();
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&opts](std::uint64_t v) { opts.seed_override = v; }, "Seed override");
  cmd->add_option_function<double>(
      "--alpha", [&opts](double v) { opts.alpha_override = v; }, "Alpha override");
}

renyiflow::cli::RunConfig resolve(const CommonOptions& opts) {
  renyiflow::cli::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = renyiflow::cli::load_config(opts.config_path);
  if (opts.seed_override) cfg.seed = *opts.seed_override;
  if (opts.alpha_override) cfg.alpha = *opts.alpha_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alpha-Renyi particle ensembles: training and experiments"};
  app.require_subcommand(1);

  CommonOptions train_opts, two_regime_opts, poison_opts, fixedpoint_opts, dpo_opts, check_opts;
  bool corrupt_loss_sign = false;

  auto* train_cmd = app.add_subcommand("train", "Minibatched AdamW training of a particle ensemble");
  add_common(train_cmd, train_opts, true);
  auto* two_regime_cmd =
      app.add_subcommand("two-regime", "Contaminated linear-Gaussian stability analysis");
  add_common(two_regime_cmd, two_regime_opts, true);
  auto* poison_cmd = app.add_subcommand("poison", "Poisoning quarantine experiment");
  add_common(poison_cmd, poison_opts, true);
  auto* fixedpoint_cmd =
      app.add_subcommand("fixedpoint", "Discrete self-consistent posterior sweep");
  add_common(fixedpoint_cmd, fixedpoint_opts, true);
  auto* dpo_cmd = app.add_subcommand("dpo-toy", "Preference ensemble conflict experiment");
  add_common(dpo_cmd, dpo_opts, true);
  auto* check_cmd = app.add_subcommand("check", "Run the identity/inequality oracle suites");
  add_common(check_cmd, check_opts, false);
  check_cmd->add_flag("--self-test-corrupt", corrupt_loss_sign,
                      "Corrupt the loss sign to verify the harness catches failures");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return renyiflow::cli::cmd_train(resolve(train_opts), train_opts.out_dir);
    if (two_regime_cmd->parsed())
      return renyiflow::cli::cmd_two_regime(resolve(two_regime_opts), two_regime_opts.out_dir);
    if (poison_cmd->parsed())
      return renyiflow::cli::cmd_poison(resolve(poison_opts), poison_opts.out_dir);
    if (fixedpoint_cmd->parsed())
      return renyiflow::cli::cmd_fixedpoint(resolve(fixedpoint_opts), fixedpoint_opts.out_dir);
    if (dpo_cmd->parsed())
      return renyiflow::cli::cmd_dpo_toy(resolve(dpo_opts), dpo_opts.out_dir);
    if (check_cmd->parsed())
      return renyiflow::cli::cmd_check(resolve(check_opts), check_opts.out_dir,
                                       corrupt_loss_sign);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
