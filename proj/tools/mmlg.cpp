// Command-line front end: preprocess | train | evaluate | decode | report.
// Configuration comes from a flat key=value file (--config) with flag
// overrides; every run archives its resolved configuration beside its
// outputs.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mmlg/cli.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string seed;
  std::string steps;
  std::string joint;
  std::string preset;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key=value configuration file");
    app->add_option("--set", sets, "override a config key (key=value, repeatable)");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--steps", steps, "training steps");
    app->add_option("--joint", joint, "joint combination name");
    app->add_option("--preset", preset, "model preset (MM-B, MM-L, MM-desk, MM-tiny)");
  }

  mmlg::cli::RunConfig resolve() const {
    mmlg::cli::RunConfig cfg;
    if (!config.empty()) cfg = mmlg::cli::RunConfig::from_file(config);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw mmlg::ConfigError("--set expects key=value, got '" + kv + "'");
      }
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out.empty()) cfg.set("out", out);
    if (!seed.empty()) cfg.set("seed", seed);
    if (!steps.empty()) cfg.set("steps", steps);
    if (!joint.empty()) cfg.set("joint", joint);
    if (!preset.empty()) cfg.set("preset", preset);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmlg: multi-task sequence-to-sequence training and evaluation"};
  app.require_subcommand(1);

  CommonFlags pre_flags, train_flags, eval_flags, dec_flags;

  auto* pre = app.add_subcommand("preprocess", "ingest corpora, build the vocabulary, encode");
  pre_flags.attach(pre);

  auto* train = app.add_subcommand("train", "run a joint round-robin training job");
  train_flags.attach(train);

  auto* eval = app.add_subcommand("evaluate", "decode a split and score it");
  eval_flags.attach(eval);
  std::string eval_ckpt, eval_split;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval->add_option("--split", eval_split, "train | valid | test");

  auto* dec = app.add_subcommand("decode", "decode one input file line by line");
  dec_flags.attach(dec);
  std::string dec_ckpt, dec_task, dec_input, dec_output;
  dec->add_option("--checkpoint", dec_ckpt, "checkpoint file");
  dec->add_option("--task", dec_task, "task name");
  dec->add_option("--input", dec_input, "input file, one source per line");
  dec->add_option("--output", dec_output, "output file");

  auto* rep = app.add_subcommand("report", "merge metric CSVs into a comparison table");
  std::vector<std::string> rep_inputs;
  std::string rep_out;
  rep->add_option("csvs", rep_inputs, "metric CSV files")->required();
  rep->add_option("--out", rep_out, "output table path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return mmlg::cli::cmd_preprocess(pre_flags.resolve());
    if (train->parsed()) return mmlg::cli::cmd_train(train_flags.resolve());
    if (eval->parsed()) {
      auto cfg = eval_flags.resolve();
      if (!eval_ckpt.empty()) cfg.set("checkpoint", eval_ckpt);
      if (!eval_split.empty()) cfg.set("split", eval_split);
      return mmlg::cli::cmd_evaluate(cfg);
    }
    if (dec->parsed()) {
      auto cfg = dec_flags.resolve();
      if (!dec_ckpt.empty()) cfg.set("checkpoint", dec_ckpt);
      if (!dec_task.empty()) cfg.set("task", dec_task);
      if (!dec_input.empty()) cfg.set("input", dec_input);
      if (!dec_output.empty()) cfg.set("output", dec_output);
      return mmlg::cli::cmd_decode(cfg);
    }
    if (rep->parsed()) {
      std::vector<std::filesystem::path> paths(rep_inputs.begin(), rep_inputs.end());
      return mmlg::cli::cmd_report(paths, rep_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
