// SPDX-License-Identifier: Apache-2.0
//
// chvt: prepare | train | generate | evaluate | analyze
//
// Every subcommand accepts --config FILE, --out DIR, --seed N and any number
// of --set key=value overrides; the resolved configuration is written next
// to the outputs. See include/chvt/commands.hpp for exit codes.
#include <CLI11.hpp>

#include "chvt/commands.hpp"

namespace {

void add_common(CLI::App* cmd, chvt::cli::Overrides& o) {
  cmd->add_option("--config", o.config_path, "flat key = value config file");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "run seed (model init, data split)");
  cmd->add_option("--set", o.sets, "override a config key, key=value")->take_all();
}

void add_model_flags(CLI::App* cmd, chvt::cli::Overrides& o) {
  cmd->add_option("--kl", o.kl, "KL term: vanilla or relaxed")->check(CLI::IsMember({"vanilla", "relaxed"}));
  cmd->add_flag("--no-clv", o.no_clv, "discrete latent only: z_s fixed at 0, no KL term");
  cmd->add_flag("--no-dlv", o.no_dlv, "continuous latent only: K = 1, H frozen at 0");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional hybrid variational transformer for dialogue generation"};
  app.require_subcommand(1);
  chvt::cli::Overrides o;
  std::string checkpoint, input, output, split, embeddings;

  auto* prepare = app.add_subcommand("prepare", "extract, dedupe and split dialogue pairs; build the vocabulary");
  add_common(prepare, o);
  std::string raw;
  prepare->add_option("--raw", raw, "raw dialogue file (JSON lines or TSV)");

  auto* train = app.add_subcommand("train", "train a model; resumes from <out>/last.ckpt");
  add_common(train, o);
  add_model_flags(train, o);
  std::string data_dir;
  train->add_option("--data", data_dir, "prepared data directory");

  auto* generate = app.add_subcommand("generate", "K candidates per context plus the selected response");
  add_common(generate, o);
  generate->add_option("--checkpoint", checkpoint, "checkpoint file");
  generate->add_option("--input", input, "contexts, one per line (optional TAB reference)");
  generate->add_option("--output", output, "generation records (JSON lines)");

  auto* evaluate = app.add_subcommand("evaluate", "automatic metrics on a split");
  add_common(evaluate, o);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file");
  evaluate->add_option("--split", split, "split file (context TAB response)");
  evaluate->add_option("--embeddings", embeddings, "external word vectors for EA/Cohe (default: model embeddings)");

  auto* analyze = app.add_subcommand("analyze", "posterior distance study");
  add_common(analyze, o);
  analyze->add_option("--data", data_dir, "prepared data directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : chvt::cli::kUsage;
  }

  try {
    if (!raw.empty()) o.sets.push_back("raw_path=" + raw);
    if (!data_dir.empty()) o.sets.push_back("data_dir=" + data_dir);
    chvt::RunConfig cfg = chvt::cli::resolve_config(o);
    if (*prepare) {
      chvt::cli::cmd_prepare(cfg);
    } else if (*train) {
      chvt::cli::cmd_train(cfg);
    } else if (*generate) {
      // Generation settings come from the command line and config file;
      // model settings always come from the checkpoint.
      chvt::cli::cmd_generate(cfg, checkpoint, input, output);
    } else if (*evaluate) {
      chvt::cli::cmd_evaluate(cfg, checkpoint, split, embeddings);
    } else if (*analyze) {
      chvt::cli::cmd_analyze(cfg);
    }
  } catch (...) {
    return chvt::cli::exit_code_for(std::current_exception());
  }
  return chvt::cli::kOk;
}
