// SPDX-License-Identifier: Apache-2.0
//
// The five pipeline commands behind the `chvt` executable. Each command takes
// a fully resolved RunConfig and communicates only through files.
//
// Exit codes:
//   0  success
//   1  unexpected failure
//   2  usage or configuration error (malformed config, bad flag values)
//   3  missing input file or directory
//   4  checkpoint or config version mismatch
//   5  missing checkpoint
//   6  training diverged (non-finite loss or gradient)
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "chvt/analysis.hpp"
#include "chvt/checkpoint.hpp"
#include "chvt/config.hpp"
#include "chvt/corpus.hpp"
#include "chvt/errors.hpp"
#include "chvt/inference.hpp"
#include "chvt/metrics.hpp"
#include "chvt/model.hpp"
#include "chvt/training.hpp"

namespace chvt::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingInput = 3,
  kVersionMismatch = 4,
  kMissingCheckpoint = 5,
  kDiverged = 6,
};

class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void log(const std::string& msg) { std::cerr << "[chvt] " << msg << std::endl; }

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;  // key=value
  std::string kl;
  bool no_clv = false;
  bool no_dlv = false;
};

inline RunConfig resolve_config(const Overrides& o) {
  if (o.no_clv && o.no_dlv) throw ConfigError("--no-clv and --no-dlv together leave no latent variable");
  RunConfig cfg;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw MissingInput("config file '" + o.config_path + "' does not exist");
    cfg = load_config_file(o.config_path);
  }
  ConfigSchema schema(cfg);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    schema.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (!o.kl.empty()) schema.set("kl_mode", o.kl);
  if (o.no_clv) cfg.model.use_clv = false;
  if (o.no_dlv) cfg.model.use_dlv = false;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (!cfg.model.use_clv && !cfg.model.use_dlv) throw ConfigError("use_clv and use_dlv are both false");
  return cfg;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

/// Builds a directory's contents in a sibling temporary directory and swaps
/// it into place once `fill` succeeds.
template <class Fill>
void write_directory_atomically(const fs::path& dir, Fill&& fill) {
  if (dir.empty()) throw ConfigError("an output directory is required (--out or out_dir)");
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path tmp = parent / (dir.filename().string() + ".tmp-" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    fill(tmp);
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw MissingInput(what + " '" + p.string() + "' does not exist");
}

// ----- prepare -----------------------------------------------------------------

struct PrepareSummary {
  std::size_t dialogues = 0;
  std::size_t pairs = 0;
  std::size_t train = 0, valid = 0, test = 0;
  int vocab_size = 0;
};

inline PrepareSummary cmd_prepare(const RunConfig& cfg) {
  cfg.data.validate_ratios();
  require_file(cfg.data.raw_path, "raw corpus");
  PrepareSummary s;
  write_directory_atomically(cfg.out_dir, [&](const fs::path& dir) {
    corpus::ExtractStats es;
    const auto pairs = corpus::extract_pairs(corpus::read_dialogues(cfg.data.raw_path), &es);
    const auto splits =
        corpus::dedupe_split(pairs, cfg.data.train_ratio, cfg.data.valid_ratio, cfg.data.test_ratio, cfg.seed);
    const auto vocab = corpus::Vocab::build(splits.train, cfg.data.vocab_max_size);
    corpus::write_pairs((dir / "train.tsv").string(), splits.train);
    corpus::write_pairs((dir / "valid.tsv").string(), splits.valid);
    corpus::write_pairs((dir / "test.tsv").string(), splits.test);
    vocab.save((dir / "vocab.txt").string());
    s = {es.dialogues, pairs.size(), splits.train.size(), splits.valid.size(), splits.test.size(), vocab.size()};
    nlohmann::json stats = {{"dialogues", s.dialogues}, {"pairs", s.pairs},   {"train", s.train},
                            {"valid", s.valid},         {"test", s.test},     {"vocab_size", s.vocab_size}};
    write_text(dir / "stats.json", stats.dump(2) + "\n");
    write_text(dir / "resolved.cfg", serialize_config(cfg));
  });
  std::ostringstream os;
  os << "dialogues " << s.dialogues << " | pairs " << s.pairs << " | train " << s.train << " | valid " << s.valid
     << " | test " << s.test << " | vocab " << s.vocab_size;
  log(os.str());
  return s;
}

// ----- shared loading ------------------------------------------------------------

struct PreparedData {
  corpus::Vocab vocab;
  std::vector<corpus::DialoguePair> train;
};

inline PreparedData load_prepared(RunConfig& cfg) {
  const fs::path dir = cfg.data.data_dir;
  require_file(dir / "train.tsv", "training split");
  require_file(dir / "vocab.txt", "vocabulary");
  PreparedData d{corpus::Vocab::load((dir / "vocab.txt").string()), {}};
  if (cfg.model.vocab_size == 0) cfg.model.vocab_size = d.vocab.size();
  if (cfg.model.vocab_size != d.vocab.size()) {
    throw ConfigError("vocab_size " + std::to_string(cfg.model.vocab_size) + " differs from the vocabulary (" +
                      std::to_string(d.vocab.size()) + ")");
  }
  d.train = corpus::encode_pairs(corpus::read_pairs((dir / "train.tsv").string()), d.vocab, cfg.model.max_len);
  return d;
}

struct LoadedModel {
  RunConfig config;
  corpus::Vocab vocab;
  ChvtModel model;
};

inline LoadedModel load_model(const std::string& checkpoint_path) {
  if (checkpoint_path.empty()) throw MissingCheckpoint("no checkpoint given (--checkpoint)");
  if (!fs::is_regular_file(checkpoint_path)) throw MissingCheckpoint("checkpoint '" + checkpoint_path + "' not found");
  const Checkpoint ck = read_checkpoint(checkpoint_path);
  ChvtModel model(ck.config.model, ck.config.seed);
  load_parameters(ck, model.parameters());
  return {ck.config, corpus::Vocab::from_tokens(ck.vocab), std::move(model)};
}

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw VersionMismatch("checkpoint rng state is unreadable");
  return rng;
}

// ----- train ------------------------------------------------------------------------

struct TrainSummary {
  std::int64_t start_step = 0;
  std::int64_t final_step = 0;
  double final_loss = 0.0;
};

/// Trains into `out_dir`. An existing `last.ckpt` there is resumed when its
/// model configuration matches.
inline TrainSummary cmd_train(RunConfig cfg) {
  PreparedData data = load_prepared(cfg);
  if (data.train.empty()) throw MissingInput("training split is empty");
  const fs::path out = cfg.out_dir;
  if (out.empty()) throw ConfigError("an output directory is required (--out or out_dir)");
  fs::create_directories(out);
  const fs::path last = out / "last.ckpt";

  Trainer trainer(ChvtModel(cfg.model, cfg.seed), cfg.train);
  TrainSummary summary;
  if (fs::exists(last)) {
    const Checkpoint ck = read_checkpoint(last.string());
    // Logging and checkpoint cadence may change across a resume; anything
    // that shapes the optimisation trajectory may not.
    TrainConfig stored_train = ck.config.train;
    stored_train.log_every = cfg.train.log_every;
    stored_train.checkpoint_every = cfg.train.checkpoint_every;
    if (serialize_config(RunConfig{ck.config.model, stored_train, {}, {}, {}, {}, ck.config.seed}) !=
        serialize_config(RunConfig{cfg.model, cfg.train, {}, {}, {}, {}, cfg.seed})) {
      throw VersionMismatch("'" + last.string() + "' was written with a different model or training config");
    }
    load_parameters(ck, trainer.model().parameters());
    load_adam(ck, trainer.model().parameters(), trainer.state().adam);
    trainer.state().step = ck.step;
    trainer.state().rng = rng_from_string(ck.rng_state);
    summary.start_step = ck.step;
    log("resuming from step " + std::to_string(ck.step));
  }
  write_text(out / "resolved.cfg", serialize_config(cfg));

  // Keep log lines of steps that precede the resume point.
  const fs::path log_path = out / "steps.jsonl";
  std::vector<std::string> kept;
  if (fs::exists(log_path)) {
    std::ifstream in(log_path);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<std::int64_t>() < summary.start_step) kept.push_back(line);
    }
  }
  std::ofstream step_log(log_path, std::ios::binary | std::ios::trunc);
  for (const auto& l : kept) step_log << l << '\n';

  auto save = [&](const fs::path& p) {
    write_checkpoint(p.string(), make_checkpoint(cfg, data.vocab.tokens(), trainer.model().parameters(),
                                                 &trainer.state().adam, trainer.state().step,
                                                 rng_to_string(trainer.state().rng)));
  };
  try {
    trainer.fit(data.train, [&](const StepMetrics& m) {
      summary.final_loss = m.loss;
      step_log << to_json_line(m) << '\n';
      const std::int64_t done = trainer.state().step;
      if (cfg.train.log_every > 0 && done % cfg.train.log_every == 0) {
        std::ostringstream os;
        os.precision(5);
        os << "step " << done << " loss " << m.loss << " nll " << m.j_ent << " kl " << m.d_kl << " lambda "
           << m.lambda;
        log(os.str());
      }
      if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0) {
        step_log.flush();
        save(last);
      }
    });
  } catch (const TrainingDiverged& e) {
    step_log.flush();
    throw TrainingDiverged(e.what(), fs::exists(last) ? last.string() : std::string());
  }
  step_log.flush();
  save(last);
  save(out / "final.ckpt");
  summary.final_step = trainer.state().step;
  return summary;
}

// ----- generate --------------------------------------------------------------------

struct GenerationRecord {
  std::string context;
  std::vector<std::string> candidates;
  std::vector<double> scores;
  std::size_t selected = 0;
  std::optional<std::string> reference;

  const std::string& response() const { return candidates.at(selected); }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"context", context}, {"candidates", candidates}, {"selected", selected},
                        {"response", response()}};
    nlohmann::json s = nlohmann::json::array();
    for (double x : scores) s.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
    j["scores"] = s;
    if (reference) j["reference"] = *reference;
    return j;
  }
};

/// K candidates from the prior, then inner-product selection.
inline GenerationRecord generate_record(const ChvtModel& model, const corpus::Vocab& vocab, Generator& gen,
                                        const std::string& context, std::optional<std::string> reference) {
  const auto ids = vocab.tokenize(context);
  const Generation g = gen.generate_k(ids);
  const Selection sel = select_response(model, ids, g.responses);
  GenerationRecord r;
  r.context = corpus::normalize(context);
  for (const auto& c : g.responses) r.candidates.push_back(vocab.detokenize(c));
  r.scores = sel.scores;
  r.selected = sel.best;
  r.reference = std::move(reference);
  return r;
}

/// Reads one context per line; text after a tab is taken as the reference.
inline std::vector<std::pair<std::string, std::optional<std::string>>> read_contexts(const std::string& path) {
  require_file(path, "context file");
  std::ifstream in(path);
  std::vector<std::pair<std::string, std::optional<std::string>>> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    std::string ctx = tab == std::string::npos ? line : line.substr(0, tab);
    if (corpus::split_tokens(ctx).empty()) continue;
    std::optional<std::string> ref;
    if (tab != std::string::npos) ref = line.substr(tab + 1);
    out.emplace_back(std::move(ctx), std::move(ref));
  }
  return out;
}

inline std::size_t cmd_generate(const RunConfig& cfg, const std::string& checkpoint, const std::string& input,
                                const std::string& output) {
  const auto contexts = read_contexts(input);
  LoadedModel lm = load_model(checkpoint);
  if (output.empty()) throw ConfigError("an output file is required (--output)");
  Generator gen(lm.model, cfg.gen);
  const fs::path tmp = output + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + output + "'");
    for (const auto& [ctx, ref] : contexts) out << generate_record(lm.model, lm.vocab, gen, ctx, ref).to_json().dump() << '\n';
  }
  fs::rename(tmp, output);
  log("wrote " + std::to_string(contexts.size()) + " generation records to " + output);
  return contexts.size();
}

// ----- evaluate --------------------------------------------------------------------

inline metrics::MetricReport evaluate_model(const ChvtModel& model, const corpus::Vocab& vocab, const GenConfig& gcfg,
                                            const std::vector<corpus::TextPair>& split,
                                            const metrics::EmbeddingSource& source,
                                            std::vector<GenerationRecord>* records = nullptr) {
  require(!split.empty(), "evaluate: empty evaluation split");
  const auto encoded = corpus::encode_pairs(split, vocab, model.config().max_len);
  Generator gen(model, gcfg);
  std::vector<metrics::Sentence> ctx, hyp, ref;
  for (const auto& p : split) {
    GenerationRecord r = generate_record(model, vocab, gen, p.context, p.response);
    ctx.push_back(corpus::split_tokens(p.context));
    hyp.push_back(corpus::split_tokens(r.response()));
    ref.push_back(corpus::split_tokens(p.response));
    if (records) records->push_back(std::move(r));
  }
  metrics::MetricReport report = metrics::text_metrics(ctx, hyp, ref, source);
  report.ppl = metrics::perplexity(model, encoded);
  report.validate();
  return report;
}

inline metrics::MetricReport cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint,
                                          const std::string& split_path, const std::string& embeddings) {
  require_file(split_path, "evaluation split");
  if (!embeddings.empty()) require_file(embeddings, "embedding vectors");
  LoadedModel lm = load_model(checkpoint);
  const auto split = corpus::read_pairs(split_path);
  const auto source = embeddings.empty() ? metrics::EmbeddingSource::from_model(lm.model, lm.vocab)
                                         : metrics::EmbeddingSource::from_file(embeddings);
  metrics::MetricReport report;
  write_directory_atomically(cfg.out_dir, [&](const fs::path& dir) {
    std::vector<GenerationRecord> records;
    report = evaluate_model(lm.model, lm.vocab, cfg.gen, split, source, &records);
    std::ofstream gen_out(dir / "generations.jsonl", std::ios::binary);
    for (const auto& r : records) gen_out << r.to_json().dump() << '\n';
    write_text(dir / "metrics.json", report.to_json().dump(2) + "\n");
    write_text(dir / "metrics.txt", report.table());
    write_text(dir / "resolved.cfg", serialize_config(cfg));
  });
  std::cerr << report.table();
  return report;
}

// ----- analyze ---------------------------------------------------------------------

inline std::vector<analysis::DistanceTrace> cmd_analyze(RunConfig cfg) {
  PreparedData data = load_prepared(cfg);
  std::vector<LatentSource> variants;
  if (cfg.study.variant == "both") {
    variants = {LatentSource::cls_token, LatentSource::additive_mixing};
  } else {
    variants = {parse_enum<LatentSource>(cfg.study.variant, "study_variant")};
  }
  require(cfg.study.subset_size >= 2 && cfg.study.probe_size >= 2 && cfg.study.epochs >= 1,
          "study settings must be positive (subset and probe >= 2)");
  analysis::StudyOptions opt{static_cast<std::size_t>(cfg.study.subset_size), cfg.study.epochs,
                             static_cast<std::size_t>(cfg.study.probe_size), cfg.seed};
  std::vector<analysis::DistanceTrace> traces;
  for (LatentSource v : variants) {
    log("study variant " + to_string(v));
    traces.push_back(analysis::posterior_distance_study(
        data.train, cfg.model, cfg.train, v, opt, [&](const analysis::DistanceRecord& r) {
          std::ostringstream os;
          os.precision(5);
          os << "  epoch " << r.epoch << " mu_l1 " << r.mu_l1 << " var_l1 " << r.var_l1;
          log(os.str());
        }));
  }
  write_directory_atomically(cfg.out_dir, [&](const fs::path& dir) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : traces) j.push_back(analysis::to_json(t));
    write_text(dir / "distance_trace.json", j.dump(2) + "\n");
    write_text(dir / "distance_trace.svg", analysis::render_svg(traces));
    write_text(dir / "resolved.cfg", serialize_config(cfg));
  });
  return traces;
}

/// Maps an exception to its documented exit code and reports it.
inline int exit_code_for(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    log("config error: " + std::string(e.what()));
    return kUsage;
  } catch (const ContractError& e) {
    log("invalid input: " + std::string(e.what()));
    return kUsage;
  } catch (const MissingInput& e) {
    log("missing input: " + std::string(e.what()));
    return kMissingInput;
  } catch (const VersionMismatch& e) {
    log("version mismatch: " + std::string(e.what()));
    return kVersionMismatch;
  } catch (const MissingCheckpoint& e) {
    log("missing checkpoint: " + std::string(e.what()));
    return kMissingCheckpoint;
  } catch (const TrainingDiverged& e) {
    log("training diverged: " + std::string(e.what()) +
        (e.last_good_checkpoint.empty() ? "" : " (last good checkpoint: " + e.last_good_checkpoint + ")"));
    return kDiverged;
  } catch (const std::exception& e) {
    log("error: " + std::string(e.what()));
    return kFailure;
  }
}

}  // namespace chvt::cli
