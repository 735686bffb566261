// SPDX-License-Identifier: Apache-2.0
//
// Typed configuration records and the flat `key = value` file format that
// carries them. Every key has a fixed type; unknown keys and unparsable
// values raise ConfigError.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "chvt/errors.hpp"

namespace chvt {

enum class MixingWeights { uniform, learned };
enum class LatentSource { additive_mixing, cls_token };
enum class KlMode { vanilla, relaxed };
enum class DecodeMode { greedy, top_k_sampling };

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 32;
  int d_ff = 64;
  int n_layers_enc = 1;
  int n_layers_dec = 1;
  int n_heads = 2;
  int K = 4;
  int max_len = 24;
  MixingWeights mixing_weights = MixingWeights::uniform;
  LatentSource latent_source = LatentSource::additive_mixing;
  double dropout = 0.1;
  /// Continuous latent z_s enabled (off: z_s forced to 0 and no KL term).
  bool use_clv = true;
  /// Discrete table enabled (off: K = 1 and H frozen at 0).
  bool use_dlv = true;

  int d_z() const { return d_model; }
  int branches() const { return use_dlv ? K : 1; }

  void validate() const {
    require(vocab_size >= 5, "ModelConfig: vocab_size must cover the reserved ids");
    require(d_model >= 1 && n_heads >= 1 && d_model % n_heads == 0, "ModelConfig: d_model must be divisible by n_heads");
    require(d_ff >= 1, "ModelConfig: d_ff must be >= 1");
    require(n_layers_enc >= 1 && n_layers_dec >= 1, "ModelConfig: at least one encoder and one decoder layer");
    require(K >= 1, "ModelConfig: K must be >= 1");
    require(max_len >= 1, "ModelConfig: max_len must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "ModelConfig: dropout must lie in [0, 1)");
    require(use_clv || use_dlv, "ModelConfig: disabling both latent kinds leaves no latent");
  }
};

struct TrainConfig {
  int batch_size = 8;
  int k_ann = 20000;
  double lr = 1e-3;
  int max_steps = 1000;
  KlMode kl_mode = KlMode::vanilla;
  std::uint64_t seed = 1;
  double lambda_max = 1.0;
  double warmup_frac = 0.05;
  double grad_clip = 1.0;
  int log_every = 1;
  int checkpoint_every = 0;

  void validate() const {
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(k_ann >= 1, "TrainConfig: k_ann must be >= 1");
    require(lr > 0.0, "TrainConfig: lr must be positive");
    require(max_steps >= 0, "TrainConfig: max_steps must be >= 0");
    require(lambda_max >= 0.0, "TrainConfig: lambda_max must be >= 0");
    require(kl_mode != KlMode::relaxed || batch_size >= 2, "TrainConfig: relaxed KL needs batch_size >= 2");
    require(warmup_frac >= 0.0 && warmup_frac < 1.0, "TrainConfig: warmup_frac must lie in [0, 1)");
  }
};

struct GenConfig {
  DecodeMode decode_mode = DecodeMode::greedy;
  int top_k = 5;
  int max_new_tokens = 20;
  std::uint64_t seed = 7;

  void validate() const {
    require(decode_mode == DecodeMode::greedy || top_k >= 1, "GenConfig: top_k must be >= 1 when sampling");
    require(max_new_tokens >= 1, "GenConfig: max_new_tokens must be >= 1");
  }
};

struct DataConfig {
  std::string raw_path;
  std::string data_dir;
  double train_ratio = 0.8;
  double valid_ratio = 0.1;
  double test_ratio = 0.1;
  int vocab_max_size = 20000;

  void validate_ratios() const {
    require(train_ratio >= 0 && valid_ratio >= 0 && test_ratio >= 0, "DataConfig: ratios must be nonnegative");
    require(std::abs(train_ratio + valid_ratio + test_ratio - 1.0) <= 1e-9, "DataConfig: ratios must sum to 1");
  }
};

struct StudyConfig {
  int subset_size = 2000;
  int epochs = 10;
  int probe_size = 64;
  std::string variant = "both";
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GenConfig gen;
  DataConfig data;
  StudyConfig study;
  std::string out_dir;
  std::uint64_t seed = 1;
};

namespace detail {

template <class E>
struct EnumNames;
template <>
struct EnumNames<MixingWeights> {
  static constexpr std::pair<MixingWeights, const char*> items[] = {{MixingWeights::uniform, "uniform"},
                                                                    {MixingWeights::learned, "learned"}};
};
template <>
struct EnumNames<LatentSource> {
  static constexpr std::pair<LatentSource, const char*> items[] = {{LatentSource::additive_mixing, "additive_mixing"},
                                                                   {LatentSource::cls_token, "cls_token"}};
};
template <>
struct EnumNames<KlMode> {
  static constexpr std::pair<KlMode, const char*> items[] = {{KlMode::vanilla, "vanilla"}, {KlMode::relaxed, "relaxed"}};
};
template <>
struct EnumNames<DecodeMode> {
  static constexpr std::pair<DecodeMode, const char*> items[] = {{DecodeMode::greedy, "greedy"},
                                                                 {DecodeMode::top_k_sampling, "top_k_sampling"}};
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

template <class E>
std::string to_string(E e) {
  for (const auto& [v, name] : detail::EnumNames<E>::items) {
    if (v == e) return name;
  }
  return "?";
}

template <class E>
E parse_enum(const std::string& s, const std::string& key) {
  for (const auto& [v, name] : detail::EnumNames<E>::items) {
    if (s == name) return v;
  }
  throw ConfigError("config key '" + key + "': unknown value '" + s + "'");
}

/// Binds each flat key of a RunConfig to its typed field.
class ConfigSchema {
 public:
  explicit ConfigSchema(RunConfig& c) {
    add("vocab_size", c.model.vocab_size);
    add("d_model", c.model.d_model);
    add("d_ff", c.model.d_ff);
    add("n_layers_enc", c.model.n_layers_enc);
    add("n_layers_dec", c.model.n_layers_dec);
    add("n_heads", c.model.n_heads);
    add("K", c.model.K);
    add("max_len", c.model.max_len);
    add_enum("mixing_weights", c.model.mixing_weights);
    add_enum("latent_source", c.model.latent_source);
    add("dropout", c.model.dropout);
    add("use_clv", c.model.use_clv);
    add("use_dlv", c.model.use_dlv);

    add("batch_size", c.train.batch_size);
    add("k_ann", c.train.k_ann);
    add("lr", c.train.lr);
    add("max_steps", c.train.max_steps);
    add_enum("kl_mode", c.train.kl_mode);
    add("train_seed", c.train.seed);
    add("lambda_max", c.train.lambda_max);
    add("warmup_frac", c.train.warmup_frac);
    add("grad_clip", c.train.grad_clip);
    add("log_every", c.train.log_every);
    add("checkpoint_every", c.train.checkpoint_every);

    add_enum("decode_mode", c.gen.decode_mode);
    add("top_k", c.gen.top_k);
    add("max_new_tokens", c.gen.max_new_tokens);
    add("gen_seed", c.gen.seed);

    add("raw_path", c.data.raw_path);
    add("data_dir", c.data.data_dir);
    add("train_ratio", c.data.train_ratio);
    add("valid_ratio", c.data.valid_ratio);
    add("test_ratio", c.data.test_ratio);
    add("vocab_max_size", c.data.vocab_max_size);

    add("study_subset_size", c.study.subset_size);
    add("study_epochs", c.study.epochs);
    add("study_probe_size", c.study.probe_size);
    add("study_variant", c.study.variant);

    add("out_dir", c.out_dir);
    add("seed", c.seed);
  }

  void set(const std::string& key, const std::string& value) {
    auto it = fields_.find(key);
    if (it == fields_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(value);
  }

  bool has(const std::string& key) const { return fields_.count(key) != 0; }

  /// Every key in declaration order, one `key = value` line each.
  std::string serialize() const {
    std::ostringstream os;
    for (const auto& k : order_) os << k << " = " << fields_.at(k).get() << "\n";
    return os.str();
  }

 private:
  struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };

  template <class T>
  void add(const std::string& key, T& ref) {
    Field f;
    f.set = [&ref, key](const std::string& v) { ref = parse_value<T>(v, key); };
    f.get = [&ref]() { return format_value(ref); };
    fields_.emplace(key, std::move(f));
    order_.push_back(key);
  }

  template <class E>
  void add_enum(const std::string& key, E& ref) {
    Field f;
    f.set = [&ref, key](const std::string& v) { ref = parse_enum<E>(v, key); };
    f.get = [&ref]() { return to_string(ref); };
    fields_.emplace(key, std::move(f));
    order_.push_back(key);
  }

  template <class T>
  static T parse_value(const std::string& v, const std::string& key) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
    } else {
      if constexpr (std::is_unsigned_v<T>) {
        if (v.find('-') != std::string::npos) throw ConfigError("config key '" + key + "': expected a nonnegative value");
      }
      std::istringstream is(v);
      T out{};
      is >> out;
      if (is.fail() || !is.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
      return out;
    }
  }

  template <class T>
  static std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    } else {
      return std::to_string(v);
    }
  }

  std::map<std::string, Field> fields_;
  std::vector<std::string> order_;
};

/// Applies `key = value` lines; '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, const std::string& text) {
  ConfigSchema schema(cfg);
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    schema.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str());
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  return ConfigSchema(copy).serialize();
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

}  // namespace chvt
