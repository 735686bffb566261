// SPDX-License-Identifier: Apache-2.0
//
// Single-file checkpoints. Layout (little-endian, as written by the host):
//
//   magic "CHVTCKPT" | u32 version
//   str config      (flat key = value text)
//   str vocabulary  (newline-separated tokens, id order)
//   i64 global step | str rng state
//   u32 tensor count, then per tensor: str name | i64 rows | i64 cols | f64[rows*cols]
//
// Optimizer moments are stored as extra tensors named "<param>@adam_m" and
// "<param>@adam_v"; the Adam step count rides in the global step. Values are
// stored as raw doubles, so save -> load reproduces every bit.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "chvt/config.hpp"
#include "chvt/errors.hpp"
#include "chvt/model.hpp"
#include "chvt/optimizer.hpp"

namespace chvt {

inline constexpr char kCheckpointMagic[8] = {'C', 'H', 'V', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::vector<std::string> vocab;
  std::int64_t step = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

namespace detail {
template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
inline void put_str(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return v;
}
inline std::string get_str(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ull << 32)) throw std::runtime_error("checkpoint corrupt: string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return s;
}
}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    detail::put_str(os, serialize_config(ck.config));
    std::string vocab;
    for (const auto& t : ck.vocab) vocab += t + "\n";
    detail::put_str(os, vocab);
    detail::put<std::int64_t>(os, ck.step);
    detail::put_str(os, ck.rng_state);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, m] : ck.tensors) {
      detail::put_str(os, name);
      detail::put<std::int64_t>(os, m.rows());
      detail::put<std::int64_t>(os, m.cols());
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
  }
  std::rename(tmp.c_str(), path.c_str());
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kCheckpointMagic)) throw VersionMismatch("'" + path + "' is not a checkpoint");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.config = parse_config_text(detail::get_str(is));
  std::istringstream vs(detail::get_str(is));
  for (std::string t; std::getline(vs, t);) ck.vocab.push_back(t);
  ck.step = detail::get<std::int64_t>(is);
  ck.rng_state = detail::get_str(is);
  const auto n = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = detail::get_str(is);
    const auto r = detail::get<std::int64_t>(is);
    const auto c = detail::get<std::int64_t>(is);
    if (r < 0 || c < 0 || r * c > (1ll << 31)) throw std::runtime_error("checkpoint corrupt: tensor shape");
    Matrix m(r, c);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!is) throw std::runtime_error("checkpoint truncated");
    ck.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ck;
}

/// Copies stored tensors into the model's parameters by name; every model
/// parameter must be present with a matching shape.
inline void load_parameters(const Checkpoint& ck, ParameterSet& params) {
  std::map<std::string, const Matrix*> byname;
  for (const auto& [n, m] : ck.tensors) byname[n] = &m;
  for (auto& p : params.all()) {
    auto it = byname.find(p.name);
    if (it == byname.end()) throw VersionMismatch("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->rows() != p.value.rows() || it->second->cols() != p.value.cols()) {
      throw VersionMismatch("checkpoint parameter '" + p.name + "' has a different shape");
    }
    p.value = *it->second;
  }
}

inline void load_adam(const Checkpoint& ck, const ParameterSet& params, AdamState& adam) {
  std::map<std::string, const Matrix*> byname;
  for (const auto& [n, m] : ck.tensors) byname[n] = &m;
  adam.init(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = byname.find(params[i].name + "@adam_m");
    auto v = byname.find(params[i].name + "@adam_v");
    if (m == byname.end() || v == byname.end()) return;
    adam.m[i] = *m->second;
    adam.v[i] = *v->second;
  }
  adam.t = ck.step;
}

inline Checkpoint make_checkpoint(const RunConfig& cfg, const std::vector<std::string>& vocab,
                                  const ParameterSet& params, const AdamState* adam, std::int64_t step,
                                  const std::string& rng_state) {
  Checkpoint ck{cfg, vocab, step, rng_state, {}};
  for (const auto& p : params.all()) ck.tensors.emplace_back(p.name, p.value);
  if (adam && adam->m.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.tensors.emplace_back(params[i].name + "@adam_m", adam->m[i]);
      ck.tensors.emplace_back(params[i].name + "@adam_v", adam->v[i]);
    }
  }
  return ck;
}

}  // namespace chvt
