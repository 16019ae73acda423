// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run manifest: a JSON snapshot of everything needed to reproduce or audit a
// run — config, code version, seed fanout, dataset digest, timings, emitted
// files, and any deviations from the reference recipe. Written atomically
// (stage + rename) at run start and refreshed as the run progresses.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tdlt/common.hpp"
#include "tdlt/config.hpp"
#include "tdlt/rng.hpp"

namespace tdlt {

// FNV-1a 64-bit digest, used to fingerprint emitted CSV artifacts.
inline uint64_t fnv1a64(const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return std::string("fnv1a:") + buf;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("manifest: cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_atomic(const std::string& path,
                              const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot move '" + tmp + "' into place");
}

struct RunManifest {
  TrainConfig config;
  SeedFanout seeds{0};
  std::string dataset_digest;  // fnv1a of the dataset split CSV, if built
  std::vector<std::pair<std::string, double>> timings_sec;
  std::vector<std::string> deviations;  // scale/recipe deviations, logged
  std::vector<std::string> files;       // every artifact path this run emitted

  explicit RunManifest(const TrainConfig& cfg)
      : config(cfg), seeds(SeedFanout::from_master(cfg.seed)) {}

  void add_file(const std::string& p) {
    for (const auto& f : files)
      if (f == p) return;
    files.push_back(p);
  }

  void add_timing(const std::string& name, double sec) {
    timings_sec.emplace_back(name, sec);
  }

  void note_deviation(const std::string& d) { deviations.push_back(d); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    nlohmann::ordered_json jc;
    for (const auto& [k, v] : config_items(config)) jc[k] = v;
    j["config"] = jc;
    j["seeds"] = {{"master", config.seed},
                  {"split", seeds.split},
                  {"init", seeds.init},
                  {"augment", seeds.augment},
                  {"order", seeds.order}};
    j["dataset_digest"] = dataset_digest;
    nlohmann::ordered_json jt;
    for (const auto& [k, v] : timings_sec) jt[k] = v;
    j["timings_sec"] = jt;
    j["deviations"] = deviations;
    j["files"] = files;
    return j;
  }

  void write(const std::string& path) const {
    write_text_atomic(path, to_json().dump(2) + "\n");
  }
};

}  // namespace tdlt
