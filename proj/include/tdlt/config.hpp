// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat, hand-editable `section.key = value` text format
// (with optional [section] headers), a typed TrainConfig struct, defaults,
// validation, and lossless round-tripping. One field registry drives
// parsing, serialization, CLI overrides, and unknown-key diagnostics.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tdlt/common.hpp"

namespace tdlt {

struct TrainConfig {
  // run identity and output plumbing
  std::string run_name = "run";
  std::string out_dir = "runs";
  uint64_t seed = 1;
  int workers = 1;  // >1 accepted but executed at degree 1 (deterministic path)

  // dataset
  std::string data_dir = "data";
  bool synthetic = true;  // generate the CIFAR-layout stand-in corpus if absent
  double rho = 100.0;
  int n_max = 5000;
  int classes = 10;
  int image = 32;
  int test_per_class = 1000;  // balanced held-out subset used for evaluation

  // student model
  int patch = 4;
  int embed = 128;
  int depth = 6;
  int heads = 4;
  int mlp_ratio = 4;

  // student schedule
  int epochs = 100;
  int drw_epoch = 90;  // DRW phase start, ~90% of the schedule
  int batch = 128;
  double lr = 5e-4;
  double min_lr = 1e-5;
  int warmup_epochs = 5;
  double weight_decay = 0.05;
  float label_smoothing = 0.1f;
  int ckpt_every = 0;  // additionally checkpoint every N epochs (0 = final only)

  // teacher model and schedule
  int teacher_width = 16;
  int teacher_blocks = 5;
  int teacher_epochs = 50;
  int teacher_drw_epoch = 45;
  int teacher_batch = 128;
  double teacher_lr = 1e-3;
  double teacher_weight_decay = 1e-4;
  double sam_rho = 0.05;
  double ldam_max_margin = 0.5;
  double ldam_scale = 30.0;

  // augmentation / mixing
  float mixup_alpha = 0.8f;
  float cutmix_alpha = 1.0f;
  float mix_prob = 0.5f;  // chance a batch is mixed at all (then 50/50 kind)
  float jitter_strength = 0.3f;
  float erase_prob = 0.25f;
  float crop_scale_min = 0.3f;

  // deferred re-weighting
  double drw_beta = 0.9999;
  bool drw_normalize = false;  // rescale active weights to mean 1

  // ablation toggles
  bool ood_distill = true;
  bool drw = true;
  bool sam_teacher = true;
  bool distill = true;  // false = plain two-head CE training, no teacher

  // classifier retraining
  int crt_epochs = 5;
  double crt_lr = 1e-3;
};

namespace detail {

struct ConfigField {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

inline std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string fmt_float(float v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v +
                      "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + v +
                    "'");
}

#define TDLT_CFG_INT(KEY, FIELD)                                       \
  {KEY, [](const TrainConfig& c) { return std::to_string(c.FIELD); },  \
   [](TrainConfig& c, const std::string& v) {                          \
     c.FIELD = static_cast<decltype(c.FIELD)>(parse_int(KEY, v));      \
   }}
#define TDLT_CFG_DBL(KEY, FIELD)                                  \
  {KEY, [](const TrainConfig& c) { return fmt_double(c.FIELD); }, \
   [](TrainConfig& c, const std::string& v) {                     \
     c.FIELD = parse_double(KEY, v);                              \
   }}
#define TDLT_CFG_FLT(KEY, FIELD)                                 \
  {KEY, [](const TrainConfig& c) { return fmt_float(c.FIELD); }, \
   [](TrainConfig& c, const std::string& v) {                    \
     c.FIELD = static_cast<float>(parse_double(KEY, v));         \
   }}
#define TDLT_CFG_BOOL(KEY, FIELD)                                         \
  {KEY, [](const TrainConfig& c) { return c.FIELD ? "true" : "false"; },  \
   [](TrainConfig& c, const std::string& v) {                             \
     c.FIELD = parse_bool(KEY, v);                                        \
   }}
#define TDLT_CFG_STR(KEY, FIELD)                       \
  {KEY, [](const TrainConfig& c) { return c.FIELD; },  \
   [](TrainConfig& c, const std::string& v) { c.FIELD = v; }}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      TDLT_CFG_STR("run.name", run_name),
      TDLT_CFG_STR("run.out_dir", out_dir),
      TDLT_CFG_INT("run.seed", seed),
      TDLT_CFG_INT("run.workers", workers),
      TDLT_CFG_STR("data.dir", data_dir),
      TDLT_CFG_BOOL("data.synthetic", synthetic),
      TDLT_CFG_DBL("data.rho", rho),
      TDLT_CFG_INT("data.n_max", n_max),
      TDLT_CFG_INT("data.classes", classes),
      TDLT_CFG_INT("data.image", image),
      TDLT_CFG_INT("data.test_per_class", test_per_class),
      TDLT_CFG_INT("model.patch", patch),
      TDLT_CFG_INT("model.embed", embed),
      TDLT_CFG_INT("model.depth", depth),
      TDLT_CFG_INT("model.heads", heads),
      TDLT_CFG_INT("model.mlp_ratio", mlp_ratio),
      TDLT_CFG_INT("train.epochs", epochs),
      TDLT_CFG_INT("train.drw_epoch", drw_epoch),
      TDLT_CFG_INT("train.batch", batch),
      TDLT_CFG_DBL("train.lr", lr),
      TDLT_CFG_DBL("train.min_lr", min_lr),
      TDLT_CFG_INT("train.warmup_epochs", warmup_epochs),
      TDLT_CFG_DBL("train.weight_decay", weight_decay),
      TDLT_CFG_FLT("train.label_smoothing", label_smoothing),
      TDLT_CFG_INT("train.ckpt_every", ckpt_every),
      TDLT_CFG_INT("teacher.width", teacher_width),
      TDLT_CFG_INT("teacher.blocks", teacher_blocks),
      TDLT_CFG_INT("teacher.epochs", teacher_epochs),
      TDLT_CFG_INT("teacher.drw_epoch", teacher_drw_epoch),
      TDLT_CFG_INT("teacher.batch", teacher_batch),
      TDLT_CFG_DBL("teacher.lr", teacher_lr),
      TDLT_CFG_DBL("teacher.weight_decay", teacher_weight_decay),
      TDLT_CFG_DBL("teacher.sam_rho", sam_rho),
      TDLT_CFG_DBL("teacher.ldam_max_margin", ldam_max_margin),
      TDLT_CFG_DBL("teacher.ldam_scale", ldam_scale),
      TDLT_CFG_FLT("aug.mixup_alpha", mixup_alpha),
      TDLT_CFG_FLT("aug.cutmix_alpha", cutmix_alpha),
      TDLT_CFG_FLT("aug.mix_prob", mix_prob),
      TDLT_CFG_FLT("aug.jitter_strength", jitter_strength),
      TDLT_CFG_FLT("aug.erase_prob", erase_prob),
      TDLT_CFG_FLT("aug.crop_scale_min", crop_scale_min),
      TDLT_CFG_DBL("drw.beta", drw_beta),
      TDLT_CFG_BOOL("drw.normalize", drw_normalize),
      TDLT_CFG_BOOL("ablate.ood_distill", ood_distill),
      TDLT_CFG_BOOL("ablate.drw", drw),
      TDLT_CFG_BOOL("ablate.sam_teacher", sam_teacher),
      TDLT_CFG_BOOL("ablate.distill", distill),
      TDLT_CFG_INT("crt.epochs", crt_epochs),
      TDLT_CFG_DBL("crt.lr", crt_lr),
  };
  return fields;
}

#undef TDLT_CFG_INT
#undef TDLT_CFG_DBL
#undef TDLT_CFG_FLT
#undef TDLT_CFG_BOOL
#undef TDLT_CFG_STR

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Apply one `section.key = value` assignment; unknown keys are rejected by
// name so typos fail loudly.
inline void config_set(TrainConfig& cfg, const std::string& key,
                       const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError("config: unknown key '" + key + "'");
}

inline std::string config_get(const TrainConfig& cfg, const std::string& key) {
  for (const auto& f : detail::config_fields())
    if (key == f.key) return f.get(cfg);
  throw ConfigError("config: unknown key '" + key + "'");
}

// All fields as ordered (key, value) pairs — used by the manifest snapshot.
inline std::vector<std::pair<std::string, std::string>> config_items(
    const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : detail::config_fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

// Serialize with [section] headers in registry order.
inline std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    std::string key = f.key;
    auto dot = key.find('.');
    std::string sec = key.substr(0, dot);
    std::string leaf = key.substr(dot + 1);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += leaf + " = " + f.get(cfg) + "\n";
  }
  return out;
}

// Parse the text format: [section] headers, `key = value` lines, full dotted
// keys allowed anywhere, # comments. Later assignments win.
inline TrainConfig config_from_text(const std::string& text,
                                    const TrainConfig& base = TrainConfig{}) {
  TrainConfig cfg = base;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside quotes
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section header at line " +
                          std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config: empty section name at line " +
                          std::to_string(lineno));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected 'key = value' at line " +
                        std::to_string(lineno));
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty())
      throw ConfigError("config: empty key at line " + std::to_string(lineno));
    if (key.find('.') == std::string::npos && !section.empty())
      key = section + "." + key;
    config_set(cfg, key, value);
  }
  return cfg;
}

inline TrainConfig load_config(const std::string& path,
                               const TrainConfig& base = TrainConfig{}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str(), base);
}

inline void save_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("config: cannot write '" + path + "'");
  out << config_to_text(cfg);
  if (!out) throw DataError("config: write failed for '" + path + "'");
}

// Consistency checks shared by every entry point.
inline void validate_config(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (c.workers < 1) fail("run.workers must be >= 1");
  if (c.rho < 1.0) fail("data.rho must be >= 1");
  if (c.n_max < 1) fail("data.n_max must be >= 1");
  if (c.classes < 2) fail("data.classes must be >= 2");
  if (c.image < 1) fail("data.image must be >= 1");
  if (c.test_per_class < 1) fail("data.test_per_class must be >= 1");
  if (c.patch < 1 || c.image % c.patch != 0)
    fail("model.patch must divide data.image");
  if (c.embed < 1 || c.heads < 1 || c.embed % c.heads != 0)
    fail("model.embed must be divisible by model.heads");
  if (c.depth < 1) fail("model.depth must be >= 1");
  if (c.mlp_ratio < 1) fail("model.mlp_ratio must be >= 1");
  if (c.epochs < 0) fail("train.epochs must be >= 0");
  if (c.drw_epoch > c.epochs) fail("train.drw_epoch exceeds train.epochs");
  if (c.drw_epoch < 0) fail("train.drw_epoch must be >= 0");
  if (c.batch < 1) fail("train.batch must be >= 1");
  if (c.lr <= 0) fail("train.lr must be positive");
  if (c.min_lr < 0 || c.min_lr > c.lr) fail("train.min_lr must lie in [0, lr]");
  if (c.warmup_epochs < 0 || (c.epochs > 0 && c.warmup_epochs >= c.epochs))
    fail("train.warmup_epochs must be < train.epochs");
  if (c.weight_decay < 0) fail("train.weight_decay must be >= 0");
  if (c.label_smoothing < 0.0f || c.label_smoothing >= 1.0f)
    fail("train.label_smoothing must lie in [0,1)");
  if (c.ckpt_every < 0) fail("train.ckpt_every must be >= 0");
  if (c.teacher_width < 1) fail("teacher.width must be >= 1");
  if (c.teacher_blocks < 1) fail("teacher.blocks must be >= 1");
  if (c.teacher_epochs < 0) fail("teacher.epochs must be >= 0");
  if (c.teacher_drw_epoch > c.teacher_epochs)
    fail("teacher.drw_epoch exceeds teacher.epochs");
  if (c.teacher_batch < 1) fail("teacher.batch must be >= 1");
  if (c.teacher_lr <= 0) fail("teacher.lr must be positive");
  if (c.teacher_weight_decay < 0) fail("teacher.weight_decay must be >= 0");
  if (c.sam_rho < 0) fail("teacher.sam_rho must be >= 0");
  if (c.ldam_max_margin <= 0) fail("teacher.ldam_max_margin must be positive");
  if (c.ldam_scale <= 0) fail("teacher.ldam_scale must be positive");
  if (c.mixup_alpha <= 0) fail("aug.mixup_alpha must be positive");
  if (c.cutmix_alpha <= 0) fail("aug.cutmix_alpha must be positive");
  if (c.mix_prob < 0.0f || c.mix_prob > 1.0f)
    fail("aug.mix_prob must lie in [0,1]");
  if (c.jitter_strength < 0.0f || c.jitter_strength >= 1.0f)
    fail("aug.jitter_strength must lie in [0,1)");
  if (c.erase_prob < 0.0f || c.erase_prob > 1.0f)
    fail("aug.erase_prob must lie in [0,1]");
  if (c.crop_scale_min <= 0.0f || c.crop_scale_min > 1.0f)
    fail("aug.crop_scale_min must lie in (0,1]");
  if (c.drw_beta <= 0.0 || c.drw_beta >= 1.0)
    fail("drw.beta must lie in (0,1)");
  if (c.crt_epochs < 0) fail("crt.epochs must be >= 0");
  if (c.crt_lr <= 0) fail("crt.lr must be positive");
}

}  // namespace tdlt
