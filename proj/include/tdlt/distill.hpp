// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training orchestration: corpus assembly, the teacher recipe (margin loss
// with deferred re-weighting and an optional sharpness-aware wrapper), the
// dual-token student distilled from strongly augmented views, classifier
// retraining with class-balanced sampling, dual-head inference, and the
// teacher-entropy report. Everything is deterministic under the run seed's
// fanout; a single thread owns all model state.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tdlt/augment.hpp"
#include "tdlt/checkpoint.hpp"
#include "tdlt/common.hpp"
#include "tdlt/config.hpp"
#include "tdlt/dataset.hpp"
#include "tdlt/diagnostics.hpp"
#include "tdlt/losses.hpp"
#include "tdlt/manifest.hpp"
#include "tdlt/metrics.hpp"
#include "tdlt/optim.hpp"
#include "tdlt/resnet.hpp"
#include "tdlt/rng.hpp"
#include "tdlt/synthetic.hpp"
#include "tdlt/vit.hpp"

namespace tdlt {

// Fixed seed for the synthetic base corpus so every run (and every run seed)
// shares one dataset; the long-tail subsample still varies with the run's
// split seed.
inline constexpr uint64_t kSyntheticCorpusSeed = 0x5eedda7a0001ull;

// Sub-seed roles hung off the init seed so the three models never share an
// initialization stream.
enum class InitRole : uint64_t { kTeacher = 1, kStudent = 2, kCrtHeads = 3 };

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

struct Corpus {
  Dataset train;            // long-tailed training subset
  Dataset test;             // balanced held-out split
  std::vector<int> counts;  // per-class training counts
  std::vector<int> groups;  // head/mid/tail group id per class
  ChannelStats stats;       // channel statistics of the training subset
};

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "'");
}

inline bool file_exists(const std::string& p) {
  std::error_code ec;
  return std::filesystem::exists(p, ec);
}

// First `per_class` images of every class, in file order.
inline Dataset subset_balanced(const Dataset& full, int per_class) {
  if (per_class < 1) throw ParamError("subset_balanced: per_class must be >= 1");
  std::vector<int> taken(full.num_classes, 0);
  Dataset out;
  out.num_classes = full.num_classes;
  out.channels = full.channels;
  out.height = full.height;
  out.width = full.width;
  const size_t ib = full.image_bytes();
  for (size_t i = 0; i < full.count(); ++i) {
    int y = full.labels[i];
    if (taken[y] >= per_class) continue;
    ++taken[y];
    out.labels.push_back(y);
    out.images.insert(out.images.end(), full.image(i), full.image(i) + ib);
  }
  for (int c = 0; c < full.num_classes; ++c)
    if (taken[c] < per_class)
      throw DataError("subset_balanced: class " + std::to_string(c) +
                      " has only " + std::to_string(taken[c]) + " images");
  return out;
}

// Loads (or synthesizes) the base corpus, carves the long-tail training
// subset with the run's split seed, and precomputes stats and groups.
inline Corpus prepare_corpus(const TrainConfig& cfg) {
  if (cfg.synthetic && !file_exists(cfg.data_dir + "/data_batch_1.bin")) {
    ensure_dir(cfg.data_dir);
    // Size the base corpus to the largest class; the per-image streams are
    // index-derived, so corpora of different sizes agree on their overlap.
    write_synthetic_cifar(cfg.data_dir, kSyntheticCorpusSeed, cfg.n_max,
                          cfg.test_per_class);
  }
  Dataset base = load_cifar10(cfg.data_dir, /*train=*/true);
  Dataset test_full = load_cifar10(cfg.data_dir, /*train=*/false);
  auto seeds = SeedFanout::from_master(cfg.seed);

  Corpus c;
  c.counts = longtail_counts(cfg.classes, cfg.n_max, cfg.rho);
  c.train = make_longtailed(base, c.counts, seeds.split);
  c.test = subset_balanced(test_full, cfg.test_per_class);
  c.groups = group_of_class(c.counts);
  c.stats = compute_channel_stats(c.train);
  return c;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

inline std::vector<int> epoch_order(size_t n, uint64_t order_seed, int epoch) {
  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  Rng rng(derive_seed(order_seed, static_cast<uint64_t>(epoch)));
  rng.shuffle(idx);
  return idx;
}

inline std::vector<int> gather_labels(const Dataset& ds,
                                      const std::vector<int>& idxs) {
  std::vector<int> out;
  out.reserve(idxs.size());
  for (int i : idxs) out.push_back(ds.labels[i]);
  return out;
}

inline Tensor weak_batch_tensor(const Dataset& ds, const std::vector<int>& idxs,
                                Rng& rng, const ChannelStats& st) {
  std::vector<std::vector<uint8_t>> imgs;
  imgs.reserve(idxs.size());
  for (int i : idxs)
    imgs.push_back(
        weak_augment(ds.image(i), ds.channels, ds.height, ds.width, rng));
  return images_to_tensor(imgs, ds.channels, ds.height, ds.width, st);
}

inline Tensor strong_batch_tensor(const Dataset& ds,
                                  const std::vector<int>& idxs, Rng& rng,
                                  const StrongAugmentRecipe& rc,
                                  const ChannelStats& st) {
  std::vector<std::vector<uint8_t>> imgs;
  imgs.reserve(idxs.size());
  for (int i : idxs)
    imgs.push_back(
        strong_augment(ds.image(i), ds.channels, ds.height, ds.width, rng, rc));
  return images_to_tensor(imgs, ds.channels, ds.height, ds.width, st);
}

inline Tensor plain_batch_tensor(const Dataset& ds, const std::vector<int>& idxs,
                                 const ChannelStats& st) {
  std::vector<std::vector<uint8_t>> imgs;
  imgs.reserve(idxs.size());
  for (int i : idxs)
    imgs.push_back(std::vector<uint8_t>(ds.image(i),
                                        ds.image(i) + ds.image_bytes()));
  return images_to_tensor(imgs, ds.channels, ds.height, ds.width, st);
}

inline Tensor gather_rows4(const Tensor& x, const std::vector<int>& idx) {
  if (x.ndim() != 4) throw ShapeError("gather_rows4: expected [B,C,H,W]");
  const size_t row = x.size() / x.dim(0);
  auto out = Tensor::zeros({static_cast<int>(idx.size()), x.dim(1), x.dim(2),
                            x.dim(3)});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.dim(0))
      throw ShapeError("gather_rows4: index out of range");
    std::copy(x.data().begin() + idx[i] * row,
              x.data().begin() + (idx[i] + 1) * row,
              out.data().begin() + i * row);
  }
  return out;
}

inline StrongAugmentRecipe recipe_from_config(const TrainConfig& cfg) {
  StrongAugmentRecipe rc;
  rc.crop_scale_min = cfg.crop_scale_min;
  rc.jitter_strength = cfg.jitter_strength;
  rc.erase_prob = cfg.erase_prob;
  return rc;
}

// Strong augmentation followed by (optionally) one batch-level mix: 50/50
// pixel blend or box paste against a shuffled copy of the same batch.
inline AugmentedBatch build_student_batch(const Dataset& ds,
                                          const std::vector<int>& idxs,
                                          Rng& rng, const TrainConfig& cfg,
                                          const ChannelStats& st,
                                          bool mixing_active) {
  auto rc = recipe_from_config(cfg);
  auto x = strong_batch_tensor(ds, idxs, rng, rc, st);
  auto y = gather_labels(ds, idxs);
  if (mixing_active && idxs.size() > 1 && rng.bernoulli(cfg.mix_prob)) {
    std::vector<int> perm(idxs.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    rng.shuffle(perm);
    auto xb = gather_rows4(x, perm);
    std::vector<int> yb(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) yb[i] = y[perm[i]];
    if (rng.bernoulli(0.5))
      return mixup(x, y, xb, yb, cfg.classes, cfg.mixup_alpha, rng,
                   cfg.label_smoothing);
    return cutmix(x, y, xb, yb, cfg.classes, cfg.cutmix_alpha, rng,
                  cfg.label_smoothing);
  }
  AugmentedBatch b;
  b.images = x;
  b.targets = smoothed_onehot(y, cfg.classes, cfg.label_smoothing);
  b.labels = y;
  return b;
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing (with JSON sidecars describing the architecture)
// ---------------------------------------------------------------------------

inline void load_params_into(
    std::vector<std::pair<std::string, Tensor>> named,
    const NamedTensors& entries) {
  for (auto& [name, t] : named) {
    const Tensor& src = find_tensor(entries, name);
    if (src.size() != t.size())
      throw DataError("checkpoint: size mismatch for '" + name + "'");
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
  }
}

inline nlohmann::ordered_json lt_descriptor(const TrainConfig& cfg) {
  auto seeds = SeedFanout::from_master(cfg.seed);
  return {{"rho", cfg.rho},
          {"n_max", cfg.n_max},
          {"classes", cfg.classes},
          {"split_seed", seeds.split}};
}

inline void save_teacher_checkpoint(const std::string& path,
                                    const TeacherCNN& model,
                                    const TrainConfig& cfg) {
  NamedTensors entries;
  for (const auto& [n, t] : model.named_params()) entries.emplace_back(n, t);
  for (const auto& [n, t] : model.named_buffers()) entries.emplace_back(n, t);
  save_checkpoint(path, entries);
  nlohmann::ordered_json j;
  j["arch"] = "teacher_cnn";
  j["image"] = cfg.image;
  j["width"] = cfg.teacher_width;
  j["blocks_per_stage"] = cfg.teacher_blocks;
  j["classes"] = cfg.classes;
  j["lt_split"] = lt_descriptor(cfg);
  write_text_atomic(path + ".json", j.dump(2) + "\n");
}

inline TeacherCNN load_teacher_checkpoint(const std::string& path) {
  if (!file_exists(path))
    throw DataError("teacher checkpoint not found: '" + path + "'");
  if (!file_exists(path + ".json"))
    throw DataError("teacher sidecar not found: '" + path + ".json'");
  auto j = nlohmann::json::parse(read_file_bytes(path + ".json"));
  if (j.value("arch", "") != "teacher_cnn")
    throw ConfigError("checkpoint at '" + path + "' is not a teacher");
  TeacherConfig tc;
  tc.image = j.at("image").get<int>();
  tc.base_width = j.at("width").get<int>();
  tc.blocks_per_stage = j.at("blocks_per_stage").get<int>();
  tc.classes = j.at("classes").get<int>();
  TeacherCNN model(tc, 0);
  auto entries = load_checkpoint(path);
  load_params_into(model.named_params(), entries);
  load_params_into(model.named_buffers(), entries);
  return model;
}

inline void save_student_checkpoint(const std::string& path,
                                    const DualTokenViT& model,
                                    const AdamW* opt,
                                    const std::vector<std::string>& names,
                                    int epoch, const TrainConfig& cfg) {
  NamedTensors entries;
  for (const auto& [n, t] : model.named_params()) entries.emplace_back(n, t);
  entries.emplace_back("meta.epoch",
                       Tensor::from_vector({1}, {static_cast<float>(epoch)}));
  if (opt) {
    auto st = opt->state(names);
    entries.insert(entries.end(), st.begin(), st.end());
  }
  save_checkpoint(path, entries);
  const auto& vc = model.config();
  nlohmann::ordered_json j;
  j["arch"] = "dual_token_vit";
  j["image"] = vc.image;
  j["patch"] = vc.patch;
  j["embed"] = vc.embed;
  j["depth"] = vc.depth;
  j["heads"] = vc.heads;
  j["mlp_ratio"] = vc.mlp_ratio;
  j["classes"] = vc.classes;
  j["lt_split"] = lt_descriptor(cfg);
  write_text_atomic(path + ".json", j.dump(2) + "\n");
}

struct StudentCheckpoint {
  DualTokenViT model;
  NamedTensors entries;  // raw entries (includes optimizer state if saved)
  int epoch = -1;        // last completed epoch, -1 when absent
};

inline StudentCheckpoint load_student_checkpoint(const std::string& path) {
  if (!file_exists(path))
    throw DataError("student checkpoint not found: '" + path + "'");
  if (!file_exists(path + ".json"))
    throw DataError("student sidecar not found: '" + path + ".json'");
  auto j = nlohmann::json::parse(read_file_bytes(path + ".json"));
  if (j.value("arch", "") != "dual_token_vit")
    throw ConfigError("checkpoint at '" + path + "' is not a student");
  ViTConfig vc;
  vc.image = j.at("image").get<int>();
  vc.patch = j.at("patch").get<int>();
  vc.embed = j.at("embed").get<int>();
  vc.depth = j.at("depth").get<int>();
  vc.heads = j.at("heads").get<int>();
  vc.mlp_ratio = j.at("mlp_ratio").get<int>();
  vc.classes = j.at("classes").get<int>();
  StudentCheckpoint out{DualTokenViT(vc, 0), load_checkpoint(path), -1};
  load_params_into(out.model.named_params(), out.entries);
  if (has_tensor(out.entries, "meta.epoch"))
    out.epoch = static_cast<int>(find_tensor(out.entries, "meta.epoch").data()[0]);
  return out;
}

// ---------------------------------------------------------------------------
// Inference and evaluation
// ---------------------------------------------------------------------------

struct Predictions {
  std::vector<int> averaged;   // argmax of (logits_cls + logits_dist)/2
  std::vector<int> cls_only;
  std::vector<int> dist_only;
};

inline Predictions infer_from_logits(const Tensor& logits_cls,
                                     const Tensor& logits_dist) {
  NoGrad ng;
  Predictions p;
  p.averaged = hard_label(scale(add(logits_cls, logits_dist), 0.5f));
  p.cls_only = hard_label(logits_cls);
  p.dist_only = hard_label(logits_dist);
  return p;
}

inline Predictions infer(const DualTokenViT& model, const Tensor& x) {
  NoGrad ng;
  auto out = model.forward(x);
  return infer_from_logits(out.logits_cls, out.logits_dist);
}

struct HeadEval {
  double overall = 0, head = 0, mid = 0, tail = 0;
};

namespace detail {

struct GroupTally {
  // counts[group][0] = correct, [1] = total; groups 0/1/2, overall separate
  long correct[3] = {0, 0, 0};
  long total[3] = {0, 0, 0};
  long all_correct = 0, all_total = 0;

  void add(int label, int pred, const std::vector<int>& groups) {
    int g = groups[label];
    ++total[g];
    ++all_total;
    if (pred == label) {
      ++correct[g];
      ++all_correct;
    }
  }

  HeadEval result() const {
    HeadEval e;
    e.overall = all_total ? static_cast<double>(all_correct) / all_total : 0.0;
    e.head = total[0] ? static_cast<double>(correct[0]) / total[0] : 0.0;
    e.mid = total[1] ? static_cast<double>(correct[1]) / total[1] : 0.0;
    e.tail = total[2] ? static_cast<double>(correct[2]) / total[2] : 0.0;
    return e;
  }
};

}  // namespace detail

struct EvalResult {
  HeadEval avg, cls, dist;
  double cosine_cls_dist = 0;  // mean over evaluated images
  double teacher_agree = 0;    // dist-head argmax == teacher argmax rate
  int cosine_excluded = 0;
};

// Balanced-split evaluation of the student (teacher optional, for the
// agreement rate). Clean images, eval mode, batched.
inline EvalResult evaluate_student(const DualTokenViT& model,
                                   TeacherCNN* teacher, const Corpus& corpus,
                                   const TrainConfig& cfg) {
  NoGrad ng;
  detail::GroupTally avg_t, cls_t, dist_t;
  double cos_sum = 0;
  long cos_n = 0, agree = 0, agree_n = 0;
  int excluded = 0;
  const size_t n = corpus.test.count();
  for (size_t at = 0; at < n; at += static_cast<size_t>(cfg.batch)) {
    std::vector<int> idxs;
    for (size_t i = at; i < std::min(n, at + cfg.batch); ++i)
      idxs.push_back(static_cast<int>(i));
    auto x = plain_batch_tensor(corpus.test, idxs, corpus.stats);
    auto labels = gather_labels(corpus.test, idxs);
    auto out = model.forward(x);
    auto preds = infer_from_logits(out.logits_cls, out.logits_dist);
    for (size_t i = 0; i < idxs.size(); ++i) {
      avg_t.add(labels[i], preds.averaged[i], corpus.groups);
      cls_t.add(labels[i], preds.cls_only[i], corpus.groups);
      dist_t.add(labels[i], preds.dist_only[i], corpus.groups);
    }
    auto div = cls_dist_divergence(out.features_cls, out.features_dist);
    cos_sum += div.mean_distance * div.counted;
    cos_n += div.counted;
    excluded += div.excluded;
    if (teacher) {
      auto t_out = teacher->forward(x, /*training=*/false);
      auto yt = hard_label(t_out.logits);
      for (size_t i = 0; i < idxs.size(); ++i) {
        agree += (preds.dist_only[i] == yt[i]) ? 1 : 0;
        ++agree_n;
      }
    }
  }
  EvalResult r;
  r.avg = avg_t.result();
  r.cls = cls_t.result();
  r.dist = dist_t.result();
  r.cosine_cls_dist = cos_n ? cos_sum / cos_n : 0.0;
  r.teacher_agree = agree_n ? static_cast<double>(agree) / agree_n : 0.0;
  r.cosine_excluded = excluded;
  return r;
}

inline HeadEval evaluate_teacher(TeacherCNN& model, const Corpus& corpus,
                                 const TrainConfig& cfg) {
  NoGrad ng;
  detail::GroupTally tally;
  const size_t n = corpus.test.count();
  for (size_t at = 0; at < n; at += static_cast<size_t>(cfg.teacher_batch)) {
    std::vector<int> idxs;
    for (size_t i = at; i < std::min(n, at + cfg.teacher_batch); ++i)
      idxs.push_back(static_cast<int>(i));
    auto x = plain_batch_tensor(corpus.test, idxs, corpus.stats);
    auto labels = gather_labels(corpus.test, idxs);
    auto yp = hard_label(model.forward(x, false).logits);
    for (size_t i = 0; i < idxs.size(); ++i)
      tally.add(labels[i], yp[i], corpus.groups);
  }
  return tally.result();
}

// ---------------------------------------------------------------------------
// Teacher training
// ---------------------------------------------------------------------------

using ProgressFn = std::function<void(const std::string&)>;

inline void progress(const ProgressFn& fn, const std::string& msg) {
  if (fn) fn(msg);
}

// Margin-loss teacher with deferred re-weighting; the sharpness-aware
// wrapper is active when cfg.sam_teacher is set (radius cfg.sam_rho).
// Weak augmentation only. Emits metrics per epoch and the final checkpoint.
inline TeacherCNN train_teacher(const TrainConfig& cfg, const Corpus& corpus,
                                const std::string& out_dir,
                                RunManifest* manifest = nullptr,
                                const ProgressFn& log = {}) {
  validate_config(cfg);
  ensure_dir(out_dir);
  auto seeds = SeedFanout::from_master(cfg.seed);
  TeacherConfig tc;
  tc.image = cfg.image;
  tc.base_width = cfg.teacher_width;
  tc.blocks_per_stage = cfg.teacher_blocks;
  tc.classes = cfg.classes;
  TeacherCNN model(tc,
                   derive_seed(seeds.init, static_cast<uint64_t>(InitRole::kTeacher)));

  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (const auto& [n, t] : model.named_params()) {
    names.push_back(n);
    params.push_back(t);
  }
  AdamW::Hyper hy;
  hy.lr = cfg.teacher_lr;
  hy.weight_decay = cfg.teacher_weight_decay;
  AdamW opt(params, hy);

  const long spe =
      (static_cast<long>(corpus.train.count()) + cfg.teacher_batch - 1) /
      cfg.teacher_batch;
  const long total_steps = std::max<long>(1, spe * cfg.teacher_epochs);
  const long warmup_steps =
      std::min<long>(spe * cfg.warmup_epochs, total_steps - 1);
  const double min_lr = std::min(cfg.min_lr, cfg.teacher_lr);

  LdamParams lp;
  lp.max_margin = cfg.ldam_max_margin;
  lp.logit_scale = cfg.ldam_scale;
  DrwSchedule drw_sched;
  drw_sched.beta = cfg.drw_beta;
  drw_sched.start_epoch = cfg.teacher_drw_epoch;
  drw_sched.class_counts = corpus.counts;
  drw_sched.normalize = cfg.drw_normalize;

  const std::string metrics_path = out_dir + "/teacher_metrics.csv";
  MetricsWriter metrics(metrics_path);
  if (manifest) manifest->add_file(metrics_path);

  long gstep = 0;
  for (int epoch = 0; epoch < cfg.teacher_epochs; ++epoch) {
    auto order = epoch_order(corpus.train.count(),
                             derive_seed(seeds.order, 0x7e0), epoch);
    Rng aug_rng(derive_seed(seeds.augment, 0x7e0, static_cast<uint64_t>(epoch)));
    auto weights = drw_weights(drw_sched, epoch);
    double loss_sum = 0;
    long nb = 0;
    double lr_now = cfg.teacher_lr;
    for (size_t at = 0; at < order.size();
         at += static_cast<size_t>(cfg.teacher_batch)) {
      std::vector<int> idxs(order.begin() + at,
                            order.begin() +
                                std::min(order.size(),
                                         at + static_cast<size_t>(cfg.teacher_batch)));
      auto x = weak_batch_tensor(corpus.train, idxs, aug_rng, corpus.stats);
      auto y = gather_labels(corpus.train, idxs);
      lr_now = cosine_lr(gstep, total_steps, warmup_steps, cfg.teacher_lr, min_lr);
      opt.set_lr(lr_now);
      auto loss_fn = [&]() {
        return ldam_loss(model.forward(x, true).logits, y, corpus.counts, lp,
                         weights);
      };
      float lv = sam_step(opt, loss_fn,
                          cfg.sam_teacher ? cfg.sam_rho : 0.0);
      if (!std::isfinite(lv))
        throw NumericError("teacher training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
      loss_sum += lv;
      ++nb;
      ++gstep;
    }
    auto ev = evaluate_teacher(model, corpus, cfg);
    MetricsRow row;
    row.epoch = epoch;
    row.lr = lr_now;
    row.loss_cls = nb ? loss_sum / nb : 0.0;
    row.acc_avg = row.acc_cls = row.acc_dist = ev.overall;
    row.head = ev.head;
    row.mid = ev.mid;
    row.tail = ev.tail;
    metrics.append(row);
    progress(log, "teacher epoch " + std::to_string(epoch) + "/" +
                      std::to_string(cfg.teacher_epochs) + " loss " +
                      std::to_string(row.loss_cls) + " acc " +
                      std::to_string(ev.overall) + " tail " +
                      std::to_string(ev.tail));
  }

  const std::string ckpt = out_dir + "/teacher.ckpt";
  save_teacher_checkpoint(ckpt, model, cfg);
  if (manifest) {
    manifest->add_file(ckpt);
    manifest->add_file(ckpt + ".json");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Student training
// ---------------------------------------------------------------------------

struct StepStats {
  double loss = 0, loss_cls = 0, loss_dist = 0;
};

// One optimization step of the student. The frozen teacher labels the batch
// through `teacher_view` (its own input tensor — the mixed student view when
// out-of-distribution distillation is on, a weak view otherwise). A null
// teacher trains both heads on the ground-truth targets instead.
inline StepStats distill_step(DualTokenViT& student, AdamW& opt,
                              TeacherCNN* teacher, const AugmentedBatch& batch,
                              const Tensor& teacher_view,
                              const std::vector<double>& weights) {
  std::vector<int> y_t;
  if (teacher) {
    if (teacher->config().classes != student.config().classes)
      throw ConfigError("teacher/student class counts differ: " +
                        std::to_string(teacher->config().classes) + " vs " +
                        std::to_string(student.config().classes));
    NoGrad ng;
    y_t = hard_label(teacher->forward(teacher_view, false).logits);
  }
  auto out = student.forward(batch.images);
  auto a = ce_soft(out.logits_cls, batch.targets);
  Tensor d = teacher ? drw_distill_loss(out.logits_dist, y_t, weights)
                     : ce_soft(out.logits_dist, batch.targets);
  auto loss = scale(add(a, d), 0.5f);
  StepStats st;
  st.loss_cls = a.item();
  st.loss_dist = d.item();
  st.loss = loss.item();
  if (!std::isfinite(st.loss))
    throw NumericError("student training diverged (non-finite loss)");
  opt.zero_grad();
  loss.backward();
  opt.step();
  return st;
}

// Full student schedule: warmup + cosine decay, strong augmentation with
// batch mixing before the re-weighting phase, teacher labels on the same
// images (or weak views when the OOD toggle is off), per-epoch metrics and
// a rolling checkpoint for resume.
inline DualTokenViT train_student(const TrainConfig& cfg, const Corpus& corpus,
                                  TeacherCNN* teacher,
                                  const std::string& out_dir,
                                  RunManifest* manifest = nullptr,
                                  const std::string& resume_from = "",
                                  const ProgressFn& log = {}) {
  validate_config(cfg);
  ensure_dir(out_dir);
  if (cfg.distill && !teacher)
    throw ConfigError("student training with distillation needs a teacher");
  auto seeds = SeedFanout::from_master(cfg.seed);
  ViTConfig vc;
  vc.image = cfg.image;
  vc.patch = cfg.patch;
  vc.embed = cfg.embed;
  vc.depth = cfg.depth;
  vc.heads = cfg.heads;
  vc.mlp_ratio = cfg.mlp_ratio;
  vc.classes = cfg.classes;
  DualTokenViT model(vc,
                     derive_seed(seeds.init, static_cast<uint64_t>(InitRole::kStudent)));

  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (const auto& [n, t] : model.named_params()) {
    names.push_back(n);
    params.push_back(t);
  }
  AdamW::Hyper hy;
  hy.lr = cfg.lr;
  hy.weight_decay = cfg.weight_decay;
  AdamW opt(params, hy);

  int start_epoch = 0;
  if (!resume_from.empty()) {
    auto ck = load_student_checkpoint(resume_from);
    if (ck.model.config().embed != vc.embed ||
        ck.model.config().depth != vc.depth ||
        ck.model.config().classes != vc.classes ||
        ck.model.config().patch != vc.patch)
      throw ConfigError("resume checkpoint architecture differs from config");
    load_params_into(model.named_params(), ck.entries);
    if (has_tensor(ck.entries, "opt.step")) opt.load_state(ck.entries, names);
    start_epoch = ck.epoch + 1;
  }

  const long spe = (static_cast<long>(corpus.train.count()) + cfg.batch - 1) /
                   cfg.batch;
  const long total_steps = std::max<long>(1, spe * cfg.epochs);
  const long warmup_steps =
      std::min<long>(spe * cfg.warmup_epochs, total_steps - 1);

  DrwSchedule drw_sched;
  drw_sched.beta = cfg.drw_beta;
  drw_sched.start_epoch = cfg.drw_epoch;
  drw_sched.class_counts = corpus.counts;
  drw_sched.normalize = cfg.drw_normalize;
  const std::vector<double> unit_weights(cfg.classes, 1.0);

  const std::string metrics_path = out_dir + "/metrics.csv";
  MetricsWriter metrics(metrics_path, start_epoch - 1);
  if (manifest) manifest->add_file(metrics_path);
  const std::string last_ckpt = out_dir + "/student_last.ckpt";

  long gstep = static_cast<long>(start_epoch) * spe;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    auto order = epoch_order(corpus.train.count(),
                             derive_seed(seeds.order, 0x57d), epoch);
    Rng aug_rng(derive_seed(seeds.augment, 0x57d, static_cast<uint64_t>(epoch)));
    const bool drw_phase = epoch >= cfg.drw_epoch;
    const bool mixing_active = !drw_phase;  // mixing off once DRW starts
    auto weights = cfg.drw ? drw_weights(drw_sched, epoch) : unit_weights;
    double lc_sum = 0, ld_sum = 0;
    long nb = 0;
    double lr_now = cfg.lr;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch)) {
      std::vector<int> idxs(order.begin() + at,
                            order.begin() + std::min(order.size(),
                                                     at + static_cast<size_t>(cfg.batch)));
      auto batch = build_student_batch(corpus.train, idxs, aug_rng, cfg,
                                       corpus.stats, mixing_active);
      Tensor teacher_view;
      if (cfg.distill)
        teacher_view = cfg.ood_distill
                           ? batch.images
                           : weak_batch_tensor(corpus.train, idxs, aug_rng,
                                               corpus.stats);
      lr_now = cosine_lr(gstep, total_steps, warmup_steps, cfg.lr,
                         std::min(cfg.min_lr, cfg.lr));
      opt.set_lr(lr_now);
      auto st = distill_step(model, opt, cfg.distill ? teacher : nullptr, batch,
                             teacher_view, weights);
      lc_sum += st.loss_cls;
      ld_sum += st.loss_dist;
      ++nb;
      ++gstep;
    }
    auto ev = evaluate_student(model, cfg.distill ? teacher : nullptr, corpus,
                               cfg);
    MetricsRow row;
    row.epoch = epoch;
    row.lr = lr_now;
    row.loss_cls = nb ? lc_sum / nb : 0.0;
    row.loss_dist = nb ? ld_sum / nb : 0.0;
    row.acc_avg = ev.avg.overall;
    row.acc_cls = ev.cls.overall;
    row.acc_dist = ev.dist.overall;
    row.head = ev.avg.head;
    row.mid = ev.avg.mid;
    row.tail = ev.avg.tail;
    row.cosine_cls_dist = ev.cosine_cls_dist;
    row.teacher_agree = ev.teacher_agree;
    metrics.append(row);
    progress(log, "student epoch " + std::to_string(epoch) + "/" +
                      std::to_string(cfg.epochs) + " loss " +
                      std::to_string(0.5 * (row.loss_cls + row.loss_dist)) +
                      " acc " + std::to_string(ev.avg.overall) + " tail " +
                      std::to_string(ev.avg.tail));

    save_student_checkpoint(last_ckpt, model, &opt, names, epoch, cfg);
    if (manifest) {
      manifest->add_file(last_ckpt);
      manifest->add_file(last_ckpt + ".json");
    }
    if (cfg.ckpt_every > 0 && (epoch + 1) % cfg.ckpt_every == 0) {
      const std::string p =
          out_dir + "/student_e" + std::to_string(epoch) + ".ckpt";
      save_student_checkpoint(p, model, &opt, names, epoch, cfg);
      if (manifest) {
        manifest->add_file(p);
        manifest->add_file(p + ".json");
      }
    }
  }

  const std::string ckpt = out_dir + "/student.ckpt";
  save_student_checkpoint(ckpt, model, nullptr, names, cfg.epochs - 1, cfg);
  if (manifest) {
    manifest->add_file(ckpt);
    manifest->add_file(ckpt + ".json");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Classifier retraining (balanced sampling, frozen trunk)
// ---------------------------------------------------------------------------

// Reinitializes both heads and retrains only them with class-balanced
// sampling; every trunk parameter is frozen (and holds no gradient).
inline void crt_retrain(DualTokenViT& model, const TrainConfig& cfg,
                        const Corpus& corpus, const ProgressFn& log = {}) {
  validate_config(cfg);
  auto seeds = SeedFanout::from_master(cfg.seed);
  Rng init_rng(derive_seed(seeds.init, static_cast<uint64_t>(InitRole::kCrtHeads)));

  std::vector<Tensor> head_params;
  std::vector<std::string> head_names;
  for (auto& [name, t] : model.named_params()) {
    const bool is_head = name.rfind("head_", 0) == 0;
    t.set_requires_grad(is_head);
    if (is_head) {
      head_names.push_back(name);
      head_params.push_back(t);
    }
  }
  for (Tensor* w : {&model.head_c_w(), &model.head_d_w()})
    for (auto& v : w->data())
      v = static_cast<float>(init_rng.trunc_normal(0.02));
  for (Tensor* b : {&model.head_c_b(), &model.head_d_b()})
    std::fill(b->data().begin(), b->data().end(), 0.0f);

  AdamW::Hyper hy;
  hy.lr = cfg.crt_lr;
  hy.weight_decay = cfg.weight_decay;
  AdamW opt(head_params, hy);

  ClassBalancedSampler sampler(corpus.train.labels, cfg.classes);
  const long spe = (static_cast<long>(corpus.train.count()) + cfg.batch - 1) /
                   cfg.batch;
  const long total_steps = std::max<long>(1, spe * cfg.crt_epochs);
  Rng sample_rng(derive_seed(seeds.order, 0xc47));
  auto rc = recipe_from_config(cfg);

  long gstep = 0;
  for (int epoch = 0; epoch < cfg.crt_epochs; ++epoch) {
    Rng aug_rng(derive_seed(seeds.augment, 0xc47, static_cast<uint64_t>(epoch)));
    double loss_sum = 0;
    for (long b = 0; b < spe; ++b) {
      std::vector<int> idxs;
      const int bs = static_cast<int>(
          std::min<size_t>(cfg.batch, corpus.train.count()));
      for (int i = 0; i < bs; ++i)
        idxs.push_back(static_cast<int>(sampler.draw(sample_rng)));
      auto x = strong_batch_tensor(corpus.train, idxs, aug_rng, rc, corpus.stats);
      auto y = gather_labels(corpus.train, idxs);
      auto targets = smoothed_onehot(y, cfg.classes, cfg.label_smoothing);
      opt.set_lr(cosine_lr(gstep, total_steps, 0, cfg.crt_lr, 0.0));
      auto out = model.forward(x);
      auto loss = scale(add(ce_soft(out.logits_cls, targets),
                            ce_soft(out.logits_dist, targets)),
                        0.5f);
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw NumericError("classifier retraining diverged (non-finite loss)");
      loss_sum += lv;
      opt.zero_grad();
      loss.backward();
      opt.step();
      ++gstep;
    }
    progress(log, "crt epoch " + std::to_string(epoch) + "/" +
                      std::to_string(cfg.crt_epochs) + " loss " +
                      std::to_string(spe ? loss_sum / spe : 0.0));
  }

  // leave the model fully trainable again
  for (auto& [name, t] : model.named_params()) t.set_requires_grad(true);
}

// ---------------------------------------------------------------------------
// Teacher-entropy report
// ---------------------------------------------------------------------------

struct EntropyReport {
  double in_mean = 0, in_std = 0;    // weakly augmented (in-distribution)
  double ood_mean = 0, ood_std = 0;  // strongly augmented + mixed
  int n_samples = 0;
};

// Softmax-entropy comparison between the teacher's in-distribution view
// (weak augmentation) and the distillation view (strong + pixel blend).
inline EntropyReport entropy_report(TeacherCNN& teacher, const Corpus& corpus,
                                    const TrainConfig& cfg, int n_samples,
                                    uint64_t seed) {
  if (n_samples < 2) throw ParamError("entropy_report: need >= 2 samples");
  NoGrad ng;
  Rng rng(seed);
  const size_t n = corpus.train.count();
  std::vector<int> idxs(n_samples), partner(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    idxs[i] = static_cast<int>(rng.below(n));
    partner[i] = static_cast<int>(rng.below(n));
  }
  auto rc = recipe_from_config(cfg);

  // The teacher's margin loss trains the logits at `ldam_scale`, so its
  // calibrated predictive distribution is the softmax of the scaled logits;
  // raw logits would look near-uniform regardless of confidence.
  auto entropies = [&](const Tensor& x) {
    auto probs = softmax(scale(teacher.forward(x, false).logits,
                               static_cast<float>(cfg.ldam_scale)),
                         -1);
    return prediction_entropy(probs);
  };
  auto moments = [](const std::vector<double>& h, double* mean, double* sd) {
    double m = 0;
    for (double v : h) m += v;
    m /= static_cast<double>(h.size());
    double s = 0;
    for (double v : h) s += (v - m) * (v - m);
    *mean = m;
    *sd = std::sqrt(s / static_cast<double>(h.size()));
  };

  EntropyReport rep;
  rep.n_samples = n_samples;
  std::vector<double> h_in, h_ood;
  for (int at = 0; at < n_samples; at += cfg.teacher_batch) {
    const int bs = std::min(cfg.teacher_batch, n_samples - at);
    std::vector<int> a(idxs.begin() + at, idxs.begin() + at + bs);
    std::vector<int> b(partner.begin() + at, partner.begin() + at + bs);
    auto x_in = weak_batch_tensor(corpus.train, a, rng, corpus.stats);
    for (double v : entropies(x_in)) h_in.push_back(v);

    auto xa = strong_batch_tensor(corpus.train, a, rng, rc, corpus.stats);
    auto xb = strong_batch_tensor(corpus.train, b, rng, rc, corpus.stats);
    auto ya = gather_labels(corpus.train, a);
    auto yb = gather_labels(corpus.train, b);
    auto mixed = mixup(xa, ya, xb, yb, cfg.classes, cfg.mixup_alpha, rng, 0.0f);
    for (double v : entropies(mixed.images)) h_ood.push_back(v);
  }
  moments(h_in, &rep.in_mean, &rep.in_std);
  moments(h_ood, &rep.ood_mean, &rep.ood_std);
  return rep;
}

}  // namespace tdlt
