// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Orchestration-layer tests at toy scale: corpus assembly, dual-head
// inference, group-wise evaluation, the distillation step, full teacher and
// student schedules (determinism, resume, toggle semantics), classifier
// retraining, and the teacher-entropy report.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "tdlt/distill.hpp"

using namespace tdlt;

namespace {

// Shared scratch area for the whole binary; the synthetic base corpus is
// generated once (12 train / 2 test images per class) and reused.
const std::string& scratch_dir() {
  static std::string dir = [] {
    auto d = std::filesystem::temp_directory_path() / "tdlt_test_distill";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d.string();
  }();
  return dir;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.data_dir = scratch_dir() + "/data";
  c.out_dir = scratch_dir();
  c.seed = 7;
  c.rho = 4.0;
  c.n_max = 12;
  c.test_per_class = 2;
  c.patch = 8;
  c.embed = 16;
  c.depth = 1;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.epochs = 2;
  c.drw_epoch = 2;
  c.batch = 32;
  c.warmup_epochs = 1;
  c.ckpt_every = 0;
  c.teacher_width = 4;
  c.teacher_blocks = 1;
  c.teacher_epochs = 1;
  c.teacher_drw_epoch = 1;
  c.teacher_batch = 32;
  c.crt_epochs = 1;
  c.crt_lr = 1e-3;
  return c;
}

const Corpus& toy_corpus() {
  static Corpus c = prepare_corpus(toy_config());
  return c;
}

std::string out_dir(const std::string& name) {
  auto d = scratch_dir() + "/" + name;
  std::filesystem::create_directories(d);
  return d;
}

bool same_bytes(const std::string& a, const std::string& b) {
  return read_file_bytes(a) == read_file_bytes(b);
}

std::vector<std::vector<float>> snapshot(
    const std::vector<std::pair<std::string, Tensor>>& named) {
  std::vector<std::vector<float>> out;
  for (const auto& [n, t] : named) out.push_back(t.data());
  return out;
}

ViTConfig toy_vit(int classes = 10) {
  ViTConfig vc;
  vc.image = 32;
  vc.patch = 8;
  vc.embed = 16;
  vc.depth = 1;
  vc.heads = 2;
  vc.mlp_ratio = 2;
  vc.classes = classes;
  return vc;
}

}  // namespace

TEST_CASE("corpus: long-tail counts, balanced test split, groups, stats") {
  auto cfg = toy_config();
  const Corpus& c = toy_corpus();

  auto expect = longtail_counts(cfg.classes, cfg.n_max, cfg.rho);
  CHECK(c.counts == expect);
  CHECK(c.counts[0] == 12);
  size_t total = 0;
  for (int n : c.counts) total += static_cast<size_t>(n);
  CHECK(c.train.count() == total);
  CHECK(class_counts(c.train) == expect);

  CHECK(c.test.count() == 20);
  auto test_counts = class_counts(c.test);
  for (int n : test_counts) CHECK(n == 2);

  CHECK(c.groups == group_of_class(c.counts));
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(std::isfinite(c.stats.mean[ch]));
    CHECK(c.stats.std[ch] > 0.0f);
  }

  // same config -> same corpus (split seed fixed by cfg.seed)
  Corpus again = prepare_corpus(cfg);
  CHECK(again.train.labels == c.train.labels);
  CHECK(again.train.images == c.train.images);

  // asking for more test images per class than exist is an error
  auto big = cfg;
  big.test_per_class = 100;
  CHECK_THROWS_AS(prepare_corpus(big), DataError);
}

TEST_CASE("epoch_order: permutation, epoch-dependent, deterministic") {
  auto a = epoch_order(50, 99, 0);
  auto b = epoch_order(50, 99, 0);
  auto c = epoch_order(50, 99, 1);
  CHECK(a == b);
  CHECK(a != c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("gather_rows4: permutes image rows, rejects bad input") {
  auto x = Tensor::zeros({3, 1, 2, 2});
  for (size_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(i);
  auto g = gather_rows4(x, {2, 0});
  CHECK(g.dim(0) == 2);
  for (int j = 0; j < 4; ++j) {
    CHECK(g.data()[j] == x.data()[8 + j]);
    CHECK(g.data()[4 + j] == x.data()[j]);
  }
  CHECK_THROWS_AS(gather_rows4(x, {3}), ShapeError);
  CHECK_THROWS_AS(gather_rows4(Tensor::zeros({2, 2}), {0}), ShapeError);
}

TEST_CASE("infer: averaged head is the exact argmax of mean logits") {
  // tie between heads resolves to the lowest class index
  auto lc = Tensor::from_vector({1, 2}, {1.0f, 0.0f});
  auto ld = Tensor::from_vector({1, 2}, {0.0f, 1.0f});
  auto p = infer_from_logits(lc, ld);
  CHECK(p.averaged[0] == 0);
  CHECK(p.cls_only[0] == 0);
  CHECK(p.dist_only[0] == 1);

  // identical logits -> identical predictions from every head
  Rng rng(3);
  auto l = Tensor::zeros({5, 7});
  for (auto& v : l.data()) v = static_cast<float>(rng.normal());
  auto q = infer_from_logits(l, l);
  CHECK(q.averaged == q.cls_only);
  CHECK(q.averaged == q.dist_only);

  // random batch against a manual float argmax of the averaged logits
  auto a = Tensor::zeros({9, 6});
  auto b = Tensor::zeros({9, 6});
  for (auto& v : a.data()) v = static_cast<float>(rng.normal());
  for (auto& v : b.data()) v = static_cast<float>(rng.normal());
  auto pr = infer_from_logits(a, b);
  for (int i = 0; i < 9; ++i) {
    int best = 0;
    float bv = (a.data()[i * 6] + b.data()[i * 6]) * 0.5f;
    for (int j = 1; j < 6; ++j) {
      float v = (a.data()[i * 6 + j] + b.data()[i * 6 + j]) * 0.5f;
      if (v > bv) {
        bv = v;
        best = j;
      }
    }
    CHECK(pr.averaged[i] == best);
  }

  // infer() on a model matches infer_from_logits on its forward outputs
  DualTokenViT m(toy_vit(), 11);
  Rng ir(4);
  auto x = Tensor::zeros({2, 3, 32, 32});
  for (auto& v : x.data()) v = static_cast<float>(ir.uniform(-1.0, 1.0));
  NoGrad ng;
  auto out = m.forward(x);
  auto direct = infer_from_logits(out.logits_cls, out.logits_dist);
  auto viaModel = infer(m, x);
  CHECK(viaModel.averaged == direct.averaged);
  CHECK(viaModel.cls_only == direct.cls_only);
  CHECK(viaModel.dist_only == direct.dist_only);
}

TEST_CASE("evaluate: constant predictor hits the group-accuracy oracle") {
  auto cfg = toy_config();
  const Corpus& c = toy_corpus();

  // zero every parameter, then bias both heads towards class 0: the model
  // predicts class 0 for every image
  DualTokenViT m(toy_vit(), 1);
  for (auto& [n, t] : m.named_params())
    std::fill(t.data().begin(), t.data().end(), 0.0f);
  m.head_c_b().data()[0] = 5.0f;
  m.head_d_b().data()[0] = 5.0f;

  auto r = evaluate_student(m, nullptr, c, cfg);
  // balanced 10-class split: 2 per class; class groups 0-2 / 3-6 / 7-9
  CHECK(r.avg.overall == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r.avg.head == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(r.avg.mid == 0.0);
  CHECK(r.avg.tail == 0.0);
  CHECK(r.cls.overall == r.avg.overall);
  CHECK(r.dist.overall == r.avg.overall);
  // all-zero features: every row is excluded from the cosine statistic
  CHECK(r.cosine_excluded == 20);
  CHECK(r.cosine_cls_dist == 0.0);
  CHECK(r.teacher_agree == 0.0);
}

TEST_CASE("evaluate: relabeled split gives a perfect score and groups recombine") {
  auto cfg = toy_config();
  Corpus c = toy_corpus();

  DualTokenViT m(toy_vit(), 21);
  std::vector<int> idxs;
  for (size_t i = 0; i < c.test.count(); ++i) idxs.push_back(static_cast<int>(i));
  auto x = plain_batch_tensor(c.test, idxs, c.stats);
  auto preds = infer(m, x);
  c.test.labels = preds.averaged;  // label := prediction

  auto r = evaluate_student(m, nullptr, c, cfg);
  CHECK(r.avg.overall == 1.0);

  // overall accuracy must recombine exactly from the group accuracies
  long n_g[3] = {0, 0, 0};
  for (int y : c.test.labels) ++n_g[c.groups[y]];
  for (const HeadEval* e : {&r.avg, &r.cls, &r.dist}) {
    double rebuilt = (e->head * n_g[0] + e->mid * n_g[1] + e->tail * n_g[2]) /
                     static_cast<double>(c.test.count());
    CHECK(e->overall == doctest::Approx(rebuilt).epsilon(1e-12));
  }
}

TEST_CASE("distill_step: null teacher equals plain two-head cross-entropy") {
  auto vc = toy_vit(4);
  DualTokenViT m1(vc, 5), m2(vc, 5);

  Rng rng(17);
  auto x = Tensor::zeros({6, 3, 32, 32});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<int> y = {0, 1, 2, 3, 0, 1};
  AugmentedBatch batch;
  batch.images = x;
  batch.targets = smoothed_onehot(y, 4, 0.1f);
  batch.labels = y;

  AdamW::Hyper hy;
  hy.lr = 1e-3;
  std::vector<Tensor> p1, p2;
  for (auto& [n, t] : m1.named_params()) p1.push_back(t);
  for (auto& [n, t] : m2.named_params()) p2.push_back(t);
  AdamW o1(p1, hy), o2(p2, hy);

  std::vector<double> w(4, 1.0);
  auto st = distill_step(m1, o1, nullptr, batch, Tensor(), w);
  CHECK(st.loss == doctest::Approx(0.5 * (st.loss_cls + st.loss_dist))
                       .epsilon(1e-6));

  auto out = m2.forward(batch.images);
  auto loss = scale(add(ce_soft(out.logits_cls, batch.targets),
                        ce_soft(out.logits_dist, batch.targets)),
                    0.5f);
  CHECK(st.loss == doctest::Approx(loss.item()).epsilon(1e-7));
  o2.zero_grad();
  loss.backward();
  o2.step();

  auto n1 = m1.named_params();
  auto n2 = m2.named_params();
  for (size_t i = 0; i < n1.size(); ++i) CHECK(n1[i].second.data() == n2[i].second.data());
}

TEST_CASE("distill_step: class-count mismatch between teacher and student") {
  TeacherConfig tc;
  tc.base_width = 4;
  tc.blocks_per_stage = 1;
  tc.classes = 10;
  TeacherCNN teacher(tc, 2);

  DualTokenViT m(toy_vit(5), 3);
  AdamW::Hyper hy;
  std::vector<Tensor> p;
  for (auto& [n, t] : m.named_params()) p.push_back(t);
  AdamW opt(p, hy);

  AugmentedBatch batch;
  batch.images = Tensor::zeros({2, 3, 32, 32});
  batch.targets = smoothed_onehot({0, 1}, 5, 0.0f);
  batch.labels = {0, 1};
  std::vector<double> w(5, 1.0);
  CHECK_THROWS_AS(
      distill_step(m, opt, &teacher, batch, batch.images, w), ConfigError);
}

TEST_CASE("distill_step: separable two-class toy reaches train accuracy 1") {
  ViTConfig vc;
  vc.image = 8;
  vc.patch = 4;
  vc.embed = 8;
  vc.depth = 1;
  vc.heads = 2;
  vc.mlp_ratio = 2;
  vc.classes = 2;
  DualTokenViT m(vc, 9);

  // class 0: bright images, class 1: dark images (clearly separable)
  Rng rng(31);
  auto x = Tensor::zeros({8, 3, 8, 8});
  std::vector<int> y(8);
  for (int i = 0; i < 8; ++i) {
    y[i] = i % 2;
    float base = y[i] == 0 ? 1.0f : -1.0f;
    for (int j = 0; j < 3 * 8 * 8; ++j)
      x.data()[i * 3 * 8 * 8 + j] =
          base + static_cast<float>(rng.uniform(-0.1, 0.1));
  }
  AugmentedBatch batch;
  batch.images = x;
  batch.targets = smoothed_onehot(y, 2, 0.0f);
  batch.labels = y;

  AdamW::Hyper hy;
  hy.lr = 1e-2;
  std::vector<Tensor> p;
  for (auto& [n, t] : m.named_params()) p.push_back(t);
  AdamW opt(p, hy);

  std::vector<double> w(2, 1.0);
  double last = 0;
  for (int it = 0; it < 80; ++it)
    last = distill_step(m, opt, nullptr, batch, Tensor(), w).loss;
  CHECK(std::isfinite(last));
  CHECK(infer(m, x).averaged == y);
}

TEST_CASE("teacher training: determinism and the sharpness toggle") {
  auto cfg = toy_config();
  const Corpus& c = toy_corpus();

  auto d_off = out_dir("teacher_sam_off");
  auto d_zero = out_dir("teacher_sam_zero");
  auto d_rho = out_dir("teacher_sam_rho");

  auto cfg_off = cfg;
  cfg_off.sam_teacher = false;
  train_teacher(cfg_off, c, d_off);

  auto cfg_zero = cfg;
  cfg_zero.sam_teacher = true;
  cfg_zero.sam_rho = 0.0;
  train_teacher(cfg_zero, c, d_zero);

  auto cfg_rho = cfg;
  cfg_rho.sam_teacher = true;
  cfg_rho.sam_rho = 0.5;
  train_teacher(cfg_rho, c, d_rho);

  // toggle off == radius zero, bit for bit
  CHECK(same_bytes(d_off + "/teacher.ckpt", d_zero + "/teacher.ckpt"));
  CHECK(same_bytes(d_off + "/teacher_metrics.csv", d_zero + "/teacher_metrics.csv"));
  // a positive radius changes the trajectory
  CHECK_FALSE(same_bytes(d_off + "/teacher.ckpt", d_rho + "/teacher.ckpt"));

  // checkpoint round-trip: params and buffers restored exactly
  auto loaded = load_teacher_checkpoint(d_off + "/teacher.ckpt");
  auto metrics = read_metrics(d_off + "/teacher_metrics.csv");
  CHECK(metrics.size() == static_cast<size_t>(cfg.teacher_epochs));
  for (const auto& row : metrics) {
    CHECK(row.acc_avg >= 0.0);
    CHECK(row.acc_avg <= 1.0);
    CHECK(std::isfinite(row.loss_cls));
  }
  // loaded teacher reproduces the written bytes
  auto d_rt = out_dir("teacher_roundtrip");
  save_teacher_checkpoint(d_rt + "/teacher.ckpt", loaded, cfg_off);
  CHECK(same_bytes(d_off + "/teacher.ckpt", d_rt + "/teacher.ckpt"));
}

TEST_CASE("student training: seeded runs are byte-identical") {
  auto cfg = toy_config();
  const Corpus& c = toy_corpus();
  auto teacher = train_teacher(cfg, c, out_dir("teacher_det"));

  auto d1 = out_dir("student_det_1");
  auto d2 = out_dir("student_det_2");
  train_student(cfg, c, &teacher, d1);
  train_student(cfg, c, &teacher, d2);

  CHECK(same_bytes(d1 + "/metrics.csv", d2 + "/metrics.csv"));
  CHECK(same_bytes(d1 + "/student.ckpt", d2 + "/student.ckpt"));
  CHECK(same_bytes(d1 + "/student_last.ckpt", d2 + "/student_last.ckpt"));

  auto rows = read_metrics(d1 + "/metrics.csv");
  CHECK(rows.size() == static_cast<size_t>(cfg.epochs));
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.loss_cls));
    CHECK(std::isfinite(r.loss_dist));
    CHECK(r.acc_avg >= 0.0);
    CHECK(r.acc_avg <= 1.0);
  }

  // a different master seed changes the trajectory
  auto cfg_seed = cfg;
  cfg_seed.seed = 8;
  auto d3 = out_dir("student_det_3");
  // corpus must match the seed (split stream); rebuild it
  auto c3 = prepare_corpus(cfg_seed);
  auto teacher3 = train_teacher(cfg_seed, c3, out_dir("teacher_det_3"));
  train_student(cfg_seed, c3, &teacher3, d3);
  CHECK_FALSE(same_bytes(d1 + "/student.ckpt", d3 + "/student.ckpt"));
}

TEST_CASE("student training: teacher is bit-identical before and after") {
  auto cfg = toy_config();
  cfg.epochs = 1;
  cfg.drw_epoch = 1;
  cfg.warmup_epochs = 0;
  const Corpus& c = toy_corpus();
  auto teacher = train_teacher(cfg, c, out_dir("teacher_frozen"));

  auto params_before = snapshot(teacher.named_params());
  auto buffers_before = snapshot(teacher.named_buffers());
  train_student(cfg, c, &teacher, out_dir("student_frozen"));
  auto params_after = snapshot(teacher.named_params());
  auto buffers_after = snapshot(teacher.named_buffers());
  CHECK(params_before == params_after);
  CHECK(buffers_before == buffers_after);
}

TEST_CASE("student training: epochs=0 leaves the initialization untouched") {
  auto cfg = toy_config();
  cfg.epochs = 0;
  cfg.drw_epoch = 0;
  cfg.distill = false;  // no teacher needed for an empty schedule
  const Corpus& c = toy_corpus();

  auto d = out_dir("student_zero_epochs");
  auto model = train_student(cfg, c, nullptr, d);
  CHECK(std::filesystem::exists(d + "/student.ckpt"));

  auto seeds = SeedFanout::from_master(cfg.seed);
  DualTokenViT fresh(model.config(),
                     derive_seed(seeds.init, static_cast<uint64_t>(InitRole::kStudent)));
  auto a = model.named_params();
  auto b = fresh.named_params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second.data() == b[i].second.data());

  auto loaded = load_student_checkpoint(d + "/student.ckpt");
  CHECK(loaded.epoch == -1);
  auto l = loaded.model.named_params();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second.data() == l[i].second.data());
}

TEST_CASE("student training: distillation on needs a teacher") {
  auto cfg = toy_config();
  cfg.epochs = 0;
  cfg.drw_epoch = 0;
  CHECK(cfg.distill);
  CHECK_THROWS_AS(
      train_student(cfg, toy_corpus(), nullptr, out_dir("student_no_teacher")),
      ConfigError);
}

TEST_CASE("student training: resume from a snapshot matches the straight run") {
  auto cfg = toy_config();
  cfg.epochs = 3;
  cfg.drw_epoch = 3;
  cfg.ckpt_every = 1;
  const Corpus& c = toy_corpus();
  auto teacher = train_teacher(cfg, c, out_dir("teacher_resume"));

  auto dA = out_dir("student_resume_straight");
  train_student(cfg, c, &teacher, dA);

  // resume from the epoch-1 snapshot: only epoch 2 remains
  auto dB = out_dir("student_resume_continued");
  train_student(cfg, c, &teacher, dB, nullptr, dA + "/student_e1.ckpt");

  CHECK(same_bytes(dA + "/student.ckpt", dB + "/student.ckpt"));
  auto rowsA = read_metrics(dA + "/metrics.csv");
  auto rowsB = read_metrics(dB + "/metrics.csv");
  REQUIRE(rowsA.size() == 3);
  REQUIRE(rowsB.size() == 1);
  CHECK(rowsB[0].epoch == 2);
  CHECK(rowsA[2].loss_cls == rowsB[0].loss_cls);
  CHECK(rowsA[2].loss_dist == rowsB[0].loss_dist);
  CHECK(rowsA[2].acc_avg == rowsB[0].acc_avg);
  CHECK(rowsA[2].cosine_cls_dist == rowsB[0].cosine_cls_dist);

  // resuming in place keeps earlier rows and appends the remainder
  auto dC = out_dir("student_resume_inplace");
  auto cfg2 = cfg;
  cfg2.epochs = 2;
  cfg2.drw_epoch = 2;
  // phase 1: train 2 epochs under the 3-epoch schedule shape is not the same;
  // instead simulate an interrupted run by copying the snapshot artifacts
  std::filesystem::copy_file(dA + "/student_e1.ckpt", dC + "/student_last.ckpt");
  std::filesystem::copy_file(dA + "/student_e1.ckpt.json",
                             dC + "/student_last.ckpt.json");
  {
    // metrics file holding epochs 0..1 (plus a stale row to be truncated)
    auto rows = read_metrics(dA + "/metrics.csv");
    MetricsWriter w(dC + "/metrics.csv");
    w.append(rows[0]);
    w.append(rows[1]);
    w.append(rows[2]);  // stale epoch-2 row; resume must rewrite it
  }
  train_student(cfg, c, &teacher, dC, nullptr, dC + "/student_last.ckpt");
  CHECK(same_bytes(dA + "/metrics.csv", dC + "/metrics.csv"));
  CHECK(same_bytes(dA + "/student.ckpt", dC + "/student.ckpt"));
}

TEST_CASE("toggles: deferred re-weighting is inert before its start epoch") {
  auto cfg = toy_config();
  cfg.epochs = 1;
  cfg.drw_epoch = 1;  // phase never entered during epoch 0
  cfg.warmup_epochs = 0;
  const Corpus& c = toy_corpus();
  auto teacher = train_teacher(cfg, c, out_dir("teacher_toggles"));

  auto d_on = out_dir("student_drw_on");
  auto d_off = out_dir("student_drw_off");
  auto cfg_off = cfg;
  cfg_off.drw = false;
  train_student(cfg, c, &teacher, d_on);
  train_student(cfg_off, c, &teacher, d_off);
  CHECK(same_bytes(d_on + "/metrics.csv", d_off + "/metrics.csv"));
  CHECK(same_bytes(d_on + "/student.ckpt", d_off + "/student.ckpt"));

  // once the phase is entered the toggle matters (tail is upweighted)
  auto cfg_in = cfg;
  cfg_in.drw_epoch = 0;
  auto cfg_in_off = cfg_in;
  cfg_in_off.drw = false;
  auto d_in_on = out_dir("student_drw_in_on");
  auto d_in_off = out_dir("student_drw_in_off");
  train_student(cfg_in, c, &teacher, d_in_on);
  train_student(cfg_in_off, c, &teacher, d_in_off);
  CHECK_FALSE(same_bytes(d_in_on + "/student.ckpt", d_in_off + "/student.ckpt"));
}

TEST_CASE("toggles: the teacher's view switches with out-of-distribution distillation") {
  auto cfg = toy_config();
  cfg.epochs = 1;
  cfg.drw_epoch = 1;
  cfg.warmup_epochs = 0;
  const Corpus& c = toy_corpus();
  auto teacher = train_teacher(cfg, c, out_dir("teacher_ood"));

  auto cfg_off = cfg;
  cfg_off.ood_distill = false;
  auto d_on = out_dir("student_ood_on");
  auto d_off = out_dir("student_ood_off");
  train_student(cfg, c, &teacher, d_on);
  train_student(cfg_off, c, &teacher, d_off);
  CHECK_FALSE(same_bytes(d_on + "/student.ckpt", d_off + "/student.ckpt"));

  // with distillation off entirely no teacher is needed and training runs
  auto cfg_plain = cfg;
  cfg_plain.distill = false;
  auto d_plain = out_dir("student_plain");
  train_student(cfg_plain, c, nullptr, d_plain);
  auto rows = read_metrics(d_plain + "/metrics.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].teacher_agree == 0.0);
}

TEST_CASE("classifier retraining: trunk frozen bit-for-bit, heads move") {
  auto cfg = toy_config();
  const Corpus& c = toy_corpus();
  DualTokenViT model(toy_vit(), 77);

  // expected head re-initialization stream
  auto seeds = SeedFanout::from_master(cfg.seed);
  Rng expect_rng(derive_seed(seeds.init, static_cast<uint64_t>(InitRole::kCrtHeads)));
  std::vector<float> exp_cw(model.head_c_w().size()), exp_dw(model.head_d_w().size());
  for (auto& v : exp_cw) v = static_cast<float>(expect_rng.trunc_normal(0.02));
  for (auto& v : exp_dw) v = static_cast<float>(expect_rng.trunc_normal(0.02));

  // zero retraining epochs: heads equal the re-initialization exactly
  DualTokenViT fresh(toy_vit(), 77);
  auto cfg0 = cfg;
  cfg0.crt_epochs = 0;
  crt_retrain(fresh, cfg0, c);
  CHECK(fresh.head_c_w().data() == exp_cw);
  CHECK(fresh.head_d_w().data() == exp_dw);
  for (float v : fresh.head_c_b().data()) CHECK(v == 0.0f);
  for (float v : fresh.head_d_b().data()) CHECK(v == 0.0f);

  // one epoch: trunk untouched, heads move away from the re-initialization
  DualTokenViT trained(toy_vit(), 77);
  std::vector<std::vector<float>> trunk_before;
  for (const auto& [n, t] : trained.named_params())
    if (n.rfind("head_", 0) != 0) trunk_before.push_back(t.data());
  crt_retrain(trained, cfg, c);
  std::vector<std::vector<float>> trunk_after;
  for (const auto& [n, t] : trained.named_params())
    if (n.rfind("head_", 0) != 0) trunk_after.push_back(t.data());
  CHECK(trunk_before == trunk_after);
  CHECK(trained.head_c_w().data() != exp_cw);
  // every parameter trainable again afterwards
  for (const auto& [n, t] : trained.named_params()) CHECK(t.requires_grad());
}

TEST_CASE("entropy report: finite statistics, argument checks") {
  auto cfg = toy_config();
  const Corpus& c = toy_corpus();
  TeacherConfig tc;
  tc.base_width = cfg.teacher_width;
  tc.blocks_per_stage = cfg.teacher_blocks;
  tc.classes = cfg.classes;
  TeacherCNN teacher(tc, 55);

  auto rep = entropy_report(teacher, c, cfg, 16, 123);
  CHECK(rep.n_samples == 16);
  for (double v : {rep.in_mean, rep.in_std, rep.ood_mean, rep.ood_std}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  // entropy of a 10-way softmax is at most ln(10)
  CHECK(rep.in_mean <= std::log(10.0) + 1e-9);
  CHECK(rep.ood_mean <= std::log(10.0) + 1e-9);
  CHECK_THROWS_AS(entropy_report(teacher, c, cfg, 1, 123), ParamError);

  // deterministic in the seed
  auto rep2 = entropy_report(teacher, c, cfg, 16, 123);
  CHECK(rep.in_mean == rep2.in_mean);
  CHECK(rep.ood_mean == rep2.ood_mean);
}

TEST_CASE("checkpoint sidecars: round-trip and arch mismatch") {
  auto cfg = toy_config();
  auto d = out_dir("sidecars");

  DualTokenViT m(toy_vit(), 99);
  save_student_checkpoint(d + "/s.ckpt", m, nullptr, {}, 4, cfg);
  auto ck = load_student_checkpoint(d + "/s.ckpt");
  CHECK(ck.epoch == 4);
  CHECK(ck.model.config().embed == 16);
  auto a = m.named_params();
  auto b = ck.model.named_params();
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].second.data() == b[i].second.data());

  TeacherConfig tc;
  tc.base_width = 4;
  tc.blocks_per_stage = 1;
  TeacherCNN t(tc, 1);
  save_teacher_checkpoint(d + "/t.ckpt", t, cfg);
  CHECK_THROWS_AS(load_student_checkpoint(d + "/t.ckpt"), ConfigError);
  CHECK_THROWS_AS(load_teacher_checkpoint(d + "/s.ckpt"), ConfigError);

  CHECK_THROWS_WITH_AS(load_student_checkpoint(d + "/missing.ckpt"),
                       doctest::Contains("missing.ckpt"), DataError);
}
