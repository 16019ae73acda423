// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands cover the full workflow: building the
// long-tailed dataset, training the teacher and the dual-token student,
// classifier retraining, evaluation, the diagnostic reports, and the 2x2x2
// toggle-ablation grid. Configuration precedence, lowest to highest:
// built-in defaults, --config file, TDLT_* environment variables, --set
// key=value pairs, then named flags. Exit codes: 0 success, 2 configuration
// error, 3 data error, 4 numeric failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "tdlt/distill.hpp"

namespace {

using namespace tdlt;

// ---------------------------------------------------------------------------
// Configuration assembly
// ---------------------------------------------------------------------------

struct CliState {
  std::string config_path;
  std::vector<std::string> sets;                          // raw key=value
  std::vector<std::pair<std::string, std::string>> flags; // named-flag values
  std::string teacher_path;  // --teacher override
  std::string ckpt_path;     // --ckpt override
  std::string resume_path;   // --resume (train-student)
  std::string mode;          // --mode (diagnose)
  std::string target = "cls";  // --target token for rollout maps
  int images = 64;             // --images cap for diagnostics
};

void add_common_options(CLI::App* cmd, CliState& st) {
  cmd->add_option("--config", st.config_path, "configuration file to load")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--set", st.sets, "override a key, e.g. --set train.lr=0.001")
      ->expected(1)
      ->take_all();
  auto key_flag = [cmd, &st](const std::string& flag, const std::string& key,
                             const std::string& desc) {
    cmd->add_option_function<std::string>(
           flag,
           [&st, key](const std::string& v) { st.flags.emplace_back(key, v); },
           desc)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  };
  key_flag("--name", "run.name", "run name (output subdirectory)");
  key_flag("--out", "run.out_dir", "output root directory");
  key_flag("--data", "data.dir", "dataset directory");
  key_flag("--seed", "run.seed", "master seed");
  key_flag("--rho", "data.rho", "imbalance ratio N_max/N_min");
  key_flag("--n-max", "data.n_max", "largest per-class training count");
  key_flag("--epochs", "train.epochs", "student training epochs");
  key_flag("--drw-normalize", "drw.normalize",
           "rescale active re-weighting factors to mean 1 (true/false)");
}

TrainConfig build_config(const CliState& st) {
  TrainConfig cfg;
  if (!st.config_path.empty()) cfg = load_config(st.config_path, cfg);
  if (const char* d = std::getenv("TDLT_DATA_DIR"))
    config_set(cfg, "data.dir", d);
  if (const char* o = std::getenv("TDLT_OUT_DIR"))
    config_set(cfg, "run.out_dir", o);
  for (const auto& kv : st.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: --set expects key=value, got '" + kv + "'");
    config_set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : st.flags) config_set(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

std::string run_dir_of(const TrainConfig& cfg) {
  auto d = cfg.out_dir + "/" + cfg.run_name;
  ensure_dir(d);
  return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void log_line(const std::string& s) {
  std::printf("%s\n", s.c_str());
  std::fflush(stdout);
}

// Prepares the corpus and records the split manifest + digest.
Corpus corpus_with_manifest(const TrainConfig& cfg, const std::string& dir,
                            RunManifest& m) {
  auto corpus = prepare_corpus(cfg);
  const std::string split_csv = dir + "/split.csv";
  write_split_manifest(split_csv, corpus.counts);
  m.dataset_digest = fnv1a64_hex(read_file_bytes(split_csv));
  m.add_file(split_csv);
  m.write(dir + "/manifest.json");
  m.add_file(dir + "/manifest.json");
  return corpus;
}

// ---------------------------------------------------------------------------
// CSV / PGM emit helpers
// ---------------------------------------------------------------------------

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

// Grayscale PGM (plain P2) with values scaled to 0..255 by the map maximum.
void write_pgm(const std::string& path, const double* map, int grid) {
  double mx = 0;
  for (int i = 0; i < grid * grid; ++i) mx = std::max(mx, map[i]);
  std::string s = "P2\n" + std::to_string(grid) + " " + std::to_string(grid) +
                  "\n255\n";
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      int px = mx > 0 ? static_cast<int>(map[y * grid + x] / mx * 255.0 + 0.5)
                      : 0;
      s += std::to_string(px);
      s += (x + 1 == grid) ? "\n" : " ";
    }
  }
  write_text_atomic(path, s);
}

struct EvalSummaryRow {
  std::string label;
  EvalResult r;
};

void write_eval_csv(const std::string& path,
                    const std::vector<EvalSummaryRow>& rows) {
  std::string s =
      "label,acc_avg,acc_cls,acc_dist,head,mid,tail,cls_head,cls_mid,"
      "cls_tail,dist_head,dist_mid,dist_tail,cosine_cls_dist,teacher_agree\n";
  for (const auto& row : rows) {
    s += row.label;
    for (double v :
         {row.r.avg.overall, row.r.cls.overall, row.r.dist.overall,
          row.r.avg.head, row.r.avg.mid, row.r.avg.tail, row.r.cls.head,
          row.r.cls.mid, row.r.cls.tail, row.r.dist.head, row.r.dist.mid,
          row.r.dist.tail, row.r.cosine_cls_dist, row.r.teacher_agree})
      s += "," + num(v);
    s += "\n";
  }
  write_text_atomic(path, s);
}

void print_eval(const std::string& label, const EvalResult& r) {
  std::printf(
      "%s: avg %.4f (cls %.4f, dist %.4f) head %.4f mid %.4f tail %.4f "
      "cosine %.4f agree %.4f\n",
      label.c_str(), r.avg.overall, r.cls.overall, r.dist.overall, r.avg.head,
      r.avg.mid, r.avg.tail, r.cosine_cls_dist, r.teacher_agree);
  std::printf(
      "%s: experts cls head %.4f mid %.4f tail %.4f | dist head %.4f "
      "mid %.4f tail %.4f\n",
      label.c_str(), r.cls.head, r.cls.mid, r.cls.tail, r.dist.head,
      r.dist.mid, r.dist.tail);
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

void cmd_dataset(const CliState& st) {
  auto cfg = build_config(st);
  auto dir = run_dir_of(cfg);
  RunManifest m(cfg);
  auto t0 = std::chrono::steady_clock::now();
  auto corpus = corpus_with_manifest(cfg, dir, m);
  m.add_timing("dataset", seconds_since(t0));
  m.write(dir + "/manifest.json");
  size_t total = corpus.train.count();
  log_line("dataset: " + std::to_string(total) + " training images, " +
           std::to_string(corpus.test.count()) + " evaluation images");
  log_line("dataset: N_0=" + std::to_string(corpus.counts.front()) +
           " N_" + std::to_string(corpus.counts.size() - 1) + "=" +
           std::to_string(corpus.counts.back()));
  log_line("dataset: split manifest " + dir + "/split.csv (" +
           m.dataset_digest + ")");
}

void cmd_train_teacher(const CliState& st) {
  auto cfg = build_config(st);
  auto dir = run_dir_of(cfg);
  RunManifest m(cfg);
  auto corpus = corpus_with_manifest(cfg, dir, m);
  auto t0 = std::chrono::steady_clock::now();
  auto teacher = train_teacher(cfg, corpus, dir, &m, log_line);
  m.add_timing("train_teacher", seconds_since(t0));
  m.write(dir + "/manifest.json");
  auto ev = evaluate_teacher(teacher, corpus, cfg);
  std::printf("teacher: overall %.4f head %.4f mid %.4f tail %.4f\n",
              ev.overall, ev.head, ev.mid, ev.tail);
}

void cmd_train_student(const CliState& st) {
  auto cfg = build_config(st);
  auto dir = run_dir_of(cfg);
  RunManifest m(cfg);
  auto corpus = corpus_with_manifest(cfg, dir, m);

  TeacherCNN* teacher_ptr = nullptr;
  TeacherCNN teacher(TeacherConfig{32, 3, 1, 1, 2}, 0);  // placeholder shell
  if (cfg.distill) {
    auto tp = st.teacher_path.empty() ? dir + "/teacher.ckpt" : st.teacher_path;
    teacher = load_teacher_checkpoint(tp);
    teacher_ptr = &teacher;
    log_line("student: distilling from " + tp);
  }
  auto t0 = std::chrono::steady_clock::now();
  auto model =
      train_student(cfg, corpus, teacher_ptr, dir, &m, st.resume_path, log_line);
  m.add_timing("train_student", seconds_since(t0));
  m.write(dir + "/manifest.json");
  auto ev = evaluate_student(model, teacher_ptr, corpus, cfg);
  print_eval("student", ev);
}

void cmd_crt(const CliState& st) {
  auto cfg = build_config(st);
  auto dir = run_dir_of(cfg);
  RunManifest m(cfg);
  auto corpus = corpus_with_manifest(cfg, dir, m);
  auto cp = st.ckpt_path.empty() ? dir + "/student.ckpt" : st.ckpt_path;
  auto ck = load_student_checkpoint(cp);
  auto t0 = std::chrono::steady_clock::now();
  crt_retrain(ck.model, cfg, corpus, log_line);
  m.add_timing("crt", seconds_since(t0));
  const std::string out = dir + "/student_crt.ckpt";
  save_student_checkpoint(out, ck.model, nullptr, {}, ck.epoch, cfg);
  m.add_file(out);
  m.add_file(out + ".json");
  m.write(dir + "/manifest.json");
  auto ev = evaluate_student(ck.model, nullptr, corpus, cfg);
  print_eval("crt", ev);
  log_line("crt: wrote " + out);
}

void cmd_eval(const CliState& st) {
  auto cfg = build_config(st);
  auto dir = run_dir_of(cfg);
  RunManifest m(cfg);
  auto corpus = corpus_with_manifest(cfg, dir, m);
  auto cp = st.ckpt_path.empty() ? dir + "/student.ckpt" : st.ckpt_path;
  auto ck = load_student_checkpoint(cp);

  TeacherCNN* teacher_ptr = nullptr;
  TeacherCNN teacher(TeacherConfig{32, 3, 1, 1, 2}, 0);  // placeholder shell
  if (!st.teacher_path.empty()) {
    teacher = load_teacher_checkpoint(st.teacher_path);
    teacher_ptr = &teacher;
  }
  auto ev = evaluate_student(ck.model, teacher_ptr, corpus, cfg);
  const std::string out = dir + "/eval.csv";
  write_eval_csv(out, {{"student", ev}});
  m.add_file(out);
  m.write(dir + "/manifest.json");
  print_eval("eval", ev);
}

// Validation images as one normalized tensor, capped at `cap` images.
Tensor diag_batch(const Corpus& corpus, int cap, std::vector<int>* labels) {
  std::vector<int> idxs;
  const size_t n = std::min<size_t>(corpus.test.count(),
                                    static_cast<size_t>(cap));
  for (size_t i = 0; i < n; ++i) idxs.push_back(static_cast<int>(i));
  if (labels) *labels = gather_labels(corpus.test, idxs);
  return plain_batch_tensor(corpus.test, idxs, corpus.stats);
}

void cmd_diagnose(const CliState& st) {
  auto cfg = build_config(st);
  auto dir = run_dir_of(cfg);
  RunManifest m(cfg);
  auto corpus = corpus_with_manifest(cfg, dir, m);
  auto record = [&](const std::string& p) {
    m.add_file(p);
    m.write(dir + "/manifest.json");
  };

  if (st.mode == "entropy") {
    auto tp = st.teacher_path.empty() ? dir + "/teacher.ckpt" : st.teacher_path;
    auto teacher = load_teacher_checkpoint(tp);
    auto seeds = SeedFanout::from_master(cfg.seed);
    int n = std::max(2, st.images);
    auto rep = entropy_report(teacher, corpus, cfg, n,
                              derive_seed(seeds.augment, 0xe47));
    std::string s = "view,mean_entropy_nats,std_entropy_nats,n_samples\n";
    s += "in_distribution_weak," + num(rep.in_mean) + "," + num(rep.in_std) +
         "," + std::to_string(rep.n_samples) + "\n";
    s += "ood_strong_mixed," + num(rep.ood_mean) + "," + num(rep.ood_std) +
         "," + std::to_string(rep.n_samples) + "\n";
    const std::string out = dir + "/entropy.csv";
    write_text_atomic(out, s);
    record(out);
    std::printf("entropy (nats): weak %.4f +/- %.4f | strong+mixed %.4f +/- %.4f\n",
                rep.in_mean, rep.in_std, rep.ood_mean, rep.ood_std);
    return;
  }

  auto cp = st.ckpt_path.empty() ? dir + "/student.ckpt" : st.ckpt_path;
  auto ck = load_student_checkpoint(cp);
  const auto& vc = ck.model.config();
  std::vector<int> labels;
  auto x = diag_batch(corpus, st.images, &labels);
  NoGrad ng;

  if (st.mode == "locality") {
    auto out = ck.model.forward(x, /*capture=*/true);
    auto prof = mean_attention_distance(out.attention, vc.patch, vc.image);
    std::string s = "block,head,mean_distance_px\n";
    for (int b = 0; b < prof.n_blocks; ++b)
      for (int h = 0; h < prof.n_heads; ++h)
        s += std::to_string(b) + "," + std::to_string(h) + "," +
             num(prof.at(b, h)) + "\n";
    const std::string path = dir + "/locality.csv";
    write_text_atomic(path, s);
    record(path);
    log_line("locality: wrote " + path);
  } else if (st.mode == "rollout") {
    auto out = ck.model.forward(x, /*capture=*/true);
    int token = st.target == "dist" ? 1 : 0;
    auto maps = attention_rollout(out.attention, token);
    int n_maps = std::min(maps.batch, 8);
    for (int i = 0; i < n_maps; ++i) {
      const std::string p = dir + "/rollout_" + st.target + "_" +
                            std::to_string(i) + ".pgm";
      write_pgm(p, maps.map(i), maps.grid);
      record(p);
    }
    log_line("rollout: wrote " + std::to_string(n_maps) + " maps to " + dir);
  } else if (st.mode == "rank") {
    auto out = ck.model.forward(x, /*capture=*/true);
    std::vector<int> tail_rows;
    for (size_t i = 0; i < labels.size(); ++i)
      if (corpus.groups[labels[i]] == 2) tail_rows.push_back(static_cast<int>(i));
    if (tail_rows.empty())
      throw DataError("rank: no tail-group images in the diagnostic batch");
    const double tol = 0.01;
    std::string s = "block,token_kind,k,tol\n";
    auto rank_of = [&](const Tensor& feats, const char* kind, int block) {
      auto all = make_feature_matrix(feats, labels);
      FeatureMatrix tail;
      tail.n = static_cast<int>(tail_rows.size());
      tail.d = all.d;
      for (int r : tail_rows)
        tail.values.insert(tail.values.end(), all.values.begin() + r * all.d,
                           all.values.begin() + (r + 1) * all.d);
      auto res = feature_rank(all, tail, tol);
      s += std::to_string(block) + "," + kind + "," + std::to_string(res.k) +
           "," + num(tol) + "\n";
    };
    for (size_t b = 0; b < out.block_cls.size(); ++b) {
      rank_of(out.block_cls[b], "cls", static_cast<int>(b));
      rank_of(out.block_dist[b], "dist", static_cast<int>(b));
    }
    const std::string path = dir + "/rank.csv";
    write_text_atomic(path, s);
    record(path);
    log_line("rank: wrote " + path);
  } else if (st.mode == "divergence") {
    auto out = ck.model.forward(x);
    auto div = cls_dist_divergence(out.features_cls, out.features_dist);
    std::string s = "mean_cosine_distance,counted,excluded\n";
    s += num(div.mean_distance) + "," + std::to_string(div.counted) + "," +
         std::to_string(div.excluded) + "\n";
    const std::string path = dir + "/divergence.csv";
    write_text_atomic(path, s);
    record(path);
    std::printf("divergence: mean cosine distance %.6f over %d rows (%d excluded)\n",
                div.mean_distance, div.counted, div.excluded);
  } else {
    throw ConfigError("diagnose: unknown mode '" + st.mode + "'");
  }
}

void cmd_ablate(const CliState& st) {
  auto base = build_config(st);
  auto dir = run_dir_of(base);
  RunManifest m(base);
  auto corpus = corpus_with_manifest(base, dir, m);

  // the two teachers (sharpness-aware wrapper off/on) are shared across arms
  std::string teacher_dirs[2];
  for (int sam = 0; sam < 2; ++sam) {
    auto cfg = base;
    cfg.sam_teacher = sam == 1;
    teacher_dirs[sam] = dir + "/ablate_teacher_sam" + std::to_string(sam);
    ensure_dir(teacher_dirs[sam]);
    auto t0 = std::chrono::steady_clock::now();
    log_line("ablate: training teacher (sam_teacher=" + std::to_string(sam) + ")");
    train_teacher(cfg, corpus, teacher_dirs[sam], &m, log_line);
    m.add_timing("ablate_teacher_sam" + std::to_string(sam), seconds_since(t0));
    m.write(dir + "/manifest.json");
  }

  std::string s =
      "ood_distill,drw,sam_teacher,acc_avg,acc_cls,acc_dist,head,mid,tail\n";
  for (int ood = 0; ood < 2; ++ood)
    for (int drw = 0; drw < 2; ++drw)
      for (int sam = 0; sam < 2; ++sam) {
        auto cfg = base;
        cfg.ood_distill = ood == 1;
        cfg.drw = drw == 1;
        cfg.sam_teacher = sam == 1;
        auto arm = dir + "/ablate_o" + std::to_string(ood) + "_d" +
                   std::to_string(drw) + "_s" + std::to_string(sam);
        ensure_dir(arm);
        auto teacher =
            load_teacher_checkpoint(teacher_dirs[sam] + "/teacher.ckpt");
        log_line("ablate: arm ood=" + std::to_string(ood) + " drw=" +
                 std::to_string(drw) + " sam=" + std::to_string(sam));
        auto t0 = std::chrono::steady_clock::now();
        auto model = train_student(cfg, corpus, &teacher, arm, &m, "", log_line);
        m.add_timing("ablate_o" + std::to_string(ood) + "_d" +
                         std::to_string(drw) + "_s" + std::to_string(sam),
                     seconds_since(t0));
        auto ev = evaluate_student(model, &teacher, corpus, cfg);
        s += std::to_string(ood) + "," + std::to_string(drw) + "," +
             std::to_string(sam);
        for (double v : {ev.avg.overall, ev.cls.overall, ev.dist.overall,
                         ev.avg.head, ev.avg.mid, ev.avg.tail})
          s += "," + num(v);
        s += "\n";
        const std::string out = dir + "/ablate.csv";
        write_text_atomic(out, s);  // refreshed after every arm
        m.add_file(out);
        m.write(dir + "/manifest.json");
        print_eval("ablate arm", ev);
      }
  log_line("ablate: wrote " + dir + "/ablate.csv");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "tdlt: long-tail recognition with a dual-token transformer student "
      "distilled from a flat-minima CNN teacher"};
  app.set_version_flag("--version", tdlt::kVersion);
  app.require_subcommand(1);

  CliState st;
  auto* ds = app.add_subcommand("dataset", "build the long-tailed split");
  std::string ds_action = "build";
  ds->add_option("action", ds_action, "dataset action")
      ->check(CLI::IsMember({"build"}));
  add_common_options(ds, st);

  auto* tt = app.add_subcommand("train-teacher", "train the CNN teacher");
  add_common_options(tt, st);

  auto* ts = app.add_subcommand("train-student",
                                "train the dual-token student");
  add_common_options(ts, st);
  ts->add_option("--teacher", st.teacher_path,
                 "teacher checkpoint (default {run dir}/teacher.ckpt)");
  ts->add_option("--resume", st.resume_path,
                 "resume from a student checkpoint with optimizer state");

  auto* crt = app.add_subcommand(
      "crt", "re-train both heads with class-balanced sampling");
  add_common_options(crt, st);
  crt->add_option("--ckpt", st.ckpt_path,
                  "student checkpoint (default {run dir}/student.ckpt)");

  auto* ev = app.add_subcommand("eval", "evaluate a student checkpoint");
  add_common_options(ev, st);
  ev->add_option("--ckpt", st.ckpt_path,
                 "student checkpoint (default {run dir}/student.ckpt)");
  ev->add_option("--teacher", st.teacher_path,
                 "teacher checkpoint for the agreement rate (optional)");

  auto* dg = app.add_subcommand("diagnose", "attention / feature diagnostics");
  add_common_options(dg, st);
  dg->add_option("--mode", st.mode, "diagnostic to run")
      ->required()
      ->check(CLI::IsMember({"locality", "rollout", "rank", "entropy",
                             "divergence"}));
  dg->add_option("--ckpt", st.ckpt_path,
                 "student checkpoint (default {run dir}/student.ckpt)");
  dg->add_option("--teacher", st.teacher_path,
                 "teacher checkpoint (entropy mode)");
  dg->add_option("--images", st.images,
                 "number of validation images to analyze");
  dg->add_option("--target", st.target, "rollout source token")
      ->check(CLI::IsMember({"cls", "dist"}));

  auto* ab = app.add_subcommand(
      "ablate", "run the 2x2x2 toggle grid and emit a comparison CSV");
  add_common_options(ab, st);

  ds->callback([&] { cmd_dataset(st); });
  tt->callback([&] { cmd_train_teacher(st); });
  ts->callback([&] { cmd_train_student(st); });
  crt->callback([&] { cmd_crt(st); });
  ev->callback([&] { cmd_eval(st); });
  dg->callback([&] { cmd_diagnose(st); });
  ab->callback([&] { cmd_ablate(st); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // --help and usage errors
  } catch (const tdlt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const tdlt::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const tdlt::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
