// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Per-epoch training metrics with a fixed CSV schema. Formatting uses
// shortest-round-trip float printing so reruns under the same seed produce
// byte-identical files.

#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tdlt/common.hpp"

namespace tdlt {

struct MetricsRow {
  int epoch = 0;
  double lr = 0;
  double loss_cls = 0;
  double loss_dist = 0;
  double acc_avg = 0;
  double acc_cls = 0;
  double acc_dist = 0;
  double head = 0;
  double mid = 0;
  double tail = 0;
  double cosine_cls_dist = 0;
  double teacher_agree = 0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,lr,loss_cls,loss_dist,acc_avg,acc_cls,acc_dist,head,mid,tail,"
    "cosine_cls_dist,teacher_agree";

namespace detail {

inline std::string csv_num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline std::string metrics_row_to_csv(const MetricsRow& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.lr, r.loss_cls, r.loss_dist, r.acc_avg, r.acc_cls,
                   r.acc_dist, r.head, r.mid, r.tail, r.cosine_cls_dist,
                   r.teacher_agree})
    s += "," + detail::csv_num(v);
  return s;
}

// Append-only CSV writer. `resume_epoch >= 0` keeps rows with epoch <= that
// value from an existing file and drops the rest, so a resumed run rewrites
// the same bytes an uninterrupted run would have produced.
class MetricsWriter {
 public:
  MetricsWriter(std::string path, int resume_epoch = -1) : path_(std::move(path)) {
    std::vector<std::string> keep;
    if (resume_epoch >= 0) {
      std::ifstream in(path_);
      std::string line;
      bool first = true;
      while (in && std::getline(in, line)) {
        if (first) {
          first = false;
          if (line != kMetricsHeader)
            throw DataError("metrics: unexpected header in '" + path_ + "'");
          continue;
        }
        if (line.empty()) continue;
        int e = 0;
        auto r = std::from_chars(line.data(), line.data() + line.size(), e);
        if (r.ec != std::errc{})
          throw DataError("metrics: malformed row in '" + path_ + "'");
        if (e <= resume_epoch) keep.push_back(line);
      }
    }
    out_.open(path_, std::ios::trunc);
    if (!out_) throw DataError("metrics: cannot write '" + path_ + "'");
    out_ << kMetricsHeader << "\n";
    for (const auto& l : keep) out_ << l << "\n";
    out_.flush();
  }

  void append(const MetricsRow& r) {
    for (double v : {r.acc_avg, r.acc_cls, r.acc_dist, r.head, r.mid, r.tail})
      if (v < 0.0 || v > 1.0)
        throw NumericError("metrics: accuracy outside [0,1]");
    out_ << metrics_row_to_csv(r) << "\n";
    out_.flush();
    if (!out_) throw DataError("metrics: write failed for '" + path_ + "'");
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

inline std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("metrics: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw DataError("metrics: unexpected header in '" + path + "'");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 12)
      throw DataError("metrics: expected 12 columns in '" + path + "'");
    MetricsRow r;
    r.epoch = std::stoi(cells[0]);
    double* fields[] = {&r.lr,      &r.loss_cls, &r.loss_dist, &r.acc_avg,
                        &r.acc_cls, &r.acc_dist, &r.head,      &r.mid,
                        &r.tail,    &r.cosine_cls_dist, &r.teacher_agree};
    for (int i = 0; i < 11; ++i) *fields[i] = std::stod(cells[i + 1]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace tdlt
