// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/eval.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vqlm/errors.h"
#include "vqlm/log.h"

namespace fs = std::filesystem;

namespace vqlm::eval {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_corr_inputs(const std::vector<double>& pred, const std::vector<double>& gt,
                       const char* op) {
  if (pred.size() != gt.size()) throw InputError(std::string(op) + ": length mismatch");
  if (pred.size() < 2) throw InputError(std::string(op) + ": need at least 2 items");
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(gt)) throw InputError(std::string(op) + ": ground truth is constant");
  if (constant(pred)) throw InputError(std::string(op) + ": predictions are constant");
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

double srcc(const std::vector<double>& pred, const std::vector<double>& gt) {
  check_corr_inputs(pred, gt, "srcc");
  return pearson(average_ranks(pred), average_ranks(gt));
}

double plcc(const std::vector<double>& pred, const std::vector<double>& gt) {
  check_corr_inputs(pred, gt, "plcc");
  return pearson(pred, gt);
}

std::vector<double> logistic_fit(const std::vector<double>& pred, const std::vector<double>& gt) {
  check_corr_inputs(pred, gt, "logistic_fit");
  // y = a + b / (1 + exp(-(x - c) / |d|)), simple full-batch gradient descent.
  const size_t n = pred.size();
  double lo = *std::min_element(gt.begin(), gt.end());
  double hi = *std::max_element(gt.begin(), gt.end());
  double a = lo, b = hi - lo;
  double c = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(n);
  double xs = 0.0;
  for (double x : pred) xs += (x - c) * (x - c);
  double d = std::max(1e-3, std::sqrt(xs / static_cast<double>(n)));
  const double lr = 0.05;
  for (int it = 0; it < 2000; ++it) {
    double ga = 0, gb = 0, gc = 0, gd = 0;
    for (size_t i = 0; i < n; ++i) {
      const double t = (pred[i] - c) / std::abs(d);
      const double s = 1.0 / (1.0 + std::exp(-t));
      const double y = a + b * s;
      const double e = 2.0 * (y - gt[i]) / static_cast<double>(n);
      const double ds = s * (1.0 - s);
      ga += e;
      gb += e * s;
      gc += e * b * ds * (-1.0 / std::abs(d));
      gd += e * b * ds * (-t / std::abs(d)) * (d > 0 ? 1.0 : -1.0);
    }
    a -= lr * ga;
    b -= lr * gb;
    c -= lr * gc;
    d -= lr * gd;
    if (std::abs(d) < 1e-6) d = d < 0 ? -1e-6 : 1e-6;
  }
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i] = a + b / (1.0 + std::exp(-(pred[i] - c) / std::abs(d)));
  }
  return out;
}

double flip_rate(const std::vector<std::pair<double, double>>& scored_pairs,
                 bool ties_as_flips) {
  if (scored_pairs.empty()) throw InputError("flip_rate: no pairs");
  int flips = 0;
  int counted = 0;
  for (const auto& [low_sev_score, high_sev_score] : scored_pairs) {
    if (low_sev_score == high_sev_score) {
      if (ties_as_flips) {
        ++flips;
        ++counted;
      }
      // ties excluded entirely when the convention is off
      continue;
    }
    ++counted;
    if (low_sev_score < high_sev_score) ++flips;
  }
  if (counted == 0) throw InputError("flip_rate: all pairs tied and ties excluded");
  return static_cast<double>(flips) / static_cast<double>(counted);
}

DiffPairs build_diff_pairs(const datagen::DatasetManifest& manifest,
                           const std::vector<size_t>& record_indices,
                           const std::vector<int>& diffs) {
  // severity -> record index, per (source, kind) ladder; originals join
  // every ladder of their source at severity 0.
  std::map<std::pair<std::string, std::string>, std::map<int, size_t>> ladders;
  std::vector<size_t> originals;
  for (size_t idx : record_indices) {
    const auto& r = manifest.records.at(idx);
    if (r.is_original) {
      originals.push_back(idx);
    } else {
      ladders[{r.source_id, r.kind}][r.severity] = idx;
    }
  }
  for (size_t idx : originals) {
    const auto& r = manifest.records.at(idx);
    for (auto& [key, ladder] : ladders) {
      if (key.first == r.source_id) ladder[0] = idx;
    }
  }
  DiffPairs out;
  for (int d : diffs) {
    auto& bucket = out[d];
    for (const auto& [key, ladder] : ladders) {
      for (const auto& [sev, idx] : ladder) {
        const auto hi = ladder.find(sev + d);
        if (hi != ladder.end()) bucket.emplace_back(idx, hi->second);
      }
    }
    if (bucket.empty()) {
      VQLM_WARN("no severity pairs with diff=%d", d);
    }
  }
  return out;
}

namespace {

// Minimal standalone SVG emission; keeps plotting dependency-free.
struct SvgCanvas {
  std::ostringstream body;
  double width, height, margin;

  SvgCanvas(double w, double h, double m) : width(w), height(h), margin(m) {}

  double sx(double t) const { return margin + t * (width - 2 * margin); }
  double sy(double t) const { return height - margin - t * (height - 2 * margin); }

  void frame(const std::string& title) {
    body << "<rect x='" << margin << "' y='" << margin << "' width='" << width - 2 * margin
         << "' height='" << height - 2 * margin
         << "' fill='none' stroke='#444' stroke-width='1'/>\n";
    body << "<text x='" << width / 2 << "' y='" << margin - 6
         << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << title
         << "</text>\n";
  }

  void save(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write plot: " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << body.str() << "</svg>\n";
  }
};

void normalize_range(double& lo, double& hi) {
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
}

void write_scatter_svg(const std::vector<double>& pred, const std::vector<double>& gt,
                       const std::string& path) {
  SvgCanvas svg(480, 360, 40);
  svg.frame("predicted vs ground truth");
  double px0 = *std::min_element(gt.begin(), gt.end());
  double px1 = *std::max_element(gt.begin(), gt.end());
  double py0 = *std::min_element(pred.begin(), pred.end());
  double py1 = *std::max_element(pred.begin(), pred.end());
  normalize_range(px0, px1);
  normalize_range(py0, py1);
  for (size_t i = 0; i < pred.size(); ++i) {
    svg.body << "<circle cx='" << svg.sx((gt[i] - px0) / (px1 - px0)) << "' cy='"
             << svg.sy((pred[i] - py0) / (py1 - py0)) << "' r='3' fill='#1f77b4'/>\n";
  }
  svg.save(path);
}

void write_ladder_svg(const datagen::DatasetManifest& manifest,
                      const std::map<size_t, double>& scores, const std::string& path) {
  // score vs severity, one polyline per (source, kind) ladder
  std::map<std::pair<std::string, std::string>, std::map<int, double>> ladders;
  int max_sev = 1;
  double lo = 1e300, hi = -1e300;
  for (const auto& [idx, score] : scores) {
    const auto& r = manifest.records.at(idx);
    if (!r.is_original) ladders[{r.source_id, r.kind}][r.severity] = score;
    max_sev = std::max(max_sev, r.severity);
    lo = std::min(lo, score);
    hi = std::max(hi, score);
  }
  // originals anchor every ladder of their source at severity 0
  for (const auto& [idx, score] : scores) {
    const auto& r = manifest.records.at(idx);
    if (!r.is_original) continue;
    for (auto& [key, ladder] : ladders) {
      if (key.first == r.source_id) ladder[0] = score;
    }
  }
  normalize_range(lo, hi);
  SvgCanvas svg(560, 380, 40);
  svg.frame("score vs severity");
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  size_t ci = 0;
  for (const auto& [key, ladder] : ladders) {
    if (ladder.size() < 2) continue;
    svg.body << "<polyline fill='none' stroke='" << colors[ci++ % 6] << "' points='";
    for (const auto& [sev, score] : ladder) {
      svg.body << svg.sx(static_cast<double>(sev) / max_sev) << ","
               << svg.sy((score - lo) / (hi - lo)) << " ";
    }
    svg.body << "'/>\n";
  }
  svg.save(path);
}

}  // namespace

EvalReport run_benchmark(const Model& model, const datagen::DatasetManifest& manifest,
                         const BenchmarkOptions& options) {
  options.eval.validate();
  EvalReport report;
  report.dataset_id = options.dataset_id;

  std::vector<size_t> indices;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    if (options.split == "all" || manifest.records[i].split == options.split) {
      indices.push_back(i);
    }
  }
  if (indices.empty()) throw InputError("run_benchmark: no records in split " + options.split);

  // Raw (uncalibrated) scores; the clamp is presentation only.
  std::map<size_t, double> scores;
  std::vector<double> pred, gt;
  for (size_t idx : indices) {
    media::VideoClip clip;
    try {
      clip = manifest.load_clip(idx);
    } catch (const IoError& e) {
      VQLM_WARN("skipping %s: %s", manifest.records[idx].clip_path.c_str(), e.what());
      ++report.n_skipped;
      continue;
    }
    const double s = model.score_clip(clip).raw;
    scores[idx] = s;
    pred.push_back(s);
    gt.push_back(manifest.records[idx].mos);
  }
  report.n_items = static_cast<int>(pred.size());
  if (report.n_items == 0) throw InputError("run_benchmark: every item was skipped");

  try {
    report.srcc = srcc(pred, gt);
  } catch (const InputError& e) {
    report.srcc_error = e.what();
  }
  try {
    std::vector<double> p = options.eval.logistic_fit ? logistic_fit(pred, gt) : pred;
    report.plcc = plcc(p, gt);
  } catch (const InputError& e) {
    report.plcc_error = e.what();
  }

  std::vector<size_t> scored_indices;
  for (const auto& [idx, s] : scores) scored_indices.push_back(idx);
  const DiffPairs pairs = build_diff_pairs(manifest, scored_indices, options.eval.diffs);
  for (const auto& [d, bucket] : pairs) {
    report.pairs_by_diff[d] = static_cast<int>(bucket.size());
    if (bucket.empty()) continue;
    std::vector<std::pair<double, double>> scored;
    scored.reserve(bucket.size());
    for (const auto& [lo, hi] : bucket) {
      scored.emplace_back(scores.at(lo), scores.at(hi));
    }
    report.fr_by_diff[d] = flip_rate(scored, options.eval.ties_as_flips);
    report.n_pairs += static_cast<int>(bucket.size());
  }

  if (!options.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    write_report(report, (fs::path(options.out_dir) / "report.txt").string());
    if (options.eval.plots) {
      write_scatter_svg(pred, gt, (fs::path(options.out_dir) / "pred_vs_gt.svg").string());
      write_ladder_svg(manifest, scores,
                       (fs::path(options.out_dir) / "severity_ladders.svg").string());
    }
  }
  return report;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "dataset: " << r.dataset_id << "\n";
  os << "n_items: " << r.n_items << "\n";
  os << "n_pairs: " << r.n_pairs << "\n";
  os << "n_skipped: " << r.n_skipped << "\n";
  if (r.srcc_error.empty()) {
    os << "srcc: " << r.srcc << "\n";
  } else {
    os << "srcc: error (" << r.srcc_error << ")\n";
  }
  if (r.plcc_error.empty()) {
    os << "plcc: " << r.plcc << "\n";
  } else {
    os << "plcc: error (" << r.plcc_error << ")\n";
  }
  for (const auto& [d, fr] : r.fr_by_diff) {
    os << "fr[diff=" << d << "]: " << fr << " (" << r.pairs_by_diff.at(d) << " pairs)\n";
  }
  for (const auto& [d, n] : r.pairs_by_diff) {
    if (!r.fr_by_diff.count(d)) os << "fr[diff=" << d << "]: empty bucket\n";
  }
  nlohmann::json j{{"dataset", r.dataset_id}, {"n_items", r.n_items},
                   {"n_pairs", r.n_pairs},    {"n_skipped", r.n_skipped},
                   {"srcc", r.srcc_error.empty() ? nlohmann::json(r.srcc) : nlohmann::json()},
                   {"plcc", r.plcc_error.empty() ? nlohmann::json(r.plcc) : nlohmann::json()}};
  nlohmann::json frj = nlohmann::json::object();
  for (const auto& [d, fr] : r.fr_by_diff) frj[std::to_string(d)] = fr;
  j["fr_by_diff"] = frj;
  os << j.dump() << "\n";
  return os.str();
}

void write_report(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write report: " + path);
  f << format_report(report);
}

}  // namespace vqlm::eval
