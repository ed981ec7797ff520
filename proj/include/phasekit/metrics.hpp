#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "phasekit/errors.hpp"

namespace phasekit {

using PhaseSequence = std::vector<int>;

// ---------------------------------------------------------------------------
// Confusion counts
// ---------------------------------------------------------------------------

/// N x N frame counts; entry (truth, predicted).
struct ConfusionMatrix {
  int n_phases = 0;
  std::vector<long long> counts;

  explicit ConfusionMatrix(int n = 0) : n_phases(n), counts(static_cast<std::size_t>(n) * n, 0) {}

  long long& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * n_phases + pred];
  }
  long long at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * n_phases + pred];
  }
  long long total() const {
    long long sum = 0;
    for (long long c : counts) sum += c;
    return sum;
  }
};

inline void check_pair(const PhaseSequence& pred, const PhaseSequence& truth) {
  if (pred.size() != truth.size())
    throw DataError("sequence lengths differ: " + std::to_string(pred.size()) + " vs " +
                    std::to_string(truth.size()));
  if (pred.empty()) throw DataError("empty phase sequence");
}

inline ConfusionMatrix confusion(const std::vector<PhaseSequence>& preds,
                                 const std::vector<PhaseSequence>& truths, int n_phases) {
  if (preds.size() != truths.size())
    throw DataError("prediction/truth video counts differ");
  ConfusionMatrix cm(n_phases);
  for (std::size_t v = 0; v < preds.size(); ++v) {
    check_pair(preds[v], truths[v]);
    for (std::size_t t = 0; t < preds[v].size(); ++t) {
      const int p = preds[v][t], y = truths[v][t];
      if (p < 0 || p >= n_phases || y < 0 || y >= n_phases)
        throw DataError("phase label outside [0, " + std::to_string(n_phases) + ")");
      ++cm.at(y, p);
    }
  }
  return cm;
}

// ---------------------------------------------------------------------------
// The four phase-recognition metrics
// ---------------------------------------------------------------------------

/// Fraction of frames recognized correctly over one whole video.
inline double video_accuracy(const PhaseSequence& pred, const PhaseSequence& truth) {
  check_pair(pred, truth);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    if (pred[t] == truth[t]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

/// One per-phase ratio; undefined when its denominator is zero (the phase is
/// then excluded from averages and flagged here).
struct PhaseValue {
  double value = 0.0;
  bool defined = false;
};

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 when fewer than 2 values
  int count = 0;
};

inline SummaryStat summarize(const std::vector<double>& values) {
  SummaryStat s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return s;
}

/// Accuracy per video plus per-phase precision/recall/Jaccard. The primary
/// per-phase numbers pool frame counts across the whole evaluation set and
/// are summarized across phases; a per-video-averaged variant (macro
/// per video, then summarized across videos) is reported alongside.
struct MetricReport {
  std::vector<double> per_video_accuracy;
  SummaryStat accuracy;  // across videos

  std::vector<PhaseValue> precision, recall, jaccard;  // pooled, per phase
  SummaryStat precision_phases, recall_phases, jaccard_phases;  // across phases

  std::vector<double> per_video_precision, per_video_recall, per_video_jaccard;
  SummaryStat precision_videos, recall_videos, jaccard_videos;  // across videos

  ConfusionMatrix pooled;
};

namespace detail {

struct PrfCounts {
  long long tp = 0, fp = 0, fn = 0;
};

inline std::vector<PrfCounts> per_phase_counts(const ConfusionMatrix& cm) {
  std::vector<PrfCounts> out(static_cast<std::size_t>(cm.n_phases));
  for (int c = 0; c < cm.n_phases; ++c) {
    for (int other = 0; other < cm.n_phases; ++other) {
      if (other == c) continue;
      out[c].fp += cm.at(other, c);
      out[c].fn += cm.at(c, other);
    }
    out[c].tp = cm.at(c, c);
  }
  return out;
}

inline PhaseValue ratio(long long num, long long den) {
  PhaseValue v;
  if (den > 0) {
    v.value = static_cast<double>(num) / static_cast<double>(den);
    v.defined = true;
  }
  return v;
}

inline SummaryStat summarize_defined(const std::vector<PhaseValue>& values) {
  std::vector<double> defined;
  for (const PhaseValue& v : values)
    if (v.defined) defined.push_back(v.value);
  return summarize(defined);
}

}  // namespace detail

inline MetricReport phase_metrics(const std::vector<PhaseSequence>& preds,
                                  const std::vector<PhaseSequence>& truths, int n_phases) {
  MetricReport report;
  report.pooled = confusion(preds, truths, n_phases);

  for (std::size_t v = 0; v < preds.size(); ++v)
    report.per_video_accuracy.push_back(video_accuracy(preds[v], truths[v]));
  report.accuracy = summarize(report.per_video_accuracy);

  const auto pooled_counts = detail::per_phase_counts(report.pooled);
  for (int c = 0; c < n_phases; ++c) {
    const auto& k = pooled_counts[static_cast<std::size_t>(c)];
    report.precision.push_back(detail::ratio(k.tp, k.tp + k.fp));
    report.recall.push_back(detail::ratio(k.tp, k.tp + k.fn));
    report.jaccard.push_back(detail::ratio(k.tp, k.tp + k.fp + k.fn));
  }
  report.precision_phases = detail::summarize_defined(report.precision);
  report.recall_phases = detail::summarize_defined(report.recall);
  report.jaccard_phases = detail::summarize_defined(report.jaccard);

  std::vector<double> vp, vr, vj;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    const ConfusionMatrix cm = confusion({preds[v]}, {truths[v]}, n_phases);
    const auto counts = detail::per_phase_counts(cm);
    std::vector<PhaseValue> p, r, j;
    for (int c = 0; c < n_phases; ++c) {
      const auto& k = counts[static_cast<std::size_t>(c)];
      p.push_back(detail::ratio(k.tp, k.tp + k.fp));
      r.push_back(detail::ratio(k.tp, k.tp + k.fn));
      j.push_back(detail::ratio(k.tp, k.tp + k.fp + k.fn));
    }
    const SummaryStat sp = detail::summarize_defined(p);
    const SummaryStat sr = detail::summarize_defined(r);
    const SummaryStat sj = detail::summarize_defined(j);
    if (sp.count > 0) vp.push_back(sp.mean);
    if (sr.count > 0) vr.push_back(sr.mean);
    if (sj.count > 0) vj.push_back(sj.mean);
  }
  report.per_video_precision = vp;
  report.per_video_recall = vr;
  report.per_video_jaccard = vj;
  report.precision_videos = summarize(vp);
  report.recall_videos = summarize(vr);
  report.jaccard_videos = summarize(vj);
  return report;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test (two-sided)
// ---------------------------------------------------------------------------

/// Two-sided p-value for paired samples: zero differences discarded, average
/// ranks for tied magnitudes, exact distribution up to 25 effective pairs
/// (dynamic programming over doubled ranks), normal approximation with
/// continuity and tie correction above.
inline double wilcoxon_signed_rank(const std::vector<double>& a,
                                   const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DataError("wilcoxon: sample sizes differ: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  if (a.size() < 5)
    throw DataError("wilcoxon: need at least 5 pairs, have " + std::to_string(a.size()));

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty())
    throw DegenerateSampleError("wilcoxon: all paired differences are zero");

  const std::size_t n = diffs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });

  std::vector<double> rank(n, 0.0);
  std::vector<std::size_t> tie_sizes;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    tie_sizes.push_back(j - i);
    i = j;
  }

  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (diffs[i] > 0.0) w_plus += rank[i];

  if (n <= 25) {
    // Exact: distribution of the doubled statistic over all 2^n sign patterns.
    std::vector<long long> doubled(n);
    long long max_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = std::llround(2.0 * rank[i]);
      max_sum += doubled[i];
    }
    std::vector<double> dp(static_cast<std::size_t>(max_sum) + 1, 0.0);
    dp[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i)
      for (long long s = max_sum; s >= doubled[i]; --s)
        dp[static_cast<std::size_t>(s)] += dp[static_cast<std::size_t>(s - doubled[i])];
    const long long w2 = std::llround(2.0 * w_plus);
    const double total = std::pow(2.0, static_cast<double>(n));
    double below = 0.0, above = 0.0;
    for (long long s = 0; s <= max_sum; ++s) {
      if (s <= w2) below += dp[static_cast<std::size_t>(s)];
      if (s >= w2) above += dp[static_cast<std::size_t>(s)];
    }
    return std::min(1.0, 2.0 * std::min(below / total, above / total));
  }

  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  double variance = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
  for (std::size_t t : tie_sizes) {
    const double dt = static_cast<double>(t);
    variance -= (dt * dt * dt - dt) / 48.0;
  }
  const double sd = std::sqrt(variance);
  double z = w_plus - mean;
  // Continuity correction toward the mean.
  if (z > 0.5)
    z -= 0.5;
  else if (z < -0.5)
    z += 0.5;
  else
    z = 0.0;
  z /= sd;
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

// ---------------------------------------------------------------------------
// Ribbon export
// ---------------------------------------------------------------------------

/// Deterministic palette: a fixed table for the first 12 phases, then evenly
/// rotated hues.
inline std::array<std::uint8_t, 3> ribbon_color(int phase) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 12> table = {{
      {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
      {245, 130, 48},  {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
      {210, 245, 60},  {250, 190, 212}, {0, 128, 128},  {154, 99, 36},
  }};
  if (phase >= 0 && phase < static_cast<int>(table.size())) return table[static_cast<std::size_t>(phase)];
  // Hue rotation for the tail; phase is deterministic input, nothing random.
  const double hue = std::fmod(static_cast<double>(phase) * 137.50776405003785, 360.0);
  const double x = 1.0 - std::abs(std::fmod(hue / 60.0, 2.0) - 1.0);
  double r = 0, g = 0, bl = 0;
  if (hue < 60) { r = 1; g = x; }
  else if (hue < 120) { r = x; g = 1; }
  else if (hue < 180) { g = 1; bl = x; }
  else if (hue < 240) { g = x; bl = 1; }
  else if (hue < 300) { r = x; bl = 1; }
  else { r = 1; bl = x; }
  return {static_cast<std::uint8_t>(64 + 191 * r), static_cast<std::uint8_t>(64 + 191 * g),
          static_cast<std::uint8_t>(64 + 191 * bl)};
}

/// Writes <stem>.txt (per-frame truth/pred pairs) and <stem>.ppm (binary P6,
/// one pixel column per frame, truth row above prediction row).
inline void export_ribbon(const PhaseSequence& pred, const PhaseSequence& truth,
                          const std::string& stem) {
  check_pair(pred, truth);
  const std::string text_path = stem + ".txt";
  std::ofstream text(text_path);
  if (!text) throw IoError("cannot write " + text_path);
  text << "# ribbon v1\n# columns: truth pred\n";
  for (std::size_t t = 0; t < pred.size(); ++t) text << truth[t] << ' ' << pred[t] << '\n';
  if (!text.flush()) throw IoError("failed writing " + text_path);

  const std::string image_path = stem + ".ppm";
  std::ofstream image(image_path, std::ios::binary);
  if (!image) throw IoError("cannot write " + image_path);
  image << "P6\n" << pred.size() << " 2\n255\n";
  for (const PhaseSequence* rowseq : {&truth, &pred}) {
    for (int phase : *rowseq) {
      const auto rgb = ribbon_color(phase);
      image.write(reinterpret_cast<const char*>(rgb.data()), 3);
    }
  }
  if (!image.flush()) throw IoError("failed writing " + image_path);
}

/// Round-trip parse of the ribbon text file: (truth, pred).
inline std::pair<PhaseSequence, PhaseSequence> parse_ribbon_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  PhaseSequence truth, pred;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    int y = 0, p = 0;
    if (std::sscanf(line.c_str(), "%d %d", &y, &p) != 2)
      throw IoError("malformed ribbon line in " + path + ": " + line);
    truth.push_back(y);
    pred.push_back(p);
  }
  return {truth, pred};
}

}  // namespace phasekit
