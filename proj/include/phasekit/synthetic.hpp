#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phasekit/io.hpp"
#include "phasekit/matrix.hpp"

namespace phasekit {

/// Synthetic workflow dataset: per-phase Gaussian clusters in spatial space,
/// ordered phase progressions with random dwell times. Two optional ambiguity
/// knobs exercise the value of temporal context: transition-zone blur (frames
/// near a phase boundary draw from a random mixture of the two adjacent
/// cluster centers) and an aliased phase pair (two phases share one center,
/// i.e. identical appearance at different workflow positions).
struct SynthSpec {
  int n_phases = 7;
  int videos = 6;
  int frames = 200;
  double sigma = 0.8;
  int spatial_dim = 2048;
  std::uint64_t seed = 1;
  int train_videos = -1;  // -1: first half
  int ambiguity_width = 0;
  int alias_a = -1;
  int alias_b = -1;
  double center_scale = 1.0;

  void validate() const {
    if (n_phases < 2) throw ConfigError("synth: n_phases must be >= 2");
    if (videos < 1) throw ConfigError("synth: videos must be >= 1");
    if (frames < 2 * n_phases)
      throw ConfigError("synth: frames must be at least 2 * n_phases");
    if (sigma < 0.0) throw ConfigError("synth: sigma must be >= 0");
    if (spatial_dim < 1) throw ConfigError("synth: spatial_dim must be >= 1");
    if (ambiguity_width < 0) throw ConfigError("synth: ambiguity_width must be >= 0");
    const bool alias_set = alias_a >= 0 || alias_b >= 0;
    if (alias_set &&
        (alias_a < 0 || alias_b < 0 || alias_a >= n_phases || alias_b >= n_phases ||
         alias_a == alias_b))
      throw ConfigError("synth: alias phases must be two distinct phases in range");
    if (train_videos >= 0 && train_videos > videos)
      throw ConfigError("synth: train_videos exceeds video count");
  }

  int effective_train_videos() const { return train_videos < 0 ? videos / 2 : train_videos; }
};

/// Monotone non-decreasing phase sequence visiting every phase, dwell times
/// proportional to random weights with a minimum dwell.
inline std::vector<int> synth_phase_sequence(const SynthSpec& spec, Rng& rng) {
  const int n = spec.n_phases;
  const int min_dwell = std::max(2, spec.frames / (4 * n));
  std::vector<double> weights(static_cast<std::size_t>(n));
  double weight_sum = 0.0;
  for (double& w : weights) {
    w = 0.5 + rng.uniform();
    weight_sum += w;
  }
  std::vector<int> dwell(static_cast<std::size_t>(n), min_dwell);
  int remaining = spec.frames - n * min_dwell;
  std::vector<std::pair<double, int>> fractional;
  for (int p = 0; p < n; ++p) {
    const double share = remaining * weights[static_cast<std::size_t>(p)] / weight_sum;
    const int whole = static_cast<int>(share);
    dwell[static_cast<std::size_t>(p)] += whole;
    fractional.emplace_back(share - whole, p);
  }
  int assigned = 0;
  for (int d : dwell) assigned += d;
  std::sort(fractional.begin(), fractional.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; assigned < spec.frames; ++i, ++assigned)
    ++dwell[static_cast<std::size_t>(fractional[static_cast<std::size_t>(i) % fractional.size()].second)];

  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(spec.frames));
  for (int p = 0; p < n; ++p)
    for (int d = 0; d < dwell[static_cast<std::size_t>(p)]; ++d) labels.push_back(p);
  return labels;
}

struct SynthResult {
  std::vector<std::string> ids;
  std::string all_manifest;
  std::string train_manifest;
  std::string test_manifest;
};

inline SynthResult generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Rng rng(spec.seed);

  Matrix centers(static_cast<std::size_t>(spec.n_phases),
                 static_cast<std::size_t>(spec.spatial_dim));
  for (std::size_t i = 0; i < centers.size(); ++i)
    centers.data()[i] = spec.center_scale * rng.normal();
  if (spec.alias_a >= 0)
    for (int k = 0; k < spec.spatial_dim; ++k)
      centers(static_cast<std::size_t>(spec.alias_b), static_cast<std::size_t>(k)) =
          centers(static_cast<std::size_t>(spec.alias_a), static_cast<std::size_t>(k));

  SynthResult result;
  std::vector<ManifestEntry> entries;
  for (int v = 0; v < spec.videos; ++v) {
    char id[32];
    std::snprintf(id, sizeof id, "vid%03d", v);
    const std::vector<int> labels = synth_phase_sequence(spec, rng);

    // Transition zones: frame indices within ambiguity_width of a boundary,
    // tagged with the (before, after) phase pair of the nearest boundary.
    std::vector<int> zone_before(labels.size(), -1), zone_after(labels.size(), -1);
    if (spec.ambiguity_width > 0) {
      for (std::size_t t = 1; t < labels.size(); ++t) {
        if (labels[t] == labels[t - 1]) continue;
        const long lo = static_cast<long>(t) - spec.ambiguity_width;
        const long hi = static_cast<long>(t) + spec.ambiguity_width - 1;
        for (long u = std::max(0L, lo);
             u <= std::min<long>(static_cast<long>(labels.size()) - 1, hi); ++u) {
          zone_before[static_cast<std::size_t>(u)] = labels[t - 1];
          zone_after[static_cast<std::size_t>(u)] = labels[t];
        }
      }
    }

    Matrix spatial(labels.size(), static_cast<std::size_t>(spec.spatial_dim));
    for (std::size_t t = 0; t < labels.size(); ++t) {
      const int phase = labels[t];
      double alpha = -1.0;
      if (zone_before[t] >= 0) {
        alpha = 0.5 + 0.35 * rng.normal();
        alpha = std::min(1.0, std::max(0.0, alpha));
      }
      for (int k = 0; k < spec.spatial_dim; ++k) {
        double base;
        if (alpha >= 0.0) {
          base = alpha * centers(static_cast<std::size_t>(zone_before[t]),
                                 static_cast<std::size_t>(k)) +
                 (1.0 - alpha) * centers(static_cast<std::size_t>(zone_after[t]),
                                         static_cast<std::size_t>(k));
        } else {
          base = centers(static_cast<std::size_t>(phase), static_cast<std::size_t>(k));
        }
        spatial(t, static_cast<std::size_t>(k)) = base + spec.sigma * rng.normal();
      }
    }

    const std::string spatial_name = std::string(id) + ".spatial.emb";
    const std::string labels_name = std::string(id) + ".labels.txt";
    write_embeddings((fs::path(out_dir) / spatial_name).string(), spatial);
    write_labels((fs::path(out_dir) / labels_name).string(), labels);
    entries.push_back({id, spatial_name, "", labels_name, spec.n_phases});
    result.ids.push_back(id);
  }

  const int train = spec.effective_train_videos();
  const std::vector<ManifestEntry> train_entries(entries.begin(), entries.begin() + train);
  const std::vector<ManifestEntry> test_entries(entries.begin() + train, entries.end());
  result.all_manifest = (fs::path(out_dir) / "manifest_all.txt").string();
  write_manifest(result.all_manifest, entries);
  if (!train_entries.empty()) {
    result.train_manifest = (fs::path(out_dir) / "manifest_train.txt").string();
    write_manifest(result.train_manifest, train_entries);
  }
  if (!test_entries.empty()) {
    result.test_manifest = (fs::path(out_dir) / "manifest_test.txt").string();
    write_manifest(result.test_manifest, test_entries);
  }
  return result;
}

}  // namespace phasekit
