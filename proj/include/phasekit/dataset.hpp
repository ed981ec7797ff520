#pragma once

#include <string>
#include <vector>

#include "phasekit/matrix.hpp"

namespace phasekit {

/// One video's worth of training/evaluation material: spatial embeddings
/// (T x spatial_dim), optional temporal embeddings (T x N), and per-frame
/// phase labels.
struct VideoData {
  std::string id;
  Matrix spatial;
  Matrix temporal;
  std::vector<int> labels;

  std::size_t frames() const { return spatial.rows(); }
};

inline void validate_labels(const std::vector<int>& labels, int n_phases,
                            const std::string& id) {
  for (int y : labels)
    if (y < 0 || y >= n_phases)
      throw DataError("video " + id + ": label " + std::to_string(y) +
                      " outside [0, " + std::to_string(n_phases) + ")");
}

}  // namespace phasekit
