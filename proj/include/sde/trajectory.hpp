// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace sde {

// Residual-stream states of one generation at one layer.  Row 0 is the
// state at the last prompt position; row i (i >= 1) is the state after the
// i-th emitted token.  A generation of n tokens therefore has n+1 rows.
struct HiddenStateTrajectory {
  int layer = 0;
  Eigen::MatrixXf states;

  int steps() const { return static_cast<int>(states.rows()) - 1; }
};

// Per-token state differences at one layer: row i = states[i+1] - states[i]
// of the source trajectory, one row per emitted token.
struct DeltaTrajectory {
  int layer = 0;
  Eigen::MatrixXf deltas;
};

// Differences along a trajectory.  Throws std::invalid_argument when the
// trajectory has no emitted tokens (fewer than two rows).
DeltaTrajectory encode_deltas(const HiddenStateTrajectory& trajectory);

}  // namespace sde
