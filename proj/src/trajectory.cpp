// SPDX-License-Identifier: Apache-2.0
#include "sde/trajectory.hpp"

#include <stdexcept>

namespace sde {

DeltaTrajectory encode_deltas(const HiddenStateTrajectory& trajectory) {
  const Eigen::Index rows = trajectory.states.rows();
  if (rows < 2) {
    throw std::invalid_argument("encode_deltas: trajectory has no emitted tokens");
  }
  DeltaTrajectory out;
  out.layer = trajectory.layer;
  out.deltas = trajectory.states.bottomRows(rows - 1) - trajectory.states.topRows(rows - 1);
  return out;
}

}  // namespace sde
