#pragma once

#include "softctrl/core.hpp"

namespace softctrl {

// Closed circle-plus-square course: a full counter-clockwise circle of
// diameter 0.45 * workspace_length centered on the origin, entered at
// (0.225 * L, 0), followed by the counter-clockwise perimeter of the
// axis-aligned square with corners at (+-0.225 * L, +-0.225 * L), entered
// and left at the midpoint of its right edge. Waypoints are spaced at
// equal arc length along the combined path. step_count must be >= 100.
TrajectorySpec make_trajectory_a(int step_count, double workspace_length,
                                 double control_period = 0.3);

// Closed triangle-plus-curve course: straight runs T0 -> T1 -> T2 with a
// 60 degree corner at T1, closed by a half-sine arc from T2 back to T0
// that bows away from the interior, meeting both straight runs at obtuse
// angles. All points stay inside the central 60% of the workspace.
// Equal arc-length waypoint spacing. step_count must be >= 100.
TrajectorySpec make_trajectory_b(int step_count, double workspace_length,
                                 double control_period = 0.3);

// Total arc length of the closed waypoint polygon (includes the segment
// from the last waypoint back to the first).
double closed_path_length(const std::vector<Position2>& waypoints);

}  // namespace softctrl
