#pragma once

#include <string>
#include <vector>

#include "softctrl/core.hpp"

namespace softctrl {

// The points attribute of the min-max error band polygon: top edge is the
// per-step maximum across trials left to right, bottom edge the minimum
// right to left, in the same pixel mapping emit_plot uses. Exposed so the
// band can be recomputed from the trial CSVs and compared byte for byte.
std::string error_band_points(const std::vector<RolloutLog>& trials);

// One condition's figure: workspace panel (target path, mean achieved path,
// per-trial sample cloud) above an error-versus-step strip (min-max band
// plus mean line). Byte content is a pure function of the logs.
void emit_plot(const std::vector<RolloutLog>& trials, const std::string& path);

}  // namespace softctrl
