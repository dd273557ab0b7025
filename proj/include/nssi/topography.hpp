#pragma once

// 10-20 / 10-10 electrode positions on the unit disk (azimuthal projection,
// Cz at the origin, nose towards +y, the 10 % ring at radius 0.8) and the
// scalp-map SVG writer.

#include <optional>
#include <string>
#include <vector>

namespace nssi {

struct Electrode {
  std::string name;
  double x = 0.0;
  double y = 0.0;
};

// The 63-channel montage in recording order.
const std::vector<Electrode>& montage63();

std::optional<Electrode> find_electrode(const std::string& name);

// Channel names for a C-channel synthetic cohort: a spread 8-electrode set for
// C = 8, otherwise the first C names of the 63-channel montage.
std::vector<std::string> default_channel_names(std::size_t channels);

// Scores in [0, 1]; channels without a known position are listed beside the map.
std::string topography_svg(const std::vector<std::string>& names, const std::vector<double>& scores,
                           const std::string& title);

}  // namespace nssi
