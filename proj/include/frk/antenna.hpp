// Copyright 2026 The frkmap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "frk/error.hpp"
#include "frk/geometry.hpp"

namespace frk {

/// Horizontal sector-antenna pattern: site position, boresight azimuth
/// (degrees clockwise from north), half-power beamwidth and maximum
/// attenuation, both per the usual cellular parabolic pattern
/// (defaults: 65 degrees, 30 dB).
struct AntennaSpec {
  Location site{};
  double azimuth_deg{0.0};
  double psi_3db_deg{65.0};
  double a_m_db{30.0};
};

inline void validate_antenna(const AntennaSpec& a) {
  if (!(a.psi_3db_deg > 0.0) || !std::isfinite(a.psi_3db_deg)) {
    throw InvalidParameter("antenna half-power beamwidth must be positive");
  }
  if (!(a.a_m_db > 0.0) || !std::isfinite(a.a_m_db)) {
    throw InvalidParameter("antenna maximum attenuation must be positive");
  }
  if (!std::isfinite(a.azimuth_deg)) {
    throw InvalidParameter("antenna azimuth must be finite");
  }
}

/// Horizontal angle between the antenna boresight and the direction of
/// `loc`, in degrees, in [0, 180].
inline double boresight_angle_degrees(const Location& loc, const AntennaSpec& a) {
  return std::abs(wrap_degrees(bearing_degrees(a.site, loc) - a.azimuth_deg));
}

/// Directional gain in dB: -min(12 (psi / psi_3dB)^2, A_m). Always in
/// [-A_m, 0]; equals 0 on the boresight and -12 dB at psi = psi_3dB.
inline double antenna_gain(const Location& loc, const AntennaSpec& a) {
  validate_antenna(a);
  const double psi = boresight_angle_degrees(loc, a);
  const double q = psi / a.psi_3db_deg;
  return -std::min(12.0 * q * q, a.a_m_db);
}

/// Coverage domain of a sector: a closed wedge around the boresight
/// (default +/-90 degrees) intersected with an optional maximum radius.
struct CellDomain {
  double wedge_half_angle_deg{90.0};
  std::optional<double> max_radius_m{};
};

inline void validate_domain(const CellDomain& d) {
  if (!(d.wedge_half_angle_deg > 0.0) || d.wedge_half_angle_deg > 180.0) {
    throw InvalidParameter("domain wedge half-angle must be in (0, 180] degrees");
  }
  if (d.max_radius_m && !(*d.max_radius_m > 0.0)) {
    throw InvalidParameter("domain radius must be positive");
  }
}

/// Whether `loc` lies in the sector's domain. The wedge is closed (the
/// boundary ray counts as covered); the site itself is always covered.
inline bool in_domain(const Location& loc, const Location& site,
                      double azimuth_deg, const CellDomain& d) {
  validate_domain(d);
  if (d.max_radius_m && distance(loc, site) > *d.max_radius_m) {
    return false;
  }
  const double off = std::abs(wrap_degrees(bearing_degrees(site, loc) - azimuth_deg));
  return off <= d.wedge_half_angle_deg;
}

}  // namespace frk
