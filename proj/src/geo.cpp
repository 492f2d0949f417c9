#include "trajdiff/geo.hpp"

#include "trajdiff/types.hpp"

#include <cmath>
#include <numbers>

namespace trajdiff {

double haversine_km(LatLon a, LatLon b) {
  const double rad = std::numbers::pi / 180.0;
  const double dphi = (b.lat - a.lat) * rad;
  const double dlam = (b.lon - a.lon) * rad;
  const double s1 = std::sin(dphi / 2), s2 = std::sin(dlam / 2);
  const double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

void check_coordinate(LatLon p) {
  if (!(std::abs(p.lat) <= 90.0) || !(std::abs(p.lon) <= 180.0))
    throw DataError("coordinate out of range: (" + std::to_string(p.lat) + ", " + std::to_string(p.lon) + ")");
}

}  // namespace trajdiff
