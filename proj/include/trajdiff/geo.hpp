#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace trajdiff {

constexpr double kEarthRadiusKm = 6371.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

/// Great-circle distance in km.
double haversine_km(LatLon a, LatLon b);

/// Throws DataError unless |lat| <= 90 and |lon| <= 180.
void check_coordinate(LatLon p);

struct Location {
  LatLon coord;
  std::int64_t support = 0;
};

/// Dense catalog: location id == index.
using LocationCatalog = std::vector<Location>;

struct GnssPoint {
  std::string user;
  double timestamp = 0.0;  // seconds
  LatLon coord;
};

}  // namespace trajdiff
