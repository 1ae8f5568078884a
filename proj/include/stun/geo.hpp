#ifndef STUN_GEO_HPP_
#define STUN_GEO_HPP_

#include <cmath>

namespace stun {

// Planar (UTM-style) geographic tag in meters. Geo tags are assumed to be
// already projected; all distances are Euclidean in the plane.
struct GeoTag {
  double easting = 0.0;
  double northing = 0.0;
};

inline double geo_distance(const GeoTag& a, const GeoTag& b) {
  const double de = a.easting - b.easting;
  const double dn = a.northing - b.northing;
  return std::sqrt(de * de + dn * dn);
}

enum class PairLabel { kPositive, kNegative, kIgnore };

// Within the positive radius (inclusive) a pair is a true positive, beyond
// the negative radius (exclusive) a true negative. Pairs falling in the
// annulus between the radii are ignored by both mining and evaluation.
inline PairLabel label_of_distance(double meters, double positive_radius,
                                   double negative_radius) {
  if (meters <= positive_radius) return PairLabel::kPositive;
  if (meters > negative_radius) return PairLabel::kNegative;
  return PairLabel::kIgnore;
}

}  // namespace stun

#endif  // STUN_GEO_HPP_
