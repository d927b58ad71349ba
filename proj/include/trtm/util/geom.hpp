#pragma once

#include "trtm/util/vec3.hpp"

namespace trtm::util {

// Closest point on triangle (a, b, c) to p, with barycentric weights.
// Standard region-walk formulation; exact on degenerate (collinear) input
// in the sense that it returns the closest point of the segment/point hull.
struct TrianglePoint {
  Vec3 q;
  double wa, wb, wc;
};

inline TrianglePoint closest_point_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                            const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return {a, 1, 0, 0};

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return {b, 0, 1, 0};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double t = d1 / (d1 - d3);
    return {a + ab * t, 1 - t, t, 0};
  }

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return {c, 0, 0, 1};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double t = d2 / (d2 - d6);
    return {a + ac * t, 1 - t, 0, t};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && d4 - d3 >= 0 && d5 - d6 >= 0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + (c - b) * t, 0, 1 - t, t};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, 1 - v - w, v, w};
}

}  // namespace trtm::util
