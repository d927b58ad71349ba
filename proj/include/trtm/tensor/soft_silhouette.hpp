#pragma once

#include <algorithm>
#include <cmath>

#include "trtm/tensor/tensor.hpp"
#include "trtm/tensor/types.hpp"

namespace trtm::ad {

// Differentiable top-view silhouette. Every face adds soft coverage
// a = softplus(sharpness * d) at each nearby pixel, where d is the signed
// 2D distance to the face (positive inside). The image is
// S = 1 - exp(-sum a): a smooth union that saturates at 1 under overlaps
// and is exactly 0 at pixels outside every face's padded bounding box.

namespace sil_detail {

template <typename Real>
inline Real softplus(Real x) {
  if (x > Real(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename Real>
inline Real logistic(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

// Signed distance from point p to triangle (a, b, c) in the plane, positive
// inside. Fills d_da/d_db/d_dc with the xy gradients of the signed distance
// w.r.t. each vertex when grads is true.
template <typename Real>
inline Real signed_tri_dist(const Real p[2], const Real a[2], const Real b[2],
                            const Real c[2], bool grads, Real d_da[2],
                            Real d_db[2], Real d_dc[2]) {
  const Real* v[3] = {a, b, c};
  Real area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
  Real orient = area2 >= Real(0) ? Real(1) : Real(-1);
  bool inside = true;
  for (int e = 0; e < 3 && inside; ++e) {
    const Real* s = v[e];
    const Real* t = v[(e + 1) % 3];
    Real cross = (t[0] - s[0]) * (p[1] - s[1]) - (t[1] - s[1]) * (p[0] - s[0]);
    if (orient * cross < Real(0)) inside = false;
  }

  Real best = Real(0);
  int best_e = -1;
  Real best_t = Real(0);
  bool first = true;
  for (int e = 0; e < 3; ++e) {
    const Real* s = v[e];
    const Real* t = v[(e + 1) % 3];
    Real ex = t[0] - s[0], ey = t[1] - s[1];
    Real len2 = ex * ex + ey * ey;
    Real tt = Real(0);
    if (len2 > Real(0)) {
      tt = ((p[0] - s[0]) * ex + (p[1] - s[1]) * ey) / len2;
      tt = std::clamp(tt, Real(0), Real(1));
    }
    Real qx = s[0] + tt * ex, qy = s[1] + tt * ey;
    Real dx = p[0] - qx, dy = p[1] - qy;
    Real d2 = dx * dx + dy * dy;
    if (first || d2 < best) {
      best = d2;
      best_e = e;
      best_t = tt;
      first = false;
    }
  }
  Real d = std::sqrt(best);
  Real sign = inside ? Real(1) : Real(-1);

  if (grads) {
    for (int i = 0; i < 2; ++i) d_da[i] = d_db[i] = d_dc[i] = Real(0);
    if (d > Real(1e-12)) {
      const Real* s = v[best_e];
      const Real* t = v[(best_e + 1) % 3];
      Real qx = s[0] + best_t * (t[0] - s[0]);
      Real qy = s[1] + best_t * (t[1] - s[1]);
      Real ux = (p[0] - qx) / d, uy = (p[1] - qy) / d;
      // d(dist)/d(endpoint) via the closest point q = s + t*(t-s).
      Real* gs = nullptr;
      Real* gt = nullptr;
      Real* g[3] = {d_da, d_db, d_dc};
      gs = g[best_e];
      gt = g[(best_e + 1) % 3];
      gs[0] = -(Real(1) - best_t) * ux * sign;
      gs[1] = -(Real(1) - best_t) * uy * sign;
      gt[0] = -best_t * ux * sign;
      gt[1] = -best_t * uy * sign;
    }
  }
  return sign * d;
}

template <typename Real>
inline Real pixel_x(int c, int width, Real pitch) {
  return (Real(c) - Real(width - 1) / Real(2)) * pitch;
}

template <typename Real>
inline Real pixel_y(int r, int height, Real pitch) {
  return (Real(height - 1) / Real(2) - Real(r)) * pitch;
}

struct PixelBox {
  int r0, r1, c0, c1;  // inclusive; empty when r0 > r1
};

template <typename Real>
inline PixelBox face_box(const Real* xy0, const Real* xy1, const Real* xy2,
                         const SilhouetteParams& sp) {
  Real minx = std::min({xy0[0], xy1[0], xy2[0]}) - Real(sp.margin);
  Real maxx = std::max({xy0[0], xy1[0], xy2[0]}) + Real(sp.margin);
  Real miny = std::min({xy0[1], xy1[1], xy2[1]}) - Real(sp.margin);
  Real maxy = std::max({xy0[1], xy1[1], xy2[1]}) + Real(sp.margin);
  Real pitch = Real(sp.pitch);
  Real cx = Real(sp.width - 1) / Real(2);
  Real cy = Real(sp.height - 1) / Real(2);
  PixelBox b;
  b.c0 = std::max(0, static_cast<int>(std::ceil(cx + minx / pitch)));
  b.c1 = std::min(sp.width - 1, static_cast<int>(std::floor(cx + maxx / pitch)));
  b.r0 = std::max(0, static_cast<int>(std::ceil(cy - maxy / pitch)));
  b.r1 = std::min(sp.height - 1, static_cast<int>(std::floor(cy - miny / pitch)));
  return b;
}

}  // namespace sil_detail

// verts: (V, 3) positions in meters; out: (H, W) soft silhouette in [0, 1).
template <typename Real>
void soft_silhouette_forward(const Tensor<Real>& verts,
                             const SilhouetteParams& sp, Tensor<Real>& out) {
  using namespace sil_detail;
  const int h = sp.height, w = sp.width;
  out = Tensor<Real>({h, w});
  std::vector<Real> acc(static_cast<size_t>(h) * w, Real(0));
  const Real sharp = Real(sp.sharpness);
  const int nf = sp.n_faces();
  for (int f = 0; f < nf; ++f) {
    const Real* p0 = &verts.data[static_cast<size_t>(sp.faces[3 * f]) * 3];
    const Real* p1 = &verts.data[static_cast<size_t>(sp.faces[3 * f + 1]) * 3];
    const Real* p2 = &verts.data[static_cast<size_t>(sp.faces[3 * f + 2]) * 3];
    PixelBox b = face_box(p0, p1, p2, sp);
    for (int r = b.r0; r <= b.r1; ++r) {
      Real py = pixel_y<Real>(r, h, Real(sp.pitch));
      for (int c = b.c0; c <= b.c1; ++c) {
        Real p[2] = {pixel_x<Real>(c, w, Real(sp.pitch)), py};
        Real d = signed_tri_dist<Real>(p, p0, p1, p2, false, nullptr, nullptr,
                                       nullptr);
        acc[static_cast<size_t>(r) * w + c] += softplus(sharp * d);
      }
    }
  }
  for (int i = 0; i < h * w; ++i)
    out.data[i] = -std::expm1(-acc[i]);
}

// Accumulates d(loss)/d(verts) into dverts given the upstream image gradient
// dout and the forward output value (used to recover exp(-acc) = 1 - S).
template <typename Real>
void soft_silhouette_backward(const Tensor<Real>& verts,
                              const SilhouetteParams& sp,
                              const Tensor<Real>& value,
                              const Tensor<Real>& dout, Tensor<Real>& dverts) {
  using namespace sil_detail;
  const int h = sp.height, w = sp.width;
  const Real sharp = Real(sp.sharpness);
  const int nf = sp.n_faces();
  for (int f = 0; f < nf; ++f) {
    int i0 = sp.faces[3 * f], i1 = sp.faces[3 * f + 1], i2 = sp.faces[3 * f + 2];
    const Real* p0 = &verts.data[static_cast<size_t>(i0) * 3];
    const Real* p1 = &verts.data[static_cast<size_t>(i1) * 3];
    const Real* p2 = &verts.data[static_cast<size_t>(i2) * 3];
    PixelBox b = face_box(p0, p1, p2, sp);
    Real g0[2], g1[2], g2[2];
    for (int r = b.r0; r <= b.r1; ++r) {
      Real py = pixel_y<Real>(r, h, Real(sp.pitch));
      for (int c = b.c0; c <= b.c1; ++c) {
        size_t pix = static_cast<size_t>(r) * w + c;
        Real up = dout.data[pix];
        if (up == Real(0)) continue;
        Real p[2] = {pixel_x<Real>(c, w, Real(sp.pitch)), py};
        Real d = signed_tri_dist<Real>(p, p0, p1, p2, true, g0, g1, g2);
        // dS/dacc = exp(-acc) = 1 - S; dacc/dd = sharp * logistic(sharp*d).
        Real scale = up * (Real(1) - value.data[pix]) * sharp *
                     logistic(sharp * d);
        if (scale == Real(0)) continue;
        dverts.data[static_cast<size_t>(i0) * 3] += scale * g0[0];
        dverts.data[static_cast<size_t>(i0) * 3 + 1] += scale * g0[1];
        dverts.data[static_cast<size_t>(i1) * 3] += scale * g1[0];
        dverts.data[static_cast<size_t>(i1) * 3 + 1] += scale * g1[1];
        dverts.data[static_cast<size_t>(i2) * 3] += scale * g2[0];
        dverts.data[static_cast<size_t>(i2) * 3 + 1] += scale * g2[1];
      }
    }
  }
}

}  // namespace trtm::ad
