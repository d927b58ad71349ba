#include "trtm/obs/observation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "trtm/tensor/soft_silhouette.hpp"
#include "trtm/tensor/tensor.hpp"
#include "trtm/util/rng.hpp"

namespace trtm::obs {

void ObsParams::validate() const {
  if (resolution < 32) throw std::invalid_argument("obs: resolution must be at least 32");
  if (edge_frac <= 0.0 || edge_frac > 1.0) throw std::invalid_argument("obs: bad edge fraction");
  if (depth_scale <= 0.0) throw std::invalid_argument("obs: depth scale must be positive");
  if (sharpness <= 0.0) throw std::invalid_argument("obs: sharpness must be positive");
}

mesh::ClothMesh recenter_mesh(const mesh::ClothMesh& m) {
  mesh::ClothMesh out = m;
  double cx = 0.0, cy = 0.0;
  for (const auto& p : m.positions) {
    cx += p[0];
    cy += p[1];
  }
  cx /= m.n_vertices();
  cy /= m.n_vertices();
  for (auto& p : out.positions) {
    p[0] -= cx;
    p[1] -= cy;
  }
  return out;
}

std::vector<float> render_depth(const std::vector<Vec3>& positions,
                                const std::vector<int>& faces, int resolution,
                                double pitch, int* degenerate_faces) {
  if (resolution < 32) throw std::invalid_argument("obs: resolution must be at least 32");
  if (pitch <= 0.0) throw std::invalid_argument("obs: pitch must be positive");
  std::vector<float> img(static_cast<size_t>(resolution) * resolution, 0.0f);
  const double half = (resolution - 1) / 2.0;
  int degen = 0;
  const int nf = static_cast<int>(faces.size()) / 3;
  for (int f = 0; f < nf; ++f) {
    const Vec3& a = positions[faces[3 * f]];
    const Vec3& b = positions[faces[3 * f + 1]];
    const Vec3& c = positions[faces[3 * f + 2]];
    const double area2 =
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if (std::abs(area2) < 1e-16) {
      ++degen;
      continue;
    }
    const double minx = std::min({a[0], b[0], c[0]});
    const double maxx = std::max({a[0], b[0], c[0]});
    const double miny = std::min({a[1], b[1], c[1]});
    const double maxy = std::max({a[1], b[1], c[1]});
    const int c0 = std::max(0, static_cast<int>(std::ceil(half + minx / pitch)));
    const int c1 = std::min(resolution - 1, static_cast<int>(std::floor(half + maxx / pitch)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(half - maxy / pitch)));
    const int r1 = std::min(resolution - 1, static_cast<int>(std::floor(half - miny / pitch)));
    const double inv = 1.0 / area2;
    for (int r = r0; r <= r1; ++r) {
      const double py = (half - r) * pitch;
      for (int cc = c0; cc <= c1; ++cc) {
        const double px = (cc - half) * pitch;
        // barycentric weights, orientation-normalized so both windings work
        const double wa = ((b[0] - px) * (c[1] - py) - (b[1] - py) * (c[0] - px)) * inv;
        const double wb = ((c[0] - px) * (a[1] - py) - (c[1] - py) * (a[0] - px)) * inv;
        const double wc = 1.0 - wa - wb;
        // slightly inclusive so pixels landing exactly on a shared edge are
        // claimed by at least one of its triangles despite rounding
        constexpr double kEdgeEps = 1e-9;
        if (wa < -kEdgeEps || wb < -kEdgeEps || wc < -kEdgeEps) continue;
        const double z = (a[2] == b[2] && b[2] == c[2])
                             ? a[2]
                             : wa * a[2] + wb * b[2] + wc * c[2];
        float& d = img[static_cast<size_t>(r) * resolution + cc];
        d = std::max(d, static_cast<float>(z));
      }
    }
  }
  if (degenerate_faces) *degenerate_faces = degen;
  return img;
}

DepthObservation make_observation(const mesh::ClothMesh& m, const ObsParams& p) {
  p.validate();
  const mesh::ClothMesh centered = recenter_mesh(m);
  DepthObservation o;
  o.resolution = p.resolution;
  o.pitch = p.pitch(m.side);
  o.depth_scale = p.depth_scale;
  o.depth = render_depth(centered.positions, mesh::mesh_faces(m), p.resolution,
                         o.pitch, &o.degenerate_faces);
  for (auto& d : o.depth) d = static_cast<float>(d / p.depth_scale);
  o.silhouette.resize(o.depth.size());
  for (size_t i = 0; i < o.depth.size(); ++i)
    o.silhouette[i] = o.depth[i] > 0.0f ? 1.0f : 0.0f;
  return o;
}

void add_noise(std::vector<float>& image, double sigma, uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("obs: noise sigma must be nonnegative");
  if (sigma == 0.0) return;
  util::Rng rng(seed);
  for (auto& v : image) {
    if (v == 0.0f) continue;
    v = std::max(0.0f, v + static_cast<float>(sigma * rng.normal()));
  }
}

std::vector<Vec3> depth_to_pointcloud(const DepthObservation& o) {
  std::vector<Vec3> pts;
  const int res = o.resolution;
  const double half = (res - 1) / 2.0;
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) {
      const float d = o.depth[static_cast<size_t>(r) * res + c];
      if (d <= 0.0f) continue;
      pts.push_back({(c - half) * o.pitch, (half - r) * o.pitch,
                     static_cast<double>(d) * o.depth_scale});
    }
  return pts;
}

std::vector<float> soft_silhouette_image(const mesh::ClothMesh& m,
                                         const ObsParams& p) {
  p.validate();
  const mesh::ClothMesh centered = recenter_mesh(m);
  ad::Tensor<double> verts({m.n_vertices(), 3});
  for (int v = 0; v < m.n_vertices(); ++v)
    for (int k = 0; k < 3; ++k) verts.data[v * 3 + k] = centered.positions[v][k];
  ad::SilhouetteParams sp;
  sp.faces = mesh::mesh_faces(m);
  sp.height = sp.width = p.resolution;
  sp.pitch = p.pitch(m.side);
  sp.sharpness = p.sharpness;
  sp.margin = p.sil_margin;
  ad::Tensor<double> out;
  ad::soft_silhouette_forward(verts, sp, out);
  std::vector<float> img(out.data.size());
  for (size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(out.data[i]);
  return img;
}

namespace {

// cos/sin for k * 45°: exact 0/±1 at right angles, ±sqrt(2)/2 otherwise.
void rot45(int k45, double& c, double& s) {
  const int k = ((k45 % 8) + 8) % 8;
  static const double h = std::sqrt(2.0) / 2.0;
  static const double C[8] = {1, h, 0, -h, -1, -h, 0, h};
  static const double S[8] = {0, h, 1, h, 0, -h, -1, -h};
  c = C[k];
  s = S[k];
}

std::vector<float> rotate_image(const std::vector<float>& src, int res, int k45) {
  const int k = ((k45 % 8) + 8) % 8;
  std::vector<float> dst(src.size(), 0.0f);
  auto idx = [res](int r, int c) { return static_cast<size_t>(r) * res + c; };
  if (k % 2 == 0) {
    // right-angle turns are exact pixel remaps
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        int sr = r, sc = c;
        switch (k / 2) {
          case 0: break;
          case 1: sr = c, sc = res - 1 - r; break;            // 90° ccw
          case 2: sr = res - 1 - r, sc = res - 1 - c; break;  // 180°
          case 3: sr = res - 1 - c, sc = r; break;            // 270° ccw
        }
        dst[idx(r, c)] = src[idx(sr, sc)];
      }
    return dst;
  }
  // odd multiples of 45°: inverse-map each target pixel and sample bilinearly
  double c45, s45;
  rot45(k, c45, s45);
  const double half = (res - 1) / 2.0;
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) {
      const double x = c - half, y = half - r;
      const double sx = c45 * x + s45 * y;  // rotate by -theta
      const double sy = -s45 * x + c45 * y;
      const double fc = sx + half, fr = half - sy;
      const int r0 = static_cast<int>(std::floor(fr));
      const int c0 = static_cast<int>(std::floor(fc));
      const double tr = fr - r0, tc = fc - c0;
      double acc = 0.0;
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) {
          const int rr = r0 + dr, cc = c0 + dc;
          if (rr < 0 || rr >= res || cc < 0 || cc >= res) continue;
          const double w = (dr ? tr : 1.0 - tr) * (dc ? tc : 1.0 - tc);
          acc += w * src[idx(rr, cc)];
        }
      dst[idx(r, c)] = static_cast<float>(acc);
    }
  return dst;
}

mesh::ClothMesh rotate_positions(const mesh::ClothMesh& m, double c, double s) {
  mesh::ClothMesh out = m;
  for (auto& p : out.positions) {
    const double x = p[0], y = p[1];
    p[0] = c * x - s * y;
    p[1] = s * x + c * y;
  }
  return out;
}

}  // namespace

DepthObservation rotate_obs(const DepthObservation& o, int k45) {
  DepthObservation out = o;
  out.depth = rotate_image(o.depth, o.resolution, k45);
  out.silhouette = rotate_image(o.silhouette, o.resolution, k45);
  return out;
}

mesh::ClothMesh rotate_mesh(const mesh::ClothMesh& m, int k45) {
  double c, s;
  rot45(k45, c, s);
  return rotate_positions(m, c, s);
}

mesh::ClothMesh unrotate_mesh(const mesh::ClothMesh& m, int k45) {
  double c, s;
  rot45(k45, c, s);
  return rotate_positions(m, c, -s);
}

}  // namespace trtm::obs
