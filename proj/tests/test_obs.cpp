#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/obs/observation.hpp"
#include "trtm/util/geom.hpp"
#include "trtm/util/rng.hpp"

using trtm::mesh::ClothMesh;
using trtm::mesh::make_template;
using trtm::obs::DepthObservation;
using trtm::obs::ObsParams;
using trtm::util::Vec3;

namespace {

// Flat sheet resting on the table, like the simulator leaves it.
ClothMesh resting_template(double z = 0.0015) {
  ClothMesh m = make_template(9, 9, 0.3);
  for (auto& p : m.positions) p[2] = z;
  return m;
}

// Smooth random deformation that keeps faces sensibly oriented.
ClothMesh bumpy_mesh(uint64_t seed) {
  trtm::util::Rng rng(seed);
  ClothMesh m = resting_template();
  const double ax = rng.uniform(2.0, 9.0), ay = rng.uniform(2.0, 9.0);
  const double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
  const double amp = rng.uniform(0.005, 0.03);
  const double jitter = 0.2 * m.spacing();
  for (auto& p : m.positions) {
    p[0] += rng.uniform(-jitter, jitter);
    p[1] += rng.uniform(-jitter, jitter);
    p[2] += amp * (1.0 + std::sin(ax * p[0] + px) * std::cos(ay * p[1] + py));
  }
  return m;
}

int nonzero_count(const std::vector<float>& img) {
  return static_cast<int>(std::count_if(img.begin(), img.end(),
                                        [](float v) { return v != 0.0f; }));
}

}  // namespace

TEST_SUITE_BEGIN("obs");

TEST_CASE("flat sheet renders constant depth over the scaled square") {
  ObsParams p;
  const auto o = trtm::obs::make_observation(resting_template(), p);
  CHECK(o.resolution == 96);
  CHECK(o.pitch * (2.0 / 3.0 * 96) == 0.3);  // pitch is exact: 0.3 / 64
  CHECK(o.degenerate_faces == 0);

  // the longest canonical edge spans 2/3 of the image, so the flat square
  // covers exactly (2/3 * 96)^2 pixels
  CHECK(nonzero_count(o.depth) == 64 * 64);
  const float level = *std::find_if(o.depth.begin(), o.depth.end(),
                                    [](float v) { return v != 0.0f; });
  CHECK(level == doctest::Approx(0.015).epsilon(1e-6));
  int wrong = 0;
  for (int i = 0; i < o.n_pixels(); ++i) {
    if (o.depth[i] != 0.0f && o.depth[i] != level) ++wrong;
    if (o.silhouette[i] != (o.depth[i] > 0.0f ? 1.0f : 0.0f)) ++wrong;
  }
  CHECK(wrong == 0);

  ObsParams bad = p;
  bad.resolution = 16;
  CHECK_THROWS_AS(trtm::obs::make_observation(resting_template(), bad),
                  std::invalid_argument);
}

TEST_CASE("folded flap renders two levels one thickness apart") {
  // lay a flap (rows 0..1) one layer above the sheet; the connecting faces
  // form a short ramp, every other pixel sits on one of two clean levels
  ClothMesh m = resting_template();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 9; ++c) {
      auto& p = m.positions[m.index(r, c)];
      p[1] -= 0.1875;
      p[2] = 3 * 0.0015;
    }
  const auto img = trtm::obs::render_depth(m.positions, trtm::mesh::mesh_faces(m),
                                           96, 0.3 / 64);
  const float base = 0.0015f, upper = 0.0045f;
  int n_base = 0, n_upper = 0, n_ramp = 0, n_bad = 0;
  for (float v : img) {
    if (v == 0.0f) continue;
    if (v == base) ++n_base;
    else if (v == upper) ++n_upper;
    else if (v > base && v < upper) ++n_ramp;
    else ++n_bad;
  }
  CHECK(n_bad == 0);
  // moving rows 0..1 vacates the top band: what remains is 16 rows of bare
  // sheet, 8 rows of flap two layers up, 24 rows of connecting ramp
  CHECK(n_base == 1024);
  CHECK(n_upper == 512);
  CHECK(n_ramp == 1536);
  CHECK(upper - base == doctest::Approx(0.003f).epsilon(1e-5));
}

TEST_CASE("observation recenters the cloth") {
  ClothMesh m = bumpy_mesh(11);
  for (auto& p : m.positions) {
    p[0] += 0.04;
    p[1] -= 0.03;
  }
  const auto o = trtm::obs::make_observation(m, ObsParams{});
  double wr = 0, wc = 0, wsum = 0;
  for (int r = 0; r < o.resolution; ++r)
    for (int c = 0; c < o.resolution; ++c) {
      const float v = o.silhouette[r * o.resolution + c];
      wr += v * r;
      wc += v * c;
      wsum += v;
    }
  const double center = (o.resolution - 1) / 2.0;
  CHECK(std::abs(wr / wsum - center) < 1.0);
  CHECK(std::abs(wc / wsum - center) < 1.0);
}

TEST_CASE("recentering is idempotent") {
  const ClothMesh once = trtm::obs::recenter_mesh(bumpy_mesh(3));
  const ClothMesh twice = trtm::obs::recenter_mesh(once);
  for (int v = 0; v < once.n_vertices(); ++v)
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(twice.positions[v][k] - once.positions[v][k]) < 1e-15);

  const auto a = trtm::obs::make_observation(once, ObsParams{});
  const auto b = trtm::obs::make_observation(twice, ObsParams{});
  CHECK(nonzero_count(a.depth) == nonzero_count(b.depth));
  for (int i = 0; i < a.n_pixels(); ++i)
    CHECK(std::abs(a.depth[i] - b.depth[i]) < 1e-6f);
}

TEST_CASE("noise hits covered pixels only and matches its sigma") {
  ObsParams p;
  p.resolution = 160;  // (2/3 * 160)^2 > 1e4 covered pixels
  const auto clean = trtm::obs::make_observation(resting_template(0.05), p);
  auto noisy = clean.depth;
  trtm::obs::add_noise(noisy, 0.02, 7);

  double sum = 0, sum2 = 0;
  int n = 0, clamped = 0;
  for (int i = 0; i < clean.n_pixels(); ++i) {
    if (clean.depth[i] == 0.0f) {
      CHECK(noisy[i] == 0.0f);
      continue;
    }
    if (noisy[i] == 0.0f) ++clamped;  // clamp floor (25 sigma away here)
    const double d = noisy[i] - clean.depth[i];
    sum += d;
    sum2 += d * d;
    ++n;
  }
  REQUIRE(n > 10000);
  CHECK(clamped == 0);
  const double mean = sum / n;
  const double stdev = std::sqrt(sum2 / n - mean * mean);
  CHECK(stdev == doctest::Approx(0.02).epsilon(0.05));
  CHECK(std::abs(mean) < 3 * 0.02 / std::sqrt(static_cast<double>(n)));

  auto same = clean.depth;
  trtm::obs::add_noise(same, 0.02, 7);
  CHECK(same == noisy);  // deterministic by seed
  auto other = clean.depth;
  trtm::obs::add_noise(other, 0.02, 8);
  CHECK(other != noisy);

  auto ident = clean.depth;
  trtm::obs::add_noise(ident, 0.0, 7);
  CHECK(ident == clean.depth);
  CHECK_THROWS_AS(trtm::obs::add_noise(ident, -1.0, 0), std::invalid_argument);
}

TEST_CASE("point cloud back-projects every covered pixel onto the surface") {
  const ClothMesh m = bumpy_mesh(21);
  const ClothMesh centered = trtm::obs::recenter_mesh(m);
  const auto o = trtm::obs::make_observation(m, ObsParams{});
  const auto pts = trtm::obs::depth_to_pointcloud(o);
  CHECK(static_cast<int>(pts.size()) == nonzero_count(o.depth));

  const auto faces = trtm::mesh::mesh_faces(m);
  for (size_t i = 0; i < pts.size(); i += 7) {  // sample; full loop is slow
    const Vec3& q = pts[i];
    double best_h = 1e9, best_v = 1e9;
    for (size_t f = 0; f * 3 < faces.size(); ++f) {
      const auto tp = trtm::util::closest_point_triangle(
          q, centered.positions[faces[3 * f]], centered.positions[faces[3 * f + 1]],
          centered.positions[faces[3 * f + 2]]);
      const double h = std::hypot(q[0] - tp.q[0], q[1] - tp.q[1]);
      const double v = std::abs(q[2] - tp.q[2]);
      if (h + v < best_h + best_v) {
        best_h = h;
        best_v = v;
      }
    }
    CHECK(best_h <= o.pitch);
    CHECK(best_v <= 0.002);
  }

  // flat cloth: every point at the same height
  const auto flat = trtm::obs::make_observation(resting_template(), ObsParams{});
  for (const auto& q : trtm::obs::depth_to_pointcloud(flat))
    CHECK(q[2] == doctest::Approx(0.0015).epsilon(1e-6));
}

TEST_CASE("soft silhouette agrees with the hard raster") {
  ObsParams p;
  int agree = 0, total = 0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const ClothMesh m = bumpy_mesh(100 + seed);
    const auto o = trtm::obs::make_observation(m, p);
    const auto soft = trtm::obs::soft_silhouette_image(m, p);
    for (int i = 0; i < o.n_pixels(); ++i) {
      agree += (soft[i] >= 0.5f) == (o.silhouette[i] > 0.0f);
      ++total;
    }
  }
  CHECK(static_cast<double>(agree) / total >= 0.99);

  // interior pixels saturate toward 1 as sharpness grows; pixels beyond the
  // margin band stay exactly zero
  const auto soft = trtm::obs::soft_silhouette_image(resting_template(), p);
  ObsParams sharp10 = p;
  sharp10.sharpness = 10 * p.sharpness;
  const auto sharper = trtm::obs::soft_silhouette_image(resting_template(), sharp10);
  const float peak = *std::max_element(soft.begin(), soft.end());
  const float peak10 = *std::max_element(sharper.begin(), sharper.end());
  CHECK(peak > 0.95f);
  CHECK(peak10 > 0.999f);
  CHECK(peak10 > peak);
  CHECK(soft[0] == 0.0f);
  CHECK(soft[95] == 0.0f);
}

TEST_CASE("right-angle rotations remap exactly") {
  const auto o = trtm::obs::make_observation(bumpy_mesh(5), ObsParams{});

  const auto k0 = trtm::obs::rotate_obs(o, 0);
  CHECK(k0.depth == o.depth);
  CHECK(k0.silhouette == o.silhouette);

  // four quarter turns come back to the start, bitwise
  auto r = o;
  for (int i = 0; i < 4; ++i) r = trtm::obs::rotate_obs(r, 2);
  CHECK(r.depth == o.depth);

  // an axis-aligned symmetric silhouette is invariant under 90 degrees
  const auto flat = trtm::obs::make_observation(resting_template(), ObsParams{});
  const auto flat90 = trtm::obs::rotate_obs(flat, 2);
  CHECK(flat90.silhouette == flat.silhouette);
  CHECK(flat90.depth == flat.depth);
}

TEST_CASE("diagonal rotation keeps the cloth in frame and conserves mass") {
  const auto flat = trtm::obs::make_observation(resting_template(), ObsParams{});
  const auto r45 = trtm::obs::rotate_obs(flat, 1);
  // the 2:3 scaling rule leaves room for the diagonal: nothing on the border
  for (int i = 0; i < flat.resolution; ++i) {
    const int res = flat.resolution;
    CHECK(r45.depth[i] == 0.0f);
    CHECK(r45.depth[(res - 1) * res + i] == 0.0f);
    CHECK(r45.depth[i * res] == 0.0f);
    CHECK(r45.depth[i * res + res - 1] == 0.0f);
  }
  double mass0 = 0, mass1 = 0;
  for (int i = 0; i < flat.n_pixels(); ++i) {
    mass0 += flat.depth[i];
    mass1 += r45.depth[i];
  }
  CHECK(mass1 == doctest::Approx(mass0).epsilon(0.02));
}

TEST_CASE("mesh rotation round-trips") {
  const ClothMesh m = bumpy_mesh(31);
  for (int k = 0; k < 8; ++k) {
    const ClothMesh back = trtm::obs::unrotate_mesh(trtm::obs::rotate_mesh(m, k), k);
    for (int v = 0; v < m.n_vertices(); ++v)
      for (int d = 0; d < 3; ++d) {
        if (k % 2 == 0) {
          CHECK(back.positions[v][d] == m.positions[v][d]);
        } else {
          CHECK(back.positions[v][d] ==
                doctest::Approx(m.positions[v][d]).epsilon(1e-12));
        }
      }
    CHECK(back.visible == m.visible);
  }
  // rotating the mesh then rendering matches rotating the rendered image
  // (exactly for right angles)
  const auto direct =
      trtm::obs::make_observation(trtm::obs::rotate_mesh(m, 2), ObsParams{});
  const auto imaged = trtm::obs::rotate_obs(
      trtm::obs::make_observation(m, ObsParams{}), 2);
  CHECK(direct.depth == imaged.depth);
}

TEST_CASE("degenerate faces are skipped and counted") {
  ClothMesh m = resting_template();
  m.positions[1] = m.positions[0];  // collapse one edge
  const auto o = trtm::obs::make_observation(m, ObsParams{});
  CHECK(o.degenerate_faces > 0);
  CHECK(nonzero_count(o.depth) > 0);
}

TEST_SUITE_END();
