#pragma once

#include <cstdint>
#include <vector>

#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/util/vec3.hpp"

namespace trtm::obs {

using util::Vec3;

// Top-view sensing protocol. The camera is orthographic and looks straight
// down; images are square, row 0 is the +y edge. Pixel (r, c) has its center
// at x = (c - (w-1)/2) * pitch, y = ((h-1)/2 - r) * pitch in the cloth frame.
struct ObsParams {
  int resolution = 96;
  double edge_frac = 2.0 / 3.0;  // longest canonical cloth edge / image side
  double depth_scale = 0.1;      // meters mapped to one normalized depth unit
  double sharpness = 500.0;      // soft silhouette steepness, 1/m
  double sil_margin = 0.05;      // soft silhouette influence radius, m
  double noise_sigma = 0.002;    // camera noise on covered pixels, m

  double pitch(double cloth_side) const {
    return cloth_side / (edge_frac * resolution);
  }
  void validate() const;
};

struct DepthObservation {
  int resolution = 0;
  double pitch = 0.0;        // meters per pixel
  double depth_scale = 0.0;  // meters per normalized depth unit
  std::vector<float> depth;       // height above table / depth_scale; bg 0
  std::vector<float> silhouette;  // 1 where depth > 0, else 0
  int degenerate_faces = 0;       // zero-area triangles skipped by the raster

  int n_pixels() const { return resolution * resolution; }
  float at(int r, int c) const { return depth[r * resolution + c]; }
};

// Translate the mesh so its xy centroid sits at the origin (z untouched).
mesh::ClothMesh recenter_mesh(const mesh::ClothMesh& m);

// Orthographic top-view z-buffer in meters over triangle faces; per-pixel
// max height via barycentric interpolation, background exactly 0.
std::vector<float> render_depth(const std::vector<Vec3>& positions,
                                const std::vector<int>& faces, int resolution,
                                double pitch, int* degenerate_faces = nullptr);

// Full protocol: recenter, render, scale depth, threshold the silhouette.
DepthObservation make_observation(const mesh::ClothMesh& m, const ObsParams& p);

// Gaussian noise on nonzero pixels only, clamped at zero so the background
// invariant survives. Sigma is in the image's own units.
void add_noise(std::vector<float>& image, double sigma, uint64_t seed);

// One point per nonzero pixel, in meters in the recentered cloth frame.
std::vector<Vec3> depth_to_pointcloud(const DepthObservation& o);

// Differentiable-renderer forward pass on the recentered mesh (same camera
// as make_observation); thresholding at 0.5 approximates the hard silhouette.
std::vector<float> soft_silhouette_image(const mesh::ClothMesh& m,
                                         const ObsParams& p);

// Rotate the image about its center by k * 45° counterclockwise. Right-angle
// multiples remap pixels exactly; odd multiples resample bilinearly.
DepthObservation rotate_obs(const DepthObservation& o, int k45);

// Rigid rotation of vertex positions about the z axis by k * 45°; visibility
// and connectivity ride along unchanged. unrotate_mesh applies the exact
// transpose, so unrotate(rotate(m, k), k) recovers m (bitwise for right
// angles, to an ulp for odd multiples of 45°).
mesh::ClothMesh rotate_mesh(const mesh::ClothMesh& m, int k45);
mesh::ClothMesh unrotate_mesh(const mesh::ClothMesh& m, int k45);

}  // namespace trtm::obs
