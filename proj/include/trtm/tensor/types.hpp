#pragma once

#include <stdexcept>
#include <vector>

namespace trtm::ad {

// Contiguous row segments of a tensor, e.g. a vertex's incident edges in an
// edge list sorted by receiving vertex. offsets has one entry per segment
// plus a trailing total; every segment must be non-empty.
struct SegmentIndex {
  std::vector<int> offsets;

  int segments() const { return static_cast<int>(offsets.size()) - 1; }
  int total() const { return offsets.back(); }

  void validate() const {
    if (offsets.size() < 2 || offsets.front() != 0)
      throw std::invalid_argument("segment index must start at 0");
    for (size_t i = 1; i < offsets.size(); ++i)
      if (offsets[i] <= offsets[i - 1])
        throw std::invalid_argument("segment index has an empty segment");
  }
};

// Raster geometry for the differentiable silhouette. Faces are triangles
// into the vertex tensor; pitch maps pixels to mesh units (meters). The
// image row 0 is +y, column 0 is -x, pixel centers on a symmetric grid.
// sharpness is the logistic scale in 1/m; margin is how far outside a
// face's bounding box pixels still accumulate coverage (m).
struct SilhouetteParams {
  std::vector<int> faces;  // 3 * n_faces vertex indices
  int height = 0;
  int width = 0;
  double pitch = 0.0;
  double sharpness = 500.0;
  double margin = 0.05;

  int n_faces() const { return static_cast<int>(faces.size()) / 3; }

  void validate(int n_vertices) const {
    if (height < 1 || width < 1) throw std::invalid_argument("empty raster");
    if (pitch <= 0.0) throw std::invalid_argument("pitch must be positive");
    if (sharpness <= 0.0) throw std::invalid_argument("sharpness must be positive");
    if (faces.empty() || faces.size() % 3 != 0)
      throw std::invalid_argument("faces must be 3*n indices");
    for (int v : faces)
      if (v < 0 || v >= n_vertices)
        throw std::invalid_argument("face references vertex out of range");
  }
};

}  // namespace trtm::ad
