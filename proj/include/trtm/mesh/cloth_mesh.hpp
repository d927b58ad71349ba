#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "trtm/tensor/types.hpp"
#include "trtm/util/vec3.hpp"

namespace trtm::mesh {

using util::Vec3;

// Square cloth discretized as a rows x cols grid. Edges are directed
// (both orientations present) and sorted by receiving vertex then sender,
// so each vertex's incident edges form one contiguous segment. Axis edges
// connect 4-neighbors; diagonal edges connect the quad diagonals.
struct ClothMesh {
  int rows = 0;
  int cols = 0;
  double side = 0.0;  // physical edge length of the sheet (m)

  std::vector<Vec3> positions;
  std::vector<uint8_t> visible;  // 1 = visible from the top view

  struct Edge {
    int a;  // receiver
    int b;  // sender
  };
  std::vector<Edge> edges;
  std::vector<double> rest_length;   // canonical rest length per edge
  std::vector<uint8_t> is_diagonal;  // per edge

  int n_vertices() const { return rows * cols; }
  int n_edges() const { return static_cast<int>(edges.size()); }
  double spacing() const { return side / (cols - 1); }
  int index(int r, int c) const { return r * cols + c; }
};

// Canonical flat template: z = 0, xy centered at the origin, all visible.
ClothMesh make_template(int rows, int cols, double side_m);

// The 9 labeled vertices: corners (TL, TR, BL, BR), edge midpoints
// (top, left, right, bottom), center.
std::array<int, 9> keypoint_indices(const ClothMesh& mesh);

// Segment index over the edge list grouped by receiving vertex.
ad::SegmentIndex edge_segments(const ClothMesh& mesh);

// Quad triangulation for rendering: 3 indices per triangle.
std::vector<int> mesh_faces(const ClothMesh& mesh);

struct VisibilityParams {
  double cyl_radius = 0.0;  // horizontal occlusion radius (m)
  double z_margin = 0.0;    // height a blocker must clear (m)
};

// Defaults tied to the mesh scale: radius of half an axis rest length, and
// a height margin of half the cloth thickness (a layer one full thickness
// above therefore occludes).
VisibilityParams default_visibility(double spacing, double thickness);

// A vertex is hidden iff some other vertex lies within cyl_radius
// horizontally and more than z_margin above it. Uses a spatial hash;
// exhaustive pairwise checking gives identical results.
std::vector<uint8_t> compute_visibility(const std::vector<Vec3>& positions,
                                        const VisibilityParams& params);

struct VertexGroup {
  std::vector<int> members;
  Vec3 centroid{0, 0, 0};
  bool visible = false;  // at least half the members visible
  int grasp = -1;        // visible member nearest centroid (any member if none)
};

// Tiles the grid into block_size x block_size groups; block_size must
// divide both rows and cols.
std::vector<VertexGroup> cluster(const ClothMesh& mesh, int block_size);

// Fraction of mismatched visibility flags over the given vertex subset.
double flag_error(const std::vector<uint8_t>& predicted,
                  const std::vector<uint8_t>& truth,
                  const std::vector<int>& subset);

}  // namespace trtm::mesh
