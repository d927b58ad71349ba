#include "trtm/mesh/cloth_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace trtm::mesh {

ClothMesh make_template(int rows, int cols, double side_m) {
  if (rows < 2 || cols < 2)
    throw std::invalid_argument("make_template: grid must be at least 2x2");
  if (!(side_m > 0.0))
    throw std::invalid_argument("make_template: side must be positive");

  ClothMesh m;
  m.rows = rows;
  m.cols = cols;
  m.side = side_m;

  double sx = side_m / (cols - 1);
  double sy = side_m / (rows - 1);
  double cx = side_m / 2.0;
  // Row 0 is the +y edge so the grid reads like an image viewed from above.
  m.positions.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m.positions.push_back({c * sx - cx, cx - r * sy, 0.0});
  m.visible.assign(m.positions.size(), 1);

  auto add_edge = [&](int a, int b, bool diag) {
    m.edges.push_back({a, b});
    m.rest_length.push_back(norm(m.positions[a] - m.positions[b]));
    m.is_diagonal.push_back(diag ? 1 : 0);
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int v = m.index(r, c);
      // Neighbors visited in row-major order keep the edge list sorted by
      // (receiver, sender) as it is built.
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          add_edge(v, m.index(nr, nc), dr != 0 && dc != 0);
        }
      }
    }
  }
  return m;
}

std::array<int, 9> keypoint_indices(const ClothMesh& mesh) {
  int R = mesh.rows, C = mesh.cols;
  if (R < 2 || C < 2) throw std::invalid_argument("keypoint_indices: bad mesh");
  int mr = (R - 1) / 2, mc = (C - 1) / 2;
  return {
      mesh.index(0, 0),         mesh.index(0, C - 1),
      mesh.index(R - 1, 0),     mesh.index(R - 1, C - 1),
      mesh.index(0, mc),        mesh.index(mr, 0),
      mesh.index(mr, C - 1),    mesh.index(R - 1, mc),
      mesh.index(mr, mc),
  };
}

ad::SegmentIndex edge_segments(const ClothMesh& mesh) {
  ad::SegmentIndex seg;
  seg.offsets.assign(1, 0);
  int e = 0;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    while (e < mesh.n_edges() && mesh.edges[e].a == v) ++e;
    seg.offsets.push_back(e);
  }
  seg.validate();
  if (seg.total() != mesh.n_edges())
    throw std::logic_error("edge_segments: edges not sorted by receiver");
  return seg;
}

std::vector<int> mesh_faces(const ClothMesh& mesh) {
  std::vector<int> faces;
  faces.reserve(static_cast<size_t>(mesh.rows - 1) * (mesh.cols - 1) * 6);
  for (int r = 0; r + 1 < mesh.rows; ++r) {
    for (int c = 0; c + 1 < mesh.cols; ++c) {
      int v00 = mesh.index(r, c), v01 = mesh.index(r, c + 1);
      int v10 = mesh.index(r + 1, c), v11 = mesh.index(r + 1, c + 1);
      faces.insert(faces.end(), {v00, v01, v11});
      faces.insert(faces.end(), {v00, v11, v10});
    }
  }
  return faces;
}

VisibilityParams default_visibility(double spacing, double thickness) {
  return {0.5 * spacing, 0.5 * thickness};
}

namespace {

struct CellKey {
  int64_t v;
  bool operator==(const CellKey& o) const { return v == o.v; }
};
struct CellHash {
  size_t operator()(const CellKey& k) const {
    return std::hash<int64_t>{}(k.v);
  }
};

inline CellKey cell_key(int cx, int cy) {
  return {(static_cast<int64_t>(cx) << 32) ^ static_cast<uint32_t>(cy)};
}

}  // namespace

std::vector<uint8_t> compute_visibility(const std::vector<Vec3>& positions,
                                        const VisibilityParams& params) {
  if (!(params.cyl_radius > 0.0) || params.z_margin < 0.0)
    throw std::invalid_argument("compute_visibility: bad params");
  const double r = params.cyl_radius;
  const double r2 = r * r;
  const int n = static_cast<int>(positions.size());

  std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
  grid.reserve(n * 2);
  auto cell_of = [&](const Vec3& p) {
    return std::pair<int, int>{static_cast<int>(std::floor(p[0] / r)),
                               static_cast<int>(std::floor(p[1] / r))};
  };
  for (int i = 0; i < n; ++i) {
    auto [cx, cy] = cell_of(positions[i]);
    grid[cell_key(cx, cy)].push_back(i);
  }

  std::vector<uint8_t> visible(n, 1);
  for (int i = 0; i < n; ++i) {
    const Vec3& p = positions[i];
    auto [cx, cy] = cell_of(p);
    bool hidden = false;
    for (int dx = -1; dx <= 1 && !hidden; ++dx) {
      for (int dy = -1; dy <= 1 && !hidden; ++dy) {
        auto it = grid.find(cell_key(cx + dx, cy + dy));
        if (it == grid.end()) continue;
        for (int j : it->second) {
          if (j == i) continue;
          double ddx = positions[j][0] - p[0];
          double ddy = positions[j][1] - p[1];
          if (ddx * ddx + ddy * ddy > r2) continue;
          if (positions[j][2] > p[2] + params.z_margin) {
            hidden = true;
            break;
          }
        }
      }
    }
    visible[i] = hidden ? 0 : 1;
  }
  return visible;
}

std::vector<VertexGroup> cluster(const ClothMesh& mesh, int block_size) {
  if (block_size < 1)
    throw std::invalid_argument("cluster: block_size must be >= 1");
  if (mesh.rows % block_size != 0 || mesh.cols % block_size != 0)
    throw std::invalid_argument(
        "cluster: block_size must divide rows and cols");
  int gr = mesh.rows / block_size, gc = mesh.cols / block_size;
  std::vector<VertexGroup> groups(static_cast<size_t>(gr) * gc);

  for (int r = 0; r < mesh.rows; ++r)
    for (int c = 0; c < mesh.cols; ++c)
      groups[(r / block_size) * gc + c / block_size].members.push_back(
          mesh.index(r, c));

  for (auto& g : groups) {
    Vec3 sum{0, 0, 0};
    int n_vis = 0;
    for (int v : g.members) {
      sum += mesh.positions[v];
      if (mesh.visible[v]) ++n_vis;
    }
    g.centroid = (1.0 / g.members.size()) * sum;
    g.visible = 2 * n_vis >= static_cast<int>(g.members.size());

    double best = 0.0;
    g.grasp = -1;
    for (int v : g.members) {
      if (g.visible && !mesh.visible[v]) continue;
      double d = norm2(mesh.positions[v] - g.centroid);
      if (g.grasp < 0 || d < best) {
        best = d;
        g.grasp = v;
      }
    }
  }
  return groups;
}

double flag_error(const std::vector<uint8_t>& predicted,
                  const std::vector<uint8_t>& truth,
                  const std::vector<int>& subset) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("flag_error: flag lengths disagree");
  if (subset.empty()) throw std::invalid_argument("flag_error: empty subset");
  int bad = 0;
  for (int i : subset) {
    if (i < 0 || i >= static_cast<int>(predicted.size()))
      throw std::invalid_argument("flag_error: index out of range");
    if ((predicted[i] != 0) != (truth[i] != 0)) ++bad;
  }
  return static_cast<double>(bad) / subset.size();
}

}  // namespace trtm::mesh
