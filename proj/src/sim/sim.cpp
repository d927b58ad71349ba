#include "trtm/sim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "trtm/util/geom.hpp"

namespace trtm::sim {
namespace {

// Worst-case stiffness seen by one vertex: four stretch + four shear + four
// bend springs plus one active repulsion contact.
double stiffness_sum(const SimParams& p) {
  return 4 * p.k_stretch + 4 * p.k_shear + 4 * p.k_bend + p.k_repulsion;
}

int64_t pair_key(int i, int j, int n) {
  if (i > j) std::swap(i, j);
  return static_cast<int64_t>(i) * n + j;
}

struct CellKey {
  int64_t key;
  bool operator==(const CellKey& o) const { return key == o.key; }
};
struct CellHash {
  size_t operator()(const CellKey& k) const {
    return std::hash<int64_t>()(k.key * 0x9e3779b97f4a7c15LL);
  }
};

int64_t cell_key(double x, double y, double inv_cell) {
  auto cx = static_cast<int64_t>(std::floor(x * inv_cell));
  auto cy = static_cast<int64_t>(std::floor(y * inv_cell));
  return (cx << 32) ^ (cy & 0xffffffffLL);
}

}  // namespace

void SimParams::validate(int n_vertices) const {
  if (n_vertices < 4) throw std::invalid_argument("sim: need at least 2x2 vertices");
  if (dt <= 0 || substeps < 1) throw std::invalid_argument("sim: dt and substeps must be positive");
  if (mass_total <= 0) throw std::invalid_argument("sim: mass_total must be positive");
  if (k_stretch <= 0 || k_shear < 0 || k_bend < 0 || k_repulsion < 0 || bend_force_cap < 0)
    throw std::invalid_argument("sim: stiffness must be non-negative (stretch positive)");
  if (damp_spring < 0 || damp_global < 0 || friction < 0 || contact_friction < 0 ||
      contact_damping < 0)
    throw std::invalid_argument("sim: damping and friction must be non-negative");
  if (thickness <= 0 || repulsion_dist < 0) throw std::invalid_argument("sim: bad geometry params");
  if (gravity < 0) throw std::invalid_argument("sim: gravity must be non-negative");

  const double m = mass_total / n_vertices;
  const double omega = std::sqrt(stiffness_sum(*this) / m);
  const double dt_stiff = 2.0 / omega;  // symplectic Euler stability edge
  // worst per-vertex damping: 12 springs plus ~4 simultaneous contacts
  const double c = 12 * damp_spring + 4 * contact_damping;
  const double dt_damp = c > 0 ? 2.0 * m / c : dt_stiff;
  const double dt_max = 0.9 * std::min(dt_stiff, dt_damp);
  if (dt > dt_max)
    throw std::invalid_argument("sim: dt " + std::to_string(dt) + " exceeds stable limit " +
                                std::to_string(dt_max) + " for this stiffness/mass");
  if (damp_global * dt > 1.0) throw std::invalid_argument("sim: damp_global*dt must be <= 1");
}

SimState make_state(const mesh::ClothMesh& tpl, const SimParams& params) {
  params.validate(tpl.n_vertices());
  SimState s;
  s.rows = tpl.rows;
  s.cols = tpl.cols;
  s.side = tpl.side;
  s.params = params;
  s.canonical = tpl.positions;
  s.vertex_mass = params.mass_total / tpl.n_vertices();

  s.springs.reserve(tpl.edges.size() / 2 + 2 * tpl.n_vertices());
  for (size_t e = 0; e < tpl.edges.size(); ++e) {
    const auto& ed = tpl.edges[e];
    if (ed.a < ed.b) continue;  // each undirected pair once
    s.springs.push_back({ed.b, ed.a, tpl.rest_length[e], tpl.is_diagonal[e] ? 1 : 0});
  }
  // rest lengths come from the template positions so the flat pose is an
  // exact equilibrium, bit for bit
  auto two_hop = [&](int i, int j) {
    s.springs.push_back({i, j, norm(tpl.positions[j] - tpl.positions[i]), 2});
  };
  for (int r = 0; r < tpl.rows; ++r)
    for (int c = 0; c < tpl.cols; ++c) {
      if (c + 2 < tpl.cols) two_hop(tpl.index(r, c), tpl.index(r, c + 2));
      if (r + 2 < tpl.rows) two_hop(tpl.index(r, c), tpl.index(r + 2, c));
    }

  const int n = tpl.n_vertices();
  s.excluded_pairs.reserve(s.springs.size());
  for (const auto& sp : s.springs) s.excluded_pairs.push_back(pair_key(sp.i, sp.j, n));
  std::sort(s.excluded_pairs.begin(), s.excluded_pairs.end());

  s.faces = mesh::mesh_faces(tpl);
  s.face_blocked.resize(s.faces.size() / 3);
  for (size_t f = 0; f < s.face_blocked.size(); ++f) {
    auto& blocked = s.face_blocked[f];
    for (int k = 0; k < 3; ++k) {
      const int v = s.faces[3 * f + k];
      blocked.push_back(v);
      for (const auto& sp : s.springs) {
        if (sp.i == v) blocked.push_back(sp.j);
        if (sp.j == v) blocked.push_back(sp.i);
      }
    }
    std::sort(blocked.begin(), blocked.end());
    blocked.erase(std::unique(blocked.begin(), blocked.end()), blocked.end());
  }

  s.pos = tpl.positions;
  const double z0 = params.thickness / 2;
  for (auto& p : s.pos) p[2] = z0;
  s.vel.assign(n, Vec3{0, 0, 0});
  s.min_z_seen = z0;
  return s;
}

void step(SimState& s) {
  const SimParams& p = s.params;
  const int n = s.n_vertices();
  const double m = s.vertex_mass;

  static thread_local std::vector<Vec3> force;
  force.assign(n, Vec3{0, 0, -p.gravity * m});

  const double ks[3] = {p.k_stretch, p.k_shear, p.k_bend};
  for (const auto& sp : s.springs) {
    Vec3 d = s.pos[sp.j] - s.pos[sp.i];
    const double len = norm(d);
    if (len < 1e-12) continue;
    const Vec3 dir = d * (1.0 / len);
    double fe = ks[sp.type] * (len - sp.rest);
    if (sp.type == 2) fe = std::clamp(fe, -p.bend_force_cap, p.bend_force_cap);
    const double f = fe + p.damp_spring * dot(s.vel[sp.j] - s.vel[sp.i], dir);
    force[sp.i] += dir * f;
    force[sp.j] -= dir * f;
  }

  struct Contact {
    int i, va, vb, vc;
    double wa, wb, wc;
    Vec3 dir;
    double fn;
  };
  static thread_local std::vector<Contact> contacts;
  contacts.clear();

  if (p.k_repulsion > 0 && p.repulsion_dist > 0) {
    const double r = p.repulsion_dist;
    const int n_faces = static_cast<int>(s.faces.size() / 3);
    // hash face centroids on a spacing-sized grid; a 3x3 neighbourhood then
    // covers every triangle whose surface can lie within repulsion_dist
    const double cell = s.spacing();
    const double inv_cell = 1.0 / cell;
    static thread_local std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
    grid.clear();
    for (int f = 0; f < n_faces; ++f) {
      const Vec3& a = s.pos[s.faces[3 * f]];
      const Vec3& b = s.pos[s.faces[3 * f + 1]];
      const Vec3& c = s.pos[s.faces[3 * f + 2]];
      const double mx = (a[0] + b[0] + c[0]) / 3, my = (a[1] + b[1] + c[1]) / 3;
      grid[{cell_key(mx, my, inv_cell)}].push_back(f);
    }

    static thread_local std::vector<int> near;
    for (int i = 0; i < n; ++i) {
      near.clear();
      const auto cx = static_cast<int64_t>(std::floor(s.pos[i][0] * inv_cell));
      const auto cy = static_cast<int64_t>(std::floor(s.pos[i][1] * inv_cell));
      for (int64_t dx = -1; dx <= 1; ++dx)
        for (int64_t dy = -1; dy <= 1; ++dy) {
          auto it = grid.find({(((cx + dx) << 32) ^ ((cy + dy) & 0xffffffffLL))});
          if (it == grid.end()) continue;
          near.insert(near.end(), it->second.begin(), it->second.end());
        }
      // Sorted candidates keep force accumulation order independent of hash
      // iteration, so runs (and mirrored runs) stay bit-reproducible.
      std::sort(near.begin(), near.end());
      for (int f : near) {
        const auto& blocked = s.face_blocked[f];
        if (std::binary_search(blocked.begin(), blocked.end(), i)) continue;
        const int va = s.faces[3 * f], vb = s.faces[3 * f + 1], vc = s.faces[3 * f + 2];
        const auto cp = util::closest_point_triangle(s.pos[i], s.pos[va], s.pos[vb], s.pos[vc]);
        const Vec3 d = s.pos[i] - cp.q;
        const double dsq = norm2(d);
        if (dsq >= r * r || dsq < 1e-18) continue;
        const double len = std::sqrt(dsq);
        const Vec3 dir = d * (1.0 / len);
        const Vec3 vq = s.vel[va] * cp.wa + s.vel[vb] * cp.wb + s.vel[vc] * cp.wc;
        const Vec3 dvel = s.vel[i] - vq;
        // spring-damper normal force, clamped repulsive-only (no adhesion)
        const double fn = std::max(
            0.0, p.k_repulsion * (r - len) - p.contact_damping * dot(dvel, dir));
        force[i] += dir * fn;
        force[va] -= dir * (fn * cp.wa);
        force[vb] -= dir * (fn * cp.wb);
        force[vc] -= dir * (fn * cp.wc);
        if (fn > 0) contacts.push_back({i, va, vb, vc, cp.wa, cp.wb, cp.wc, dir, fn});
      }
    }
  }

  const double drag = std::max(0.0, 1.0 - p.damp_global * p.dt);
  for (int i = 0; i < n; ++i) {
    s.vel[i] += force[i] * (p.dt / m);
    s.vel[i] = s.vel[i] * drag;
  }

  // layer-on-layer Coulomb friction as sequential velocity impulses: each
  // contact removes tangential slip up to friction*fn*dt, never reverses it,
  // so the pass is unconditionally stable
  if (p.contact_friction > 0) {
    for (const auto& ct : contacts) {
      const Vec3 vq =
          s.vel[ct.va] * ct.wa + s.vel[ct.vb] * ct.wb + s.vel[ct.vc] * ct.wc;
      const Vec3 dvel = s.vel[ct.i] - vq;
      const Vec3 slip = dvel - ct.dir * dot(dvel, ct.dir);
      const double vt = norm(slip);
      if (vt < 1e-12) continue;
      const double k_eff = (1.0 + ct.wa * ct.wa + ct.wb * ct.wb + ct.wc * ct.wc) / m;
      const double j = std::min(p.contact_friction * ct.fn * p.dt, vt / k_eff);
      const Vec3 imp = slip * (j / vt);
      s.vel[ct.i] -= imp * (1.0 / m);
      s.vel[ct.va] += imp * (ct.wa / m);
      s.vel[ct.vb] += imp * (ct.wb / m);
      s.vel[ct.vc] += imp * (ct.wc / m);
    }
  }

  const double floor_z = p.thickness / 2;
  const double fric_dv = p.friction * p.gravity * p.dt;
  double checksum = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec3& v = s.vel[i];
    s.pos[i] += v * p.dt;
    if (s.pos[i][2] < floor_z) {
      s.pos[i][2] = floor_z;
      if (v[2] < 0) v[2] = 0;
      const double vt = std::sqrt(v[0] * v[0] + v[1] * v[1]);
      if (vt <= fric_dv) {
        v[0] = 0;
        v[1] = 0;
      } else {
        const double scale = (vt - fric_dv) / vt;
        v[0] *= scale;
        v[1] *= scale;
      }
    }
    checksum += s.pos[i][0] + s.pos[i][1] + s.pos[i][2];
  }

  for (const auto& g : s.grips) {
    s.pos[g.vertex] = g.target;
    s.vel[g.vertex] = g.velocity;
  }

  for (int i = 0; i < n; ++i) s.min_z_seen = std::min(s.min_z_seen, s.pos[i][2]);
  s.time += p.dt;
  ++s.steps;
  if (!std::isfinite(checksum))
    throw SimInstability("simulation diverged at step " + std::to_string(s.steps) +
                         " (t=" + std::to_string(s.time) + "s)");
}

void step_n(SimState& s, int nsteps) {
  for (int k = 0; k < nsteps; ++k) step(s);
}

bool settle(SimState& s, double speed_tol, int max_steps) {
  for (int done = 0; done < max_steps; done += s.params.substeps) {
    step_n(s, s.params.substeps);
    if (max_speed(s) < speed_tol) return true;
  }
  return max_speed(s) < speed_tol;
}

double max_speed(const SimState& s) {
  double best = 0.0;
  for (const auto& v : s.vel) best = std::max(best, norm2(v));
  return std::sqrt(best);
}

void set_grips(SimState& s, std::vector<Grip> grips) {
  for (const auto& g : grips)
    if (g.vertex < 0 || g.vertex >= s.n_vertices())
      throw std::invalid_argument("sim: grip vertex out of range");
  s.grips = std::move(grips);
}

void clear_grips(SimState& s) { s.grips.clear(); }

Energy energy(const SimState& s) {
  const SimParams& p = s.params;
  Energy e;
  for (int i = 0; i < s.n_vertices(); ++i) {
    e.kinetic += 0.5 * s.vertex_mass * norm2(s.vel[i]);
    e.gravity += s.vertex_mass * p.gravity * s.pos[i][2];
  }
  const double ks[3] = {p.k_stretch, p.k_shear, p.k_bend};
  for (const auto& sp : s.springs) {
    const double stretch = norm(s.pos[sp.j] - s.pos[sp.i]) - sp.rest;
    e.spring += 0.5 * ks[sp.type] * stretch * stretch;
  }
  if (p.k_repulsion > 0 && p.repulsion_dist > 0) {
    const int n = s.n_vertices();
    const double r = p.repulsion_dist;
    const int n_faces = static_cast<int>(s.faces.size() / 3);
    for (int i = 0; i < n; ++i)
      for (int f = 0; f < n_faces; ++f) {
        const auto& blocked = s.face_blocked[f];
        if (std::binary_search(blocked.begin(), blocked.end(), i)) continue;
        const auto cp = util::closest_point_triangle(
            s.pos[i], s.pos[s.faces[3 * f]], s.pos[s.faces[3 * f + 1]],
            s.pos[s.faces[3 * f + 2]]);
        const double d = norm(s.pos[i] - cp.q);
        if (d < r) e.repulsion += 0.5 * p.k_repulsion * (r - d) * (r - d);
      }
  }
  return e;
}

mesh::ClothMesh snapshot(const SimState& s) {
  auto m = mesh::make_template(s.rows, s.cols, s.side);
  m.positions = s.pos;
  const auto vp = mesh::default_visibility(s.spacing(), s.params.thickness);
  m.visible = mesh::compute_visibility(m.positions, vp);
  return m;
}

}  // namespace trtm::sim
