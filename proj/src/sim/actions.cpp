#include "trtm/sim/actions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "trtm/util/rng.hpp"

namespace trtm::sim {
namespace {

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c{0, 0, 0};
  for (const auto& p : pts) c += p;
  return c * (1.0 / pts.size());
}

}  // namespace

void run_move(SimState& s, const std::vector<GripMove>& moves, double duration) {
  if (moves.empty()) throw std::invalid_argument("run_move: no grips");
  if (duration <= 0) throw std::invalid_argument("run_move: duration must be positive");
  const double dt = s.params.dt;
  const int nsteps = std::max(1, static_cast<int>(std::lround(duration / dt)));
  const double total = nsteps * dt;

  std::vector<Grip> grips(moves.size());
  for (size_t k = 0; k < moves.size(); ++k) grips[k].vertex = moves[k].vertex;
  for (int i = 1; i <= nsteps; ++i) {
    const double u = static_cast<double>(i) / nsteps;
    for (size_t k = 0; k < moves.size(); ++k) {
      const auto& mv = moves[k];
      Vec3 d = mv.to - mv.from;
      Vec3 tgt = mv.from + d * u;
      tgt[2] += 4.0 * mv.arc * u * (1.0 - u);
      Vec3 v = d * (1.0 / total);
      v[2] += 4.0 * mv.arc * (1.0 - 2.0 * u) / total;
      grips[k].target = tgt;
      grips[k].velocity = v;
    }
    set_grips(s, grips);
    step(s);
  }
  // rest at the endpoint
  for (auto& g : s.grips) g.velocity = Vec3{0, 0, 0};
}

void run_hold(SimState& s, double duration) {
  const int nsteps = std::max(1, static_cast<int>(std::lround(duration / s.params.dt)));
  for (auto& g : s.grips) g.velocity = Vec3{0, 0, 0};
  step_n(s, nsteps);
}

int nearest_visible(const SimState& s, double x, double y, double max_radius) {
  const auto vp = mesh::default_visibility(s.spacing(), s.params.thickness);
  const auto vis = mesh::compute_visibility(s.pos, vp);
  int best = -1;
  double best_d = max_radius * max_radius;
  for (int i = 0; i < s.n_vertices(); ++i) {
    if (!vis[i]) continue;
    const double dx = s.pos[i][0] - x, dy = s.pos[i][1] - y;
    const double d = dx * dx + dy * dy;
    if (d <= best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best < 0)
    throw std::invalid_argument("no visible cloth within " + std::to_string(max_radius) +
                                "m of (" + std::to_string(x) + ", " + std::to_string(y) + ")");
  return best;
}

double grip_load(const SimState& s, int vertex) {
  const double ks[3] = {s.params.k_stretch, s.params.k_shear, s.params.k_bend};
  Vec3 f{0, 0, -s.params.gravity * s.vertex_mass};
  for (const auto& sp : s.springs) {
    if (sp.i != vertex && sp.j != vertex) continue;
    const int other = sp.i == vertex ? sp.j : sp.i;
    Vec3 d = s.pos[other] - s.pos[vertex];
    const double len = norm(d);
    if (len < 1e-12) continue;
    f += d * (ks[sp.type] * (len - sp.rest) / len);
  }
  return norm(f);
}

void action_drag(SimState& s, double px, double py, double dx, double dy,
                 const ActionParams& ap) {
  if (dx * dx + dy * dy < 1e-8) throw std::invalid_argument("drag displacement too small");
  const int v = nearest_visible(s, px, py, ap.grasp_radius_factor * s.spacing());
  const Vec3 from = s.pos[v];
  const Vec3 to{from[0] + dx, from[1] + dy, from[2]};
  set_grips(s, {{v, from, {0, 0, 0}}});
  run_move(s, {{v, from, to, 0.0}}, std::hypot(dx, dy) / ap.drag_speed);
  clear_grips(s);
  settle(s, ap.settle_tol, ap.settle_max_steps);
}

void action_fold(SimState& s, double pick_x, double pick_y, double place_x, double place_y,
                 double arc_height, const ActionParams& ap) {
  if (arc_height <= 0) throw std::invalid_argument("fold arc height must be positive");
  const int v = nearest_visible(s, pick_x, pick_y, ap.grasp_radius_factor * s.spacing());
  const Vec3 from = s.pos[v];
  const Vec3 to{place_x, place_y, from[2]};
  const double dist = std::max(norm(to - from), 0.02);
  set_grips(s, {{v, from, {0, 0, 0}}});
  run_move(s, {{v, from, to, arc_height}}, dist / ap.move_speed);
  run_hold(s, 0.2);
  clear_grips(s);
  settle(s, ap.settle_tol, ap.settle_max_steps);
}

void action_drop(SimState& s, double px, double py, double height,
                 double fling_vx, double fling_vy, const ActionParams& ap) {
  if (height <= s.params.thickness) throw std::invalid_argument("drop height too small");
  const int v = nearest_visible(s, px, py, ap.grasp_radius_factor * s.spacing());
  const Vec3 from = s.pos[v];
  const Vec3 up{from[0], from[1], height};
  set_grips(s, {{v, from, {0, 0, 0}}});
  run_move(s, {{v, from, up, 0.0}}, std::max(0.05, height - from[2]) / ap.drop_speed);
  run_hold(s, 0.5);
  // sideways throw: releasing mid-flight makes the sheet land folded over
  // itself; releasing from a static hang just lets it unroll flat
  const double ft = ap.drop_fling_time;
  const Vec3 end{up[0] + fling_vx * ft, up[1] + fling_vy * ft, 0.5 * height};
  run_move(s, {{v, up, end, 0.0}}, ft);
  clear_grips(s);
  settle(s, ap.settle_tol, ap.settle_max_steps);
}

void action_flip(SimState& s, int vL, int vR, const ActionParams& ap) {
  const int n = s.n_vertices();
  if (vL < 0 || vR < 0 || vL >= n || vR >= n || vL == vR)
    throw std::invalid_argument("flip: bad grip vertices");
  const Vec3 cL = s.canonical[vL], cR = s.canonical[vR];
  double ux = cR[0] - cL[0], uy = cR[1] - cL[1];
  const double dc = std::hypot(ux, uy);
  if (dc < 0.05 * s.side) throw std::invalid_argument("flip: grip vertices nearly coincide");
  ux /= dc;
  uy /= dc;
  const double wx = -uy, wy = ux;  // swing direction

  // max perpendicular extent of the flat sheet from the grip line: how deep
  // the cloth hangs, hence how much runway the swing needs
  double hang = 0.0;
  for (const auto& c : s.canonical)
    hang = std::max(hang, std::abs(cross2(ux, uy, c[0] - cL[0], c[1] - cL[1])));

  // lift to a hang above the swing start point
  const Vec3 pL = s.pos[vL], pR = s.pos[vR];
  const double d0 = std::max(std::hypot(pR[0] - pL[0], pR[1] - pL[1]), 0.25 * dc);
  const double back = ap.start_back_factor * hang;
  const Vec3 mid{-back * wx, -back * wy, ap.hang_height};
  Vec3 gL = mid - Vec3{ux, uy, 0} * (d0 / 2);
  Vec3 gR = mid + Vec3{ux, uy, 0} * (d0 / 2);
  const double lift_dist = std::max(norm(gL - pL), norm(gR - pR));
  set_grips(s, {{vL, pL, {0, 0, 0}}, {vR, pR, {0, 0, 0}}});
  run_move(s, {{vL, pL, gL, 0.05}, {vR, pR, gR, 0.05}}, std::max(0.2, lift_dist / ap.move_speed));
  run_hold(s, ap.hang_pause);

  // stretch the grip line toward its template length, capped by grip load
  const double sep_target = ap.stretch_ratio * dc;
  double sep = d0;
  const double block = s.params.substeps * s.params.dt;
  while (sep < sep_target) {
    const double dsep = std::min(ap.stretch_speed * block, sep_target - sep);
    sep += dsep;
    gL -= Vec3{ux, uy, 0} * (dsep / 2);
    gR += Vec3{ux, uy, 0} * (dsep / 2);
    std::vector<Grip> g = s.grips;
    g[0].target = gL;
    g[0].velocity = Vec3{-ux, -uy, 0} * (ap.stretch_speed / 2);
    g[1].target = gR;
    g[1].velocity = Vec3{ux, uy, 0} * (ap.stretch_speed / 2);
    set_grips(s, g);
    step_n(s, s.params.substeps);
    if (grip_load(s, vL) > ap.tension_cap || grip_load(s, vR) > ap.tension_cap) break;
  }
  run_hold(s, 0.3);

  // swing forward while descending, then let go with the swing's momentum
  const double fwd = ap.end_fwd_factor * hang;
  const Vec3 shift{(fwd + back) * wx, (fwd + back) * wy, ap.release_height - ap.hang_height};
  const double dur = std::max(0.1, norm(shift) / ap.swing_speed);
  run_move(s, {{vL, gL, gL + shift, 0.0}, {vR, gR, gR + shift, 0.0}}, dur);
  clear_grips(s);
  settle(s, ap.settle_tol, ap.settle_max_steps);
}

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::kDrag: return "drag";
    case Tier::kFold: return "fold";
    case Tier::kDrop: return "drop";
  }
  throw std::invalid_argument("bad tier");
}

Tier tier_from_name(const std::string& name) {
  if (name == "drag") return Tier::kDrag;
  if (name == "fold") return Tier::kFold;
  if (name == "drop") return Tier::kDrop;
  throw std::invalid_argument("unknown tier '" + name + "' (want drag|fold|drop)");
}

void apply_tier(SimState& s, Tier tier, uint64_t seed, const ActionParams& ap) {
  util::Rng rng(util::derive_stream(seed, static_cast<uint64_t>(tier) + 1));
  const int rows = s.rows, cols = s.cols;
  auto boundary_vertex = [&]() {
    // walk the boundary ring so corners and edges are sampled uniformly
    const int per = 2 * (rows + cols) - 4;
    int k = rng.uniform_int(0, per - 1);
    if (k < cols) return k;                                       // top row
    k -= cols;
    if (k < cols) return (rows - 1) * cols + k;                   // bottom row
    k -= cols;
    if (k < rows - 2) return (k + 1) * cols;                      // left column
    k -= rows - 2;
    return (k + 1) * cols + cols - 1;                             // right column
  };
  auto any_vertex = [&]() {
    return rng.uniform01() < 0.7 ? boundary_vertex() : rng.uniform_int(0, s.n_vertices() - 1);
  };

  switch (tier) {
    case Tier::kDrag: {
      const int n = rng.uniform01() < 0.35 ? 2 : 1;
      for (int k = 0; k < n; ++k) {
        const int v = any_vertex();
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        const double len = rng.uniform(0.25, 0.7) * s.side;
        action_drag(s, s.pos[v][0], s.pos[v][1], len * std::cos(ang), len * std::sin(ang), ap);
      }
      break;
    }
    case Tier::kFold: {
      const int n = rng.uniform01() < 0.6 ? 2 : 1;
      for (int k = 0; k < n; ++k) {
        const int v = boundary_vertex();
        const Vec3 c = centroid(s.pos);
        const double scale = rng.uniform(0.5, 1.0);
        const double jx = rng.uniform(-0.05, 0.05) * s.side;
        const double jy = rng.uniform(-0.05, 0.05) * s.side;
        const double px = s.pos[v][0], py = s.pos[v][1];
        action_fold(s, px, py, c[0] + (c[0] - px) * scale + jx, c[1] + (c[1] - py) * scale + jy,
                    rng.uniform(0.2, 0.45) * s.side, ap);
      }
      break;
    }
    case Tier::kDrop: {
      const int v = any_vertex();
      const double height = rng.uniform(0.7, 1.2) * s.side;
      const double angle = rng.uniform(0.0, 2.0 * M_PI);
      const double speed = rng.uniform(0.5, 0.9);
      action_drop(s, s.pos[v][0], s.pos[v][1], height, speed * std::cos(angle),
                  speed * std::sin(angle), ap);
      break;
    }
  }
}

}  // namespace trtm::sim
