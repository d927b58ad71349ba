#include "trtm/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace trtm::policy {

const char* target_name(Target t) {
  switch (t) {
    case Target::kFlat: return "flat";
    case Target::kTriangle: return "triangle";
    case Target::kRectangle: return "rectangle";
  }
  throw std::invalid_argument("target_name: bad enum value");
}

Target target_from_name(const std::string& name) {
  if (name == "flat") return Target::kFlat;
  if (name == "triangle") return Target::kTriangle;
  if (name == "rectangle") return Target::kRectangle;
  throw std::invalid_argument("unknown target: " + name);
}

void GroupConfig::validate() const {
  if (rows < 2 || cols < 2) throw std::invalid_argument("GroupConfig: mesh too small");
  if (side <= 0) throw std::invalid_argument("GroupConfig: side must be positive");
  if (block < 1 || rows % block || cols % block)
    throw std::invalid_argument("GroupConfig: block must divide rows and cols");
}

std::vector<uint8_t> hard_silhouette(const obs::DepthObservation& o) {
  std::vector<uint8_t> s(o.silhouette.size());
  for (size_t i = 0; i < s.size(); ++i) s[i] = o.silhouette[i] > 0.5f ? 1 : 0;
  return s;
}

int on_area(const std::vector<uint8_t>& s) {
  int n = 0;
  for (uint8_t v : s) n += v != 0;
  return n;
}

double similarity(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("similarity: mask sizes differ");
  int mis = 0, on_b = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    mis += (a[i] != 0) != (b[i] != 0);
    on_b += b[i] != 0;
  }
  return 1.0 - double(mis) / std::max(1, on_b);
}

double coverage(const std::vector<uint8_t>& s, double flat_area) {
  if (flat_area <= 0) throw std::invalid_argument("coverage: flat_area must be positive");
  return on_area(s) / flat_area;
}

namespace {

// Integer-pixel shift putting the mask's area centroid at the image center.
std::vector<uint8_t> recenter_mask(const std::vector<uint8_t>& m, int res) {
  double sr = 0, sc = 0;
  int n = 0;
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c)
      if (m[r * res + c]) {
        sr += r;
        sc += c;
        ++n;
      }
  if (!n) return m;
  int dr = (int)std::lround((res - 1) / 2.0 - sr / n);
  int dc = (int)std::lround((res - 1) / 2.0 - sc / n);
  std::vector<uint8_t> out(m.size(), 0);
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c)
      if (m[r * res + c]) {
        int rr = r + dr, cc = c + dc;
        if (rr >= 0 && rr < res && cc >= 0 && cc < res) out[rr * res + cc] = 1;
      }
  return out;
}

}  // namespace

TargetSpec make_target(Target t, const obs::ObsParams& op, double cloth_side) {
  op.validate();
  if (cloth_side <= 0) throw std::invalid_argument("make_target: cloth_side must be positive");
  const int res = op.resolution;
  const double pitch = op.pitch(cloth_side);
  const double half = cloth_side / 2;

  TargetSpec spec;
  spec.target = t;
  spec.episodes = t == Target::kFlat ? 2 : 1;
  spec.resolution = res;
  spec.silhouette.assign((size_t)res * res, 0);

  std::vector<uint8_t> flat((size_t)res * res, 0);
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) {
      double x = (c - (res - 1) / 2.0) * pitch;
      double y = ((res - 1) / 2.0 - r) * pitch;
      if (std::abs(x) <= half && std::abs(y) <= half) {
        flat[r * res + c] = 1;
        bool keep = t == Target::kFlat || (t == Target::kTriangle ? y <= -x : y <= 0);
        if (keep) spec.silhouette[r * res + c] = 1;
      }
    }
  spec.flat_area = on_area(flat);
  if (t != Target::kFlat) spec.silhouette = recenter_mask(spec.silhouette, res);
  return spec;
}

FlipLibrary build_flip_library(const GroupConfig& gc, const sim::SimParams& sp,
                               const sim::ActionParams& ap,
                               const obs::ObsParams& op, uint64_t seed,
                               std::vector<std::string>* unstable_log) {
  gc.validate();
  op.validate();
  FlipLibrary lib;
  lib.config = gc;
  lib.sim_params = sp;
  lib.action_params = ap;
  lib.obs_params = op;
  lib.seed = seed;

  auto tpl = mesh::make_template(gc.rows, gc.cols, gc.side);
  auto base = sim::make_state(tpl, sp);
  auto groups = mesh::cluster(sim::snapshot(base), gc.block);
  const int ng = (int)groups.size();
  lib.outcomes.reserve((size_t)ng * (ng - 1) / 2);

  for (int a = 0; a < ng; ++a)
    for (int b = a + 1; b < ng; ++b) {
      FlipOutcome out;
      out.a = a;
      out.b = b;
      sim::SimState s = base;
      try {
        sim::action_flip(s, groups[a].grasp, groups[b].grasp, ap);
        out.silhouette = hard_silhouette(obs::make_observation(sim::snapshot(s), op));
        out.stable = true;
      } catch (const sim::SimInstability& e) {
        out.stable = false;
        if (unstable_log)
          unstable_log->push_back("pair (" + std::to_string(a) + ", " +
                                  std::to_string(b) + ") unstable: " + e.what());
      }
      lib.outcomes.push_back(std::move(out));
    }
  return lib;
}

std::vector<std::array<double, 2>> canonical_group_targets(const GroupConfig& gc) {
  gc.validate();
  auto tpl = mesh::make_template(gc.rows, gc.cols, gc.side);
  auto groups = mesh::cluster(tpl, gc.block);
  std::vector<std::array<double, 2>> xy(groups.size());
  for (size_t i = 0; i < groups.size(); ++i)
    xy[i] = {groups[i].centroid[0], groups[i].centroid[1]};
  return xy;
}

QueryList build_query_list(const TargetSpec& tgt, const FlipLibrary& lib) {
  if (tgt.resolution != lib.obs_params.resolution)
    throw std::invalid_argument("build_query_list: target/library resolution mismatch");
  QueryList q;
  q.target = tgt.target;
  q.config = lib.config;
  q.sim_params = lib.sim_params;
  q.action_params = lib.action_params;
  q.obs_params = lib.obs_params;
  q.seed = lib.seed;

  auto anchors = canonical_group_targets(lib.config);
  q.entries.reserve(lib.outcomes.size());
  for (const auto& out : lib.outcomes) {
    QueryEntry e;
    e.a = out.a;
    e.b = out.b;
    e.silhouette = out.silhouette;
    e.score = out.stable ? similarity(out.silhouette, tgt.silhouette)
                         : -std::numeric_limits<double>::infinity();
    q.entries.push_back(std::move(e));
  }
  auto sep = [&](const QueryEntry& e) {
    double dx = anchors[e.a][0] - anchors[e.b][0];
    double dy = anchors[e.a][1] - anchors[e.b][1];
    return std::hypot(dx, dy);
  };
  std::stable_sort(q.entries.begin(), q.entries.end(),
                   [&](const QueryEntry& x, const QueryEntry& y) {
                     if (x.score != y.score) return x.score > y.score;
                     double sx = sep(x), sy = sep(y);
                     if (sx != sy) return sx > sy;
                     if (x.a != y.a) return x.a < y.a;
                     return x.b < y.b;
                   });
  return q;
}

QueryList build_query_list(const TargetSpec& tgt, const GroupConfig& gc,
                           const sim::SimParams& sp,
                           const sim::ActionParams& ap,
                           const obs::ObsParams& op, uint64_t seed) {
  return build_query_list(tgt, build_flip_library(gc, sp, ap, op, seed));
}

std::optional<std::pair<int, int>> select_pair(
    const std::vector<mesh::VertexGroup>& groups, const QueryList& list) {
  if (list.entries.empty()) throw std::invalid_argument("select_pair: empty query list");
  for (const auto& e : list.entries) {
    if (e.a < 0 || e.b < 0 || e.a >= (int)groups.size() || e.b >= (int)groups.size())
      throw std::invalid_argument("select_pair: entry group out of range");
    if (groups[e.a].visible && groups[e.b].visible)
      return std::make_pair(groups[e.a].grasp, groups[e.b].grasp);
  }
  return std::nullopt;
}

std::optional<DragAction> single_arm_step(
    const mesh::ClothMesh& m, const std::vector<mesh::VertexGroup>& groups,
    const std::vector<std::array<double, 2>>& targets) {
  if (groups.size() != targets.size())
    throw std::invalid_argument("single_arm_step: group/target count mismatch");
  int best = -1;
  double best_d = -1;
  for (size_t g = 0; g < groups.size(); ++g) {
    if (!groups[g].visible) continue;
    double d = std::hypot(groups[g].centroid[0] - targets[g][0],
                          groups[g].centroid[1] - targets[g][1]);
    if (d > best_d) {
      best_d = d;
      best = (int)g;
    }
  }
  if (best < 0) return std::nullopt;
  DragAction act;
  act.group = best;
  act.vertex = groups[best].grasp;
  act.dist = best_d;
  act.dx = targets[best][0] - m.positions[act.vertex][0];
  act.dy = targets[best][1] - m.positions[act.vertex][1];
  return act;
}

namespace {

void check_state_matches(const sim::SimState& s, const GroupConfig& gc) {
  if (s.rows != gc.rows || s.cols != gc.cols)
    throw std::invalid_argument("episode: sim state resolution differs from policy config");
  if (std::abs(s.side - gc.side) > 1e-12)
    throw std::invalid_argument("episode: sim state side differs from policy config");
}

// Mesh the policy reasons over: simulator truth, or the reconstruction of the
// current observation mapped back into world coordinates.
mesh::ClothMesh policy_mesh(const sim::SimState& s, const obs::ObsParams& op,
                            const EpisodeOptions& eo) {
  if (eo.source == MeshSource::kGroundTruth) return sim::snapshot(s);
  if (!eo.recon || !eo.recon->params || !eo.recon->cfg || !eo.recon->tpl)
    throw std::invalid_argument("episode: reconstructed source needs a ReconContext");
  if (eo.recon->tpl->rows != s.rows || eo.recon->tpl->cols != s.cols)
    throw std::invalid_argument("episode: model template does not match the sim mesh");
  auto o = obs::make_observation(sim::snapshot(s), op);
  auto m = gnn::reconstruct_with_tta(*eo.recon->params, *eo.recon->cfg,
                                     *eo.recon->tpl, o, s.params.thickness);
  double cx = 0, cy = 0;
  for (const auto& p : s.pos) {
    cx += p[0];
    cy += p[1];
  }
  cx /= s.pos.size();
  cy /= s.pos.size();
  for (auto& p : m.positions) {
    p[0] += cx;
    p[1] += cy;
  }
  return m;
}

}  // namespace

std::vector<double> run_dual_arm_episode(sim::SimState& s,
                                         const TargetSpec& tgt,
                                         const QueryList& list,
                                         const EpisodeOptions& eo,
                                         int episodes) {
  if (tgt.target != list.target)
    throw std::invalid_argument("episode: target spec and query list disagree");
  check_state_matches(s, list.config);
  if (episodes < 0) throw std::invalid_argument("episode: negative episode count");

  auto metric = [&]() {
    auto sil = hard_silhouette(obs::make_observation(sim::snapshot(s), list.obs_params));
    return tgt.target == Target::kFlat ? coverage(sil, tgt.flat_area)
                                       : similarity(sil, tgt.silhouette);
  };
  std::vector<double> trace{metric()};
  for (int ep = 0; ep < episodes; ++ep) {
    auto groups = mesh::cluster(policy_mesh(s, list.obs_params, eo), list.config.block);
    auto sel = select_pair(groups, list);
    if (sel) {
      sim::SimState saved = s;
      try {
        sim::action_flip(s, sel->first, sel->second, list.action_params);
      } catch (const sim::SimInstability&) {
        s = std::move(saved);  // solver blew up: roll back, record a no-op
      }
    }
    trace.push_back(metric());
  }
  return trace;
}

std::vector<double> run_single_arm_episode(sim::SimState& s,
                                           const obs::ObsParams& op,
                                           const sim::ActionParams& ap,
                                           const EpisodeOptions& eo,
                                           int episodes) {
  if (episodes < 0) throw std::invalid_argument("episode: negative episode count");
  GroupConfig gc{s.rows, s.cols, eo.block, s.side};
  gc.validate();
  auto targets = canonical_group_targets(gc);
  const double flat_area = make_target(Target::kFlat, op, s.side).flat_area;

  auto cov = [&]() {
    auto sil = hard_silhouette(obs::make_observation(sim::snapshot(s), op));
    return coverage(sil, flat_area);
  };
  std::vector<double> trace{cov()};
  for (int ep = 0; ep < episodes; ++ep) {
    auto m = policy_mesh(s, op, eo);
    auto groups = mesh::cluster(m, eo.block);
    auto act = single_arm_step(m, groups, targets);
    // converged (or nothing graspable): record and move on
    if (act && std::hypot(act->dx, act->dy) >= 0.01) {
      double px = m.positions[act->vertex][0];
      double py = m.positions[act->vertex][1];
      try {
        sim::action_drag(s, px, py, act->dx, act->dy, ap);
      } catch (const sim::SimInstability&) {
        // keep whatever state the solver left; coverage tells the story
      }
    }
    trace.push_back(cov());
  }
  return trace;
}

namespace {

constexpr char kMagic[8] = {'T', 'R', 'T', 'M', 'Q', 'R', 'Y', 'L'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void put_sim_params(std::ostream& os, const sim::SimParams& p) {
  put(os, p.dt);
  put(os, (int32_t)p.substeps);
  put(os, p.mass_total);
  put(os, p.k_stretch);
  put(os, p.k_shear);
  put(os, p.k_bend);
  put(os, p.bend_force_cap);
  put(os, p.damp_spring);
  put(os, p.damp_global);
  put(os, p.gravity);
  put(os, p.thickness);
  put(os, p.friction);
  put(os, p.repulsion_dist);
  put(os, p.k_repulsion);
  put(os, p.contact_friction);
  put(os, p.contact_damping);
}
sim::SimParams get_sim_params(std::istream& is) {
  sim::SimParams p;
  p.dt = get<double>(is);
  p.substeps = get<int32_t>(is);
  p.mass_total = get<double>(is);
  p.k_stretch = get<double>(is);
  p.k_shear = get<double>(is);
  p.k_bend = get<double>(is);
  p.bend_force_cap = get<double>(is);
  p.damp_spring = get<double>(is);
  p.damp_global = get<double>(is);
  p.gravity = get<double>(is);
  p.thickness = get<double>(is);
  p.friction = get<double>(is);
  p.repulsion_dist = get<double>(is);
  p.k_repulsion = get<double>(is);
  p.contact_friction = get<double>(is);
  p.contact_damping = get<double>(is);
  return p;
}

void put_action_params(std::ostream& os, const sim::ActionParams& p) {
  put(os, p.move_speed);
  put(os, p.drag_speed);
  put(os, p.drop_speed);
  put(os, p.drop_fling_time);
  put(os, p.settle_tol);
  put(os, (int32_t)p.settle_max_steps);
  put(os, p.grasp_radius_factor);
  put(os, p.hang_height);
  put(os, p.hang_pause);
  put(os, p.stretch_ratio);
  put(os, p.stretch_speed);
  put(os, p.tension_cap);
  put(os, p.swing_speed);
  put(os, p.release_height);
  put(os, p.start_back_factor);
  put(os, p.end_fwd_factor);
}
sim::ActionParams get_action_params(std::istream& is) {
  sim::ActionParams p;
  p.move_speed = get<double>(is);
  p.drag_speed = get<double>(is);
  p.drop_speed = get<double>(is);
  p.drop_fling_time = get<double>(is);
  p.settle_tol = get<double>(is);
  p.settle_max_steps = get<int32_t>(is);
  p.grasp_radius_factor = get<double>(is);
  p.hang_height = get<double>(is);
  p.hang_pause = get<double>(is);
  p.stretch_ratio = get<double>(is);
  p.stretch_speed = get<double>(is);
  p.tension_cap = get<double>(is);
  p.swing_speed = get<double>(is);
  p.release_height = get<double>(is);
  p.start_back_factor = get<double>(is);
  p.end_fwd_factor = get<double>(is);
  return p;
}

void put_obs_params(std::ostream& os, const obs::ObsParams& p) {
  put(os, (int32_t)p.resolution);
  put(os, p.edge_frac);
  put(os, p.depth_scale);
  put(os, p.sharpness);
  put(os, p.sil_margin);
  put(os, p.noise_sigma);
}
obs::ObsParams get_obs_params(std::istream& is) {
  obs::ObsParams p;
  p.resolution = get<int32_t>(is);
  p.edge_frac = get<double>(is);
  p.depth_scale = get<double>(is);
  p.sharpness = get<double>(is);
  p.sil_margin = get<double>(is);
  p.noise_sigma = get<double>(is);
  return p;
}

}  // namespace

void save_query_list(const std::string& path, const QueryList& q) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, (uint8_t)q.target);
  put(os, (int32_t)q.config.rows);
  put(os, (int32_t)q.config.cols);
  put(os, (int32_t)q.config.block);
  put(os, q.config.side);
  put_sim_params(os, q.sim_params);
  put_action_params(os, q.action_params);
  put_obs_params(os, q.obs_params);
  put(os, q.seed);
  put(os, (uint32_t)q.entries.size());
  for (const auto& e : q.entries) {
    put(os, (uint16_t)e.a);
    put(os, (uint16_t)e.b);
    put(os, e.score);
    put(os, (uint32_t)e.silhouette.size());
    if (!e.silhouette.empty())
      os.write(reinterpret_cast<const char*>(e.silhouette.data()),
               (std::streamsize)e.silhouette.size());
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

QueryList load_query_list(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a query list file: " + path);
  if (get<uint32_t>(is) != kVersion)
    throw std::runtime_error("unsupported query list version: " + path);
  QueryList q;
  q.target = (Target)get<uint8_t>(is);
  if (q.target != Target::kFlat && q.target != Target::kTriangle &&
      q.target != Target::kRectangle)
    throw std::runtime_error("corrupt query list (bad target): " + path);
  q.config.rows = get<int32_t>(is);
  q.config.cols = get<int32_t>(is);
  q.config.block = get<int32_t>(is);
  q.config.side = get<double>(is);
  q.sim_params = get_sim_params(is);
  q.action_params = get_action_params(is);
  q.obs_params = get_obs_params(is);
  q.seed = get<uint64_t>(is);
  uint32_t n = get<uint32_t>(is);
  if (!is) throw std::runtime_error("truncated query list: " + path);
  q.config.validate();
  const size_t px = (size_t)q.obs_params.resolution * q.obs_params.resolution;
  q.entries.resize(n);
  for (auto& e : q.entries) {
    e.a = get<uint16_t>(is);
    e.b = get<uint16_t>(is);
    e.score = get<double>(is);
    uint32_t len = get<uint32_t>(is);
    if (len != 0 && len != px)
      throw std::runtime_error("corrupt query list (silhouette size): " + path);
    e.silhouette.resize(len);
    if (len) is.read(reinterpret_cast<char*>(e.silhouette.data()), len);
    if (!is) throw std::runtime_error("truncated query list: " + path);
  }
  return q;
}

}  // namespace trtm::policy
