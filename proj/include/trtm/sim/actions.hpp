#pragma once

#include <cstdint>
#include <vector>

#include "trtm/sim/sim.hpp"

namespace trtm::sim {

struct ActionParams {
  double move_speed = 0.4;   // generic grip travel (m/s)
  double drag_speed = 0.3;
  double drop_speed = 0.5;
  double drop_fling_time = 0.25;  // duration of the sideways throw before release
  double settle_tol = 1e-3;  // max vertex speed at rest (m/s)
  int settle_max_steps = 30000;
  double grasp_radius_factor = 2.0;  // max pick distance, in spacings

  // flip choreography
  double hang_height = 0.35;
  double hang_pause = 0.5;
  double stretch_ratio = 0.95;  // fraction of canonical grip distance
  double stretch_speed = 0.15;
  double tension_cap = 1.0;  // per-grip force limit while stretching (N)
  double swing_speed = 0.9;
  double release_height = 0.03;
  double start_back_factor = 0.75;  // swing start, in hang depths behind origin
  double end_fwd_factor = 0.5;      // swing end, in hang depths past origin
};

// One grip following a straight segment with an optional parabolic z arc.
struct GripMove {
  int vertex;
  Vec3 from, to;
  double arc = 0.0;
};

// Drives grips along their paths over `duration` seconds (kinematic targets
// with matching velocities), stepping the simulation. Grips stay attached at
// their end positions afterwards.
void run_move(SimState& s, const std::vector<GripMove>& moves, double duration);
void run_hold(SimState& s, double duration);

// Nearest currently visible vertex to (x, y); throws when none lies within
// max_radius.
int nearest_visible(const SimState& s, double x, double y, double max_radius);

// Net spring + gravity force the grip must resist at `vertex` (N).
double grip_load(const SimState& s, int vertex);

// Horizontal drag: pick nearest visible vertex to `point`, slide it by
// (dx, dy) at constant height, release, settle.
void action_drag(SimState& s, double px, double py, double dx, double dy,
                 const ActionParams& ap);

// Pick-arc-place fold between two surface points.
void action_fold(SimState& s, double pick_x, double pick_y, double place_x,
                 double place_y, double arc_height, const ActionParams& ap);

// Toss: lift nearest visible vertex to `height`, wait for the dangle to calm,
// then throw it sideways with velocity (fling_vx, fling_vy) while descending,
// release mid-flight, settle. The trailing material lands on top of the
// leading material, so the sheet comes to rest folded over itself.
void action_drop(SimState& s, double px, double py, double height,
                 double fling_vx, double fling_vy, const ActionParams& ap);

// Dual-arm dynamic flattening: grip two vertices, raise the sheet to hang,
// stretch the grip line toward its flat-template length, swing forward and
// down, release near the table, settle. The swing axis comes from the flat
// template: grip separation u = normalize(template[vR] - template[vL]) in the
// plane, travel direction w = rot90(u). The laid-out sheet therefore keeps a
// deterministic orientation given the pair.
void action_flip(SimState& s, int vL, int vR, const ActionParams& ap);

enum class Tier { kDrag = 0, kFold = 1, kDrop = 2 };

const char* tier_name(Tier t);
Tier tier_from_name(const std::string& name);

// Scripted randomized perturbation of a flat sheet; deterministic in `seed`.
void apply_tier(SimState& s, Tier tier, uint64_t seed, const ActionParams& ap);

}  // namespace trtm::sim
