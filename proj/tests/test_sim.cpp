#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/sim/actions.hpp"
#include "trtm/sim/sim.hpp"

using trtm::mesh::ClothMesh;
using trtm::mesh::make_template;
using trtm::sim::ActionParams;
using trtm::sim::SimParams;
using trtm::sim::SimState;
using trtm::util::Vec3;

namespace {

SimState desk_state() {
  return trtm::sim::make_state(make_template(9, 9, 0.3), SimParams{});
}

double max_z_err(const SimState& s) {
  double worst = 0;
  for (const auto& p : s.pos) worst = std::max(worst, std::abs(p[2] - s.params.thickness / 2));
  return worst;
}

double max_stretch_strain(const SimState& s) {
  double worst = 0;
  for (const auto& sp : s.springs) {
    if (sp.type != 0) continue;
    worst = std::max(worst, std::abs(norm(s.pos[sp.j] - s.pos[sp.i]) - sp.rest) / sp.rest);
  }
  return worst;
}

}  // namespace

TEST_SUITE_BEGIN("sim");

TEST_CASE("parameter validation rejects unstable setups") {
  SimParams p;
  CHECK_NOTHROW(p.validate(81));
  SimParams bad = p;
  bad.dt = 5e-3;  // past the explicit-integrator stability edge
  CHECK_THROWS_AS(bad.validate(81), std::invalid_argument);
  bad = p;
  bad.dt = -1;
  CHECK_THROWS_AS(bad.validate(81), std::invalid_argument);
  bad = p;
  bad.mass_total = 0;
  CHECK_THROWS_AS(bad.validate(81), std::invalid_argument);
  bad = p;
  bad.damp_spring = 10.0;  // overdamped: explicit damping force diverges
  CHECK_THROWS_AS(bad.validate(81), std::invalid_argument);
  // finer grid raises stiffness per vertex mass: same dt can become invalid
  SimParams fine = p;
  CHECK_THROWS_AS(fine.validate(21 * 21), std::invalid_argument);
  fine.dt = 8e-5;
  CHECK_NOTHROW(fine.validate(21 * 21));
}

TEST_CASE("flat sheet on the table is a fixed point") {
  auto s = desk_state();
  const auto ref = s.pos;
  trtm::sim::step_n(s, 2000);
  CHECK(max_speed(s) < 1e-12);
  for (int i = 0; i < s.n_vertices(); ++i) {
    CHECK(s.pos[i][0] == ref[i][0]);
    CHECK(s.pos[i][1] == ref[i][1]);
    CHECK(std::abs(s.pos[i][2] - ref[i][2]) < 1e-12);
  }
}

TEST_CASE("sheet released above the table settles flat") {
  auto s = desk_state();
  // small lift plus a 2 degree tilt so the landing is not a no-op
  const double tilt = std::tan(2.0 * M_PI / 180.0);
  for (auto& p : s.pos) p[2] += 0.01 + (p[0] + s.side / 2) * tilt;
  const bool converged = trtm::sim::settle(s, 1e-3, 40000);
  CHECK(converged);
  CHECK(max_speed(s) < 1e-3);
  CHECK(max_z_err(s) < 1e-3);
  CHECK(max_stretch_strain(s) < 0.05);
  CHECK(s.min_z_seen >= s.params.thickness / 2 - 1e-12);
}

TEST_CASE("zero gravity undamped dynamics conserve energy") {
  SimParams p;
  p.gravity = 0;
  p.damp_spring = 0;
  p.damp_global = 0;
  p.friction = 0;
  p.dt = 1e-4;  // tighter energy oscillation for the check below
  auto s = trtm::sim::make_state(make_template(9, 9, 0.3), p);
  // smooth low-frequency bump, floating well above the table
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) {
      auto& q = s.pos[r * 9 + c];
      q[2] = 0.2 + 0.012 * std::sin(M_PI * r / 8.0) * std::sin(M_PI * c / 8.0);
    }
  const double e0 = trtm::sim::energy(s).total();
  REQUIRE(e0 > 0);
  double lo = e0, hi = e0, early = 0, late = 0;
  const int checks = 200, stride = 500;  // 100000 steps = 10 s
  for (int k = 1; k <= checks; ++k) {
    trtm::sim::step_n(s, stride);
    const double e = trtm::sim::energy(s).total();
    lo = std::min(lo, e);
    hi = std::max(hi, e);
    if (k <= checks / 10) early += e;
    if (k > checks - checks / 10) late += e;
  }
  // symplectic integration: energy oscillates but must not drift
  CHECK(hi <= e0 * 1.02);
  CHECK(lo >= e0 * 0.98);
  CHECK(std::abs(late - early) / early < 0.01);
}

TEST_CASE("gripped vertices track their targets exactly") {
  auto s = desk_state();
  const Vec3 tgt{0.05, 0.02, 0.1};
  trtm::sim::set_grips(s, {{0, tgt, {0, 0, 0}}});
  trtm::sim::step_n(s, 500);
  CHECK(s.pos[0][0] == tgt[0]);
  CHECK(s.pos[0][1] == tgt[1]);
  CHECK(s.pos[0][2] == tgt[2]);
  CHECK(norm(s.vel[0]) == 0.0);

  const Vec3 from = s.pos[0];
  const Vec3 to{-0.1, 0.08, 0.05};
  trtm::sim::run_move(s, {{0, from, to, 0.04}}, 0.5);
  CHECK(norm(s.pos[0] - to) < 1e-12);
  CHECK_THROWS_AS(trtm::sim::set_grips(s, {{999, tgt, {0, 0, 0}}}), std::invalid_argument);
}

TEST_CASE("scripted perturbations are deterministic in the seed") {
  ActionParams ap;
  for (auto tier : {trtm::sim::Tier::kDrag, trtm::sim::Tier::kFold, trtm::sim::Tier::kDrop}) {
    auto a = desk_state();
    auto b = desk_state();
    trtm::sim::apply_tier(a, tier, 42, ap);
    trtm::sim::apply_tier(b, tier, 42, ap);
    bool same = true;
    for (int i = 0; i < a.n_vertices(); ++i)
      same = same && a.pos[i][0] == b.pos[i][0] && a.pos[i][1] == b.pos[i][1] &&
             a.pos[i][2] == b.pos[i][2];
    CHECK(same);

    auto c = desk_state();
    trtm::sim::apply_tier(c, tier, 43, ap);
    double diff = 0;
    for (int i = 0; i < a.n_vertices(); ++i) diff += norm(a.pos[i] - c.pos[i]);
    CHECK(diff > 1e-6);
  }
}

TEST_CASE("mirrored dynamics stay mirrored") {
  auto a = desk_state();
  auto b = desk_state();
  // asymmetric smooth bump, mirrored across the y axis
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) {
      const double bump =
          0.03 + 0.02 * std::sin(0.7 + 1.3 * r) * std::cos(0.3 + 0.9 * c) + 0.002 * r;
      a.pos[r * 9 + c][2] += bump;
      b.pos[r * 9 + (8 - c)][2] += bump;
    }
  trtm::sim::step_n(a, 4000);
  trtm::sim::step_n(b, 4000);
  double worst = 0;
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) {
      const auto& pa = a.pos[r * 9 + c];
      const auto& pb = b.pos[r * 9 + (8 - c)];
      worst = std::max({worst, std::abs(pa[0] + pb[0]), std::abs(pa[1] - pb[1]),
                        std::abs(pa[2] - pb[2])});
    }
  CHECK(worst < 1e-9);
}

TEST_CASE("drag slides the sheet along the requested direction") {
  auto s = desk_state();
  ActionParams ap;
  trtm::sim::action_drag(s, 0.15, 0.15, 0.12, 0.0, ap);  // pull the TR corner right
  Vec3 c{0, 0, 0};
  for (const auto& p : s.pos) c += p;
  c = c * (1.0 / s.n_vertices());
  CHECK(c[0] > 0.02);
  CHECK(std::abs(c[1]) < 0.05);
  CHECK(max_speed(s) < 1e-3);
  CHECK(max_stretch_strain(s) < 0.1);
  CHECK_THROWS_AS(trtm::sim::action_drag(s, 5.0, 5.0, 0.1, 0.0, ap), std::invalid_argument);
  CHECK_THROWS_AS(trtm::sim::action_drag(s, 0.0, 0.0, 0.0, 0.0, ap), std::invalid_argument);
}

TEST_CASE("fold lays one corner near the opposite corner") {
  auto s = desk_state();
  ActionParams ap;
  trtm::sim::action_fold(s, -0.15, 0.15, 0.15, -0.15, 0.1, ap);  // TL onto BR
  CHECK(max_speed(s) < 1e-3);
  // the folded corner vertex should now rest in the far quadrant, and the
  // doubled-over material forms a pile taller than a single layer
  const auto& p = s.pos[0];
  CHECK(p[0] > 0.05);
  CHECK(p[1] < -0.05);
  double zmax = 0;
  for (const auto& q : s.pos) zmax = std::max(zmax, q[2]);
  CHECK(zmax > 3 * s.params.thickness);
  CHECK(s.min_z_seen >= s.params.thickness / 2 - 1e-12);
}

TEST_CASE("drop leaves the sheet folded over itself") {
  auto s = desk_state();
  ActionParams ap;
  trtm::sim::action_drop(s, -0.15, 0.15, 0.25, 0.8, 0.0, ap);
  CHECK(max_speed(s) < 1e-3);
  double zmax = 0, zmean = 0;
  for (const auto& p : s.pos) {
    zmax = std::max(zmax, p[2]);
    zmean += p[2] / s.n_vertices();
  }
  // a layered pile, not the flat template (which sits at thickness/2)
  CHECK(zmax > 3 * s.params.thickness);
  CHECK(zmean > 1.5 * s.params.thickness);
  CHECK(max_stretch_strain(s) < 0.1);
  CHECK(s.min_z_seen >= s.params.thickness / 2 - 1e-12);
  CHECK_THROWS_AS(trtm::sim::action_drop(s, 0.0, 0.0, 0.001, 0.5, 0.0, ap),
                  std::invalid_argument);
}

TEST_CASE("flip from two adjacent corners flattens the sheet") {
  auto s = desk_state();
  ActionParams ap;
  trtm::sim::apply_tier(s, trtm::sim::Tier::kFold, 7, ap);  // start from a mess
  trtm::sim::action_flip(s, 0, 8, ap);                      // TL, TR
  CHECK(max_speed(s) < 1e-3);
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9, zmax = 0;
  for (const auto& p : s.pos) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
    zmax = std::max(zmax, p[2]);
  }
  CHECK((xmax - xmin) > 0.85 * s.side);
  CHECK((ymax - ymin) > 0.85 * s.side);
  CHECK(zmax < 4 * s.params.thickness);
  CHECK(max_stretch_strain(s) < 0.1);
  CHECK_THROWS_AS(trtm::sim::action_flip(s, 3, 3, ap), std::invalid_argument);
}

TEST_CASE("tier scripts keep the sheet intact") {
  ActionParams ap;
  for (auto tier : {trtm::sim::Tier::kDrag, trtm::sim::Tier::kFold, trtm::sim::Tier::kDrop})
    for (uint64_t seed : {1, 2, 3}) {
      auto s = desk_state();
      trtm::sim::apply_tier(s, tier, seed, ap);
      CHECK(max_stretch_strain(s) < 0.15);
      CHECK(s.min_z_seen >= s.params.thickness / 2 - 1e-12);
      CHECK(max_speed(s) < 2e-3);
    }
  CHECK(trtm::sim::tier_from_name("fold") == trtm::sim::Tier::kFold);
  CHECK_THROWS_AS(trtm::sim::tier_from_name("nope"), std::invalid_argument);
  CHECK(std::string(trtm::sim::tier_name(trtm::sim::Tier::kDrop)) == "drop");
}

TEST_SUITE_END();
