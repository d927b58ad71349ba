#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/util/vec3.hpp"

namespace trtm::sim {

using util::Vec3;

struct SimParams {
  double dt = 4e-4;       // integrator step (s)
  int substeps = 10;      // steps between script updates / settle checks
  double mass_total = 0.02;
  double k_stretch = 60.0;
  double k_shear = 20.0;
  double k_bend = 1.0;
  // bending force saturates past this, so sharp creases stay creased while
  // gentle sags are still resisted (linear springs over two hops would
  // otherwise blast folds open)
  double bend_force_cap = 0.005;
  double damp_spring = 0.05;  // along-edge damping (N*s/m)
  double damp_global = 1.5;   // velocity drag rate (1/s)
  double gravity = 9.81;
  double thickness = 0.003;   // rest plane sits at thickness/2
  double friction = 0.4;  // table Coulomb coefficient
  // self-collision: vertices are pushed off non-adjacent surface triangles
  // once closer than repulsion_dist (~1.5 cloth thicknesses)
  double repulsion_dist = 0.0045;
  double k_repulsion = 60.0;
  double contact_friction = 0.8;  // layer-on-layer Coulomb coefficient
  double contact_damping = 0.1;   // normal-approach damping at contacts (N*s/m)

  // Throws when the explicit integrator would be unstable for a sheet of
  // n_vertices, or on nonsensical values.
  void validate(int n_vertices) const;
};

struct SimInstability : std::runtime_error {
  explicit SimInstability(const std::string& what) : std::runtime_error(what) {}
};

struct Grip {
  int vertex = -1;
  Vec3 target{0, 0, 0};
  Vec3 velocity{0, 0, 0};
};

struct Spring {
  int i, j;
  double rest;
  int type;  // 0 stretch, 1 shear, 2 bend
};

// Simulation state: topology fixed at construction, positions/velocities
// evolve. Gripped vertices are kinematic: they take their target position
// and velocity exactly at the end of every step.
struct SimState {
  int rows = 0, cols = 0;
  double side = 0.0;
  std::vector<Vec3> canonical;  // flat template positions (z = 0)
  std::vector<Spring> springs;
  std::vector<int64_t> excluded_pairs;  // sorted i*N+j, i<j, spring-connected
  std::vector<int> faces;               // surface triangles, 3 indices each
  // per face: sorted vertices too close in the rest mesh to collide with it
  std::vector<std::vector<int>> face_blocked;
  double vertex_mass = 0.0;
  SimParams params;

  std::vector<Vec3> pos, vel;
  std::vector<Grip> grips;
  double time = 0.0;
  int64_t steps = 0;
  double min_z_seen = 0.0;

  int n_vertices() const { return rows * cols; }
  double spacing() const { return side / (cols - 1); }
};

// Rest state on the table: template xy, z = thickness/2, zero velocity.
SimState make_state(const mesh::ClothMesh& tpl, const SimParams& params);

void step(SimState& s);
void step_n(SimState& s, int n);

// Steps until max vertex speed < speed_tol (checked every `substeps` steps)
// or max_steps elapse. Returns true when converged.
bool settle(SimState& s, double speed_tol, int max_steps);

double max_speed(const SimState& s);

void set_grips(SimState& s, std::vector<Grip> grips);
void clear_grips(SimState& s);

struct Energy {
  double kinetic = 0, spring = 0, gravity = 0, repulsion = 0;
  double total() const { return kinetic + spring + gravity + repulsion; }
};
Energy energy(const SimState& s);

// Current positions as a ClothMesh with freshly computed visibility.
mesh::ClothMesh snapshot(const SimState& s);

}  // namespace trtm::sim
