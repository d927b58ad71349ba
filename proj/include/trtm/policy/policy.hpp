#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trtm/gnn/gnn.hpp"
#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/obs/observation.hpp"
#include "trtm/sim/actions.hpp"
#include "trtm/sim/sim.hpp"

namespace trtm::policy {

enum class Target { kFlat = 0, kTriangle = 1, kRectangle = 2 };

const char* target_name(Target t);
Target target_from_name(const std::string& name);  // throws on unknown name

// A goal silhouette plus the flip budget the dual-arm policy gets to reach
// it. Flat allows two flips; the fold targets allow one.
struct TargetSpec {
  Target target = Target::kFlat;
  int episodes = 2;
  int resolution = 0;
  std::vector<uint8_t> silhouette;  // resolution^2, values in {0,1}, centered
  double flat_area = 0.0;           // on-pixel count of the canonical flat sheet
};

// Builds the goal mask analytically from the rendered flat sheet: flat keeps
// it whole, triangle keeps the half-plane below the main diagonal, rectangle
// keeps the lower half. Fold masks are shifted so their area centroid sits at
// the image center, matching how observations are recentered.
TargetSpec make_target(Target t, const obs::ObsParams& op, double cloth_side);

// Observation silhouette thresholded to {0,1}.
std::vector<uint8_t> hard_silhouette(const obs::DepthObservation& o);

int on_area(const std::vector<uint8_t>& s);

// 1 - mismatch / max(1, area(b)): 1 exactly when the masks agree, negative
// when the mismatch outgrows the reference mask.
double similarity(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

// Visible area over the canonical flat area.
double coverage(const std::vector<uint8_t>& s, double flat_area);

// Policy-side mesh resolution and grouping. block must divide rows and cols;
// the default yields 49 single-vertex groups and 1176 unordered pairs.
struct GroupConfig {
  int rows = 7;
  int cols = 7;
  int block = 1;
  double side = 0.3;

  int group_rows() const { return rows / block; }
  int group_cols() const { return cols / block; }
  int n_groups() const { return group_rows() * group_cols(); }
  void validate() const;
};

// Settled silhouette of one flip executed from the canonical flat state.
// Unstable flips keep an empty silhouette and are ranked last.
struct FlipOutcome {
  int a = -1, b = -1;  // group indices, a < b
  bool stable = false;
  std::vector<uint8_t> silhouette;
};

// Every unordered group pair flipped once from flat under one parameter set.
// Target-independent: each query list scores these outcomes against its own
// goal mask, so one library serves all targets built with the same params.
struct FlipLibrary {
  GroupConfig config;
  sim::SimParams sim_params;
  sim::ActionParams action_params;
  obs::ObsParams obs_params;
  uint64_t seed = 0;
  std::vector<FlipOutcome> outcomes;  // row-major over (a, b), a < b
};

// Runs all n_groups-choose-2 flips. Deterministic given the parameters; the
// seed is stamped into the library (and derived query lists) as provenance.
// unstable_log, when given, receives one line per unstable pair.
FlipLibrary build_flip_library(const GroupConfig& gc, const sim::SimParams& sp,
                               const sim::ActionParams& ap,
                               const obs::ObsParams& op, uint64_t seed,
                               std::vector<std::string>* unstable_log = nullptr);

struct QueryEntry {
  int a = -1, b = -1;     // group indices, a < b
  double score = 0.0;     // similarity of the flipped silhouette to the target
  std::vector<uint8_t> silhouette;  // flipped outcome (empty when unstable)
};

// Group pairs ranked by how closely their flip outcome matches the target.
// Scores are non-increasing; ties break toward the wider canonical grip
// separation, then lower indices. Unstable pairs score -inf but stay listed.
struct QueryList {
  Target target = Target::kFlat;
  GroupConfig config;
  sim::SimParams sim_params;
  sim::ActionParams action_params;
  obs::ObsParams obs_params;
  uint64_t seed = 0;
  std::vector<QueryEntry> entries;
};

QueryList build_query_list(const TargetSpec& tgt, const FlipLibrary& lib);
QueryList build_query_list(const TargetSpec& tgt, const GroupConfig& gc,
                           const sim::SimParams& sp,
                           const sim::ActionParams& ap,
                           const obs::ObsParams& op, uint64_t seed);

// First list entry whose both groups are visible; returns their grasp
// vertices (left = entry's a). nullopt when no pair qualifies.
std::optional<std::pair<int, int>> select_pair(
    const std::vector<mesh::VertexGroup>& groups, const QueryList& list);

// Canonical group centroid xy of the flat template, indexed like cluster().
std::vector<std::array<double, 2>> canonical_group_targets(const GroupConfig& gc);

struct DragAction {
  int group = -1;
  int vertex = -1;        // grasp vertex to pick
  double dx = 0, dy = 0;  // horizontal displacement bringing it to the target
  double dist = 0;        // selection score: centroid-to-target distance
};

// Picks the visible group whose centroid strays farthest from its canonical
// target (row-major tie-break) and drags its grasp vertex home. The mesh
// supplies the grasp vertex's current position. nullopt when nothing is
// visible.
std::optional<DragAction> single_arm_step(
    const mesh::ClothMesh& m, const std::vector<mesh::VertexGroup>& groups,
    const std::vector<std::array<double, 2>>& targets);

enum class MeshSource { kGroundTruth = 0, kReconstructed = 1 };

// Model context for MeshSource::kReconstructed. The checkpoint's template
// must match the policy mesh resolution.
struct ReconContext {
  const ad::ParamSet<float>* params = nullptr;
  const gnn::GnnConfig* cfg = nullptr;
  const mesh::ClothMesh* tpl = nullptr;
};

struct EpisodeOptions {
  MeshSource source = MeshSource::kGroundTruth;
  const ReconContext* recon = nullptr;
  int block = 1;
};

// Runs up to `episodes` flips of the target's query list policy on the live
// state: observe, cluster, select the best visible pair, flip, settle.
// Returns the metric trace [initial, after each episode] (coverage for the
// flat target, similarity otherwise). Episodes with no visible pair are
// no-ops; a flip that destabilizes the solver rolls the state back and also
// records a no-op.
std::vector<double> run_dual_arm_episode(sim::SimState& s,
                                         const TargetSpec& tgt,
                                         const QueryList& list,
                                         const EpisodeOptions& eo,
                                         int episodes);

// Single-arm flattening: per episode pick the farthest-from-home visible
// group and drag it back; displacements under 1 cm are treated as converged
// and skipped. Returns the coverage trace, length episodes + 1.
std::vector<double> run_single_arm_episode(sim::SimState& s,
                                           const obs::ObsParams& op,
                                           const sim::ActionParams& ap,
                                           const EpisodeOptions& eo,
                                           int episodes = 4);

// Binary query-list format, magic TRTMQRYL, little-endian, bit-exact
// round-trip.
void save_query_list(const std::string& path, const QueryList& q);
QueryList load_query_list(const std::string& path);

}  // namespace trtm::policy
