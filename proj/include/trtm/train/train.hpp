#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "trtm/gnn/gnn.hpp"
#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/obs/observation.hpp"
#include "trtm/tensor/graph.hpp"
#include "trtm/tensor/params.hpp"

namespace trtm::train {

using util::Vec3;

// Loss mix: full-mesh L1 carries implicit weight 1, the rest are scaled.
struct LossWeights {
  double key = 1.0;   // keypoint L1
  double sil = 0.5;   // silhouette mismatch
  double cham = 0.5;  // observed-point to nearest-vertex chamfer
  double regu = 1.0;  // edge-length deviation

  void validate() const;
};

// One supervised example: ground-truth mesh in the normalized (recentered)
// frame with visibility flags, and the clean rendered observation of it.
struct Sample {
  mesh::ClothMesh truth;
  obs::DepthObservation clean;
  uint8_t tier = 0;   // sim::Tier
  uint64_t seed = 0;  // generation seed; also drives the train/val split
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 3e-4;
  double lr_min_frac = 0.01;  // cosine decay floor, as a fraction of lr
  uint64_t seed = 1;
  bool augment_rotation = true;  // uniform z rotation of (mesh, observation)
  bool augment_noise = true;     // fresh sensor noise each epoch
  double noise_sigma_m = 0.002;  // meters; scaled by depth_scale internally
  double val_fraction = 0.1;     // held out by sample-seed hash
  int max_cloud_points = 2048;   // chamfer subsample cap

  void validate() const;
};

// Exact nearest vertex index for every query point, via a uniform grid of
// the given cell size. Matches brute force index-for-index (ties break to
// the lower index).
std::vector<int> nearest_vertex(const std::vector<Vec3>& verts, double cell,
                                const std::vector<Vec3>& points);

// Deterministic <= cap subsample (seeded partial shuffle; identity when the
// cloud is already small enough).
std::vector<Vec3> subsample_cloud(const std::vector<Vec3>& cloud, int cap,
                                  uint64_t seed);

// Stable train/validation split keyed on the sample seed, independent of
// dataset order or size.
bool is_validation(uint64_t sample_seed, double val_fraction);

// Rotate the sample about +z by `angle` (radians), re-render the observation
// at `op`, then add sensor noise to the depth channel. Flags are invariant.
Sample augment(const Sample& s, double angle, double noise_sigma_m,
               uint64_t noise_seed, const obs::ObsParams& op);

// What the loss tape needs besides the predicted positions node.
struct LossSpec {
  const mesh::ClothMesh* geometry = nullptr;  // edges, rest lengths, keypoints
  const std::vector<Vec3>* truth_positions = nullptr;  // null: vertex terms off
  const obs::DepthObservation* observation = nullptr;
  LossWeights weights;
  uint64_t cloud_seed = 0;
  int max_cloud_points = 2048;
};

// Node ids of each recorded term; -1 when the term is off. The chamfer
// assignment is fixed from the positions' current values, so the recorded
// program stays piecewise-smooth under replay.
struct LossIds {
  int vtx = -1, key = -1, sil = -1, cham = -1, regu = -1;
  int total = -1;
};

template <typename Real>
LossIds build_losses(ad::Graph<Real>& g, int positions, const LossSpec& spec);

// Table-style evaluation metrics for one prediction. Suffix p = position
// error (meters), f = visible-flag error rate; sil and cham are the pixel
// losses (hard silhouette mismatch rate; mean squared meters).
struct SampleMetrics {
  double vtx_p = 0, key_p = 0;
  double vtx_f = 0, key_f = 0;
  double sil = 0, cham = 0;
  double t_loss = 0;  // key_p + w.sil * sil + w.cham * cham
};

SampleMetrics eval_prediction(const mesh::ClothMesh& pred, const Sample& s,
                              const LossWeights& w);

struct EvalReport {
  SampleMetrics mean;
  std::array<SampleMetrics, 3> per_tier{};  // drag, fold, drop
  std::array<int, 3> tier_counts{};
  int count = 0;
};

EvalReport evaluate(const ad::ParamSet<float>& params,
                    const gnn::GnnConfig& cfg, const mesh::ClothMesh& tpl,
                    const std::vector<Sample>& data, const LossWeights& w,
                    bool use_tta = false);

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_total = 0, train_vtx = 0, train_key = 0;
  double train_sil = 0, train_cham = 0, train_regu = 0;
  double val_t_loss = 0, val_vtx_p = 0;  // zero when no validation split
  double seconds = 0;
};

struct TrainResult {
  ad::ParamSet<float> params;  // best validation T_loss (last epoch if no val)
  std::vector<EpochStats> log;
  int best_epoch = -1;
  bool diverged = false;  // loss went non-finite; params hold the last good
                          // epoch-boundary checkpoint
};

TrainResult train(const std::vector<Sample>& data, const gnn::GnnConfig& gcfg,
                  const TrainConfig& tcfg, const LossWeights& w,
                  const mesh::ClothMesh& tpl);

// Continues training on observations alone with the pixel losses (silhouette
// + chamfer) plus edge regularization; vertex terms need ground truth and
// stay off. Returns the mean pixel objective per epoch (index 0 = before any
// update).
std::vector<double> finetune_pixelwise(ad::ParamSet<float>& params,
                                       const gnn::GnnConfig& gcfg,
                                       const mesh::ClothMesh& tpl,
                                       const std::vector<obs::DepthObservation>& tune,
                                       int epochs, const TrainConfig& tcfg,
                                       const LossWeights& w);

// Gradient descent directly on vertex positions against the pixel objective,
// with a backtracking step so the objective never increases between accepted
// iterations. Flags are recomputed from the final geometry.
mesh::ClothMesh optimize_mesh(const mesh::ClothMesh& m,
                              const obs::DepthObservation& o, int iterations,
                              const LossWeights& w, double thickness = 0.003);

}  // namespace trtm::train
