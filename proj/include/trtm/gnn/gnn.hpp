#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/obs/observation.hpp"
#include "trtm/tensor/graph.hpp"
#include "trtm/tensor/params.hpp"

namespace trtm::gnn {

// Template-based mesh reconstruction network. A small strided conv stack
// summarizes the depth image into one global feature vector; every template
// vertex starts from [its canonical position, that feature] and the state is
// refined by rounds of attention-weighted message passing over the template
// edges, then decoded to 3-D positions in the recentered cloth frame.
struct GnnConfig {
  int resolution = 96;
  std::vector<int> channels = {16, 32, 64, 128};  // stride-2 3x3 conv blocks
  int d_v = 64;                    // vertex latent width
  int d_e = 64;                    // edge latent width
  int iterations = 8;              // message passing rounds
  bool shared_updaters = false;    // one updater reused across rounds
  bool attention = true;           // false: plain mean pooling over neighbors

  void validate() const;
  int feature_dim() const { return channels.back(); }
};

// Deterministic initialization: He-uniform weights seeded per tensor name,
// zero biases. Insertion order is the serialization order.
template <typename Real>
void init_params(const GnnConfig& cfg, uint64_t seed, ad::ParamSet<Real>& out);

// Handles into the recorded tape that callers attach losses to or inspect.
struct GnnTape {
  int image = -1;                // input leaf, (1, res, res)
  int image_feature = -1;        // encoder output, (1, channels.back())
  int edge_inputs = -1;          // leaf, (E, 4): relative position and length
  int positions = -1;            // decoded output, (N, 3)
  std::vector<int> attention_w;  // per round, (E, 1); empty when attention off
  std::vector<int> param_ids;    // leaf ids aligned with ParamSet order
  bool suspicious_input = false; // covered fraction too high to be normalized
};

template <typename Real>
GnnTape build_forward(ad::Graph<Real>& g, const ad::ParamSet<Real>& params,
                      const GnnConfig& cfg, const mesh::ClothMesh& tpl,
                      const std::vector<float>& image);

// Full inference: forward pass, then visibility flags from the predicted
// geometry. The observation's depth channel is the network input.
mesh::ClothMesh reconstruct(const ad::ParamSet<float>& params,
                            const GnnConfig& cfg, const mesh::ClothMesh& tpl,
                            const obs::DepthObservation& o,
                            double thickness = 0.003);

// Self-supervised selection target: silhouette mismatch plus RMS chamfer
// between the predicted mesh and the observation, both dimensionless.
double pixel_score(const mesh::ClothMesh& m, const obs::DepthObservation& o,
                   double sil_weight = 0.5, double cham_weight = 0.5);

// Test-time augmentation: reconstruct all eight 45° rotations of the
// observation, map each prediction back, keep the best-scoring candidate
// (ties resolve to the smallest rotation index).
mesh::ClothMesh reconstruct_with_tta(const ad::ParamSet<float>& params,
                                     const GnnConfig& cfg,
                                     const mesh::ClothMesh& tpl,
                                     const obs::DepthObservation& o,
                                     double thickness = 0.003,
                                     int* chosen_k = nullptr,
                                     std::array<double, 8>* scores = nullptr);

}  // namespace trtm::gnn
