#pragma once

#include <memory>
#include <vector>

#include "trtm/tensor/tensor.hpp"
#include "trtm/tensor/types.hpp"

namespace trtm::ad {

enum class OpKind : uint8_t {
  kLeaf,
  kMatmul,
  kConv2d,
  kAdd,
  kSub,
  kMul,
  kAddBias,
  kAddChannelBias,
  kRelu,
  kSigmoid,
  kAbs,
  kConcatCols,
  kGatherRows,
  kTileRows,
  kSegmentSoftmax,
  kSegmentWeightedSum,
  kSum,
  kMean,
  kRowMean,
  kRowsL2Norm,
  kScale,
  kL1Distance,
  kSqL2Distance,
  kReshape,
  kSoftSilhouette,
};

template <typename Real>
struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<int> inputs;
  Tensor<Real> value;
  Tensor<Real> grad;  // allocated by backward() for nodes that need it
  bool requires_grad = false;
  Real scalar = Real(0);                       // kScale factor
  std::vector<int> ints;                       // op-specific integer payload
  std::shared_ptr<const SegmentIndex> seg;     // segment ops
  std::shared_ptr<const SilhouetteParams> sil; // kSoftSilhouette
};

// Eager tape: every op computes its value when recorded, and the recorded
// program can be replayed bit-exactly (used by finite-difference checks)
// or walked backwards to accumulate gradients.
template <typename Real>
class Graph {
 public:
  using Id = int;

  Id leaf(Tensor<Real> v);

  Id matmul(Id a, Id b);
  // x: (C,H,W), k: (F,C,kh,kw) -> (F,OH,OW)
  Id conv2d(Id x, Id k, int stride, int pad);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id add_bias(Id x, Id b);           // x: (R,C), b: (C)
  Id add_channel_bias(Id x, Id b);   // x: (C,H,W), b: (C)
  Id relu(Id x);
  Id sigmoid(Id x);
  Id abs(Id x);
  Id concat_cols(const std::vector<Id>& xs);
  Id gather_rows(Id x, const std::vector<int>& idx);
  Id tile_rows(Id x, int n);         // x: (1,C) -> (n,C)
  Id segment_softmax(Id logits, std::shared_ptr<const SegmentIndex> seg);
  Id segment_weighted_sum(Id feat, Id w,
                          std::shared_ptr<const SegmentIndex> seg);
  Id sum(Id x);
  Id mean(Id x);
  Id row_mean(Id x);                 // (R,C) -> (R)
  Id rows_l2norm(Id x);              // (R,C) -> (R,1)
  Id scale(Id x, Real c);
  Id l1_distance(Id a, Id b);        // sum |a-b| -> scalar
  Id sq_l2_distance(Id a, Id b);     // sum (a-b)^2 -> scalar
  Id reshape(Id x, std::vector<int> shape);
  Id soft_silhouette(Id verts, std::shared_ptr<const SilhouetteParams> sil);

  const Tensor<Real>& value(Id id) const { return node(id).value; }
  const Tensor<Real>& grad(Id id) const;
  bool has_grad(Id id) const;
  // Leaf values may be perturbed between replays (finite differences).
  Tensor<Real>& leaf_value(Id id);

  // Recomputes every non-leaf value from the recorded program.
  void replay();
  // Seeds d(root)=1 and accumulates gradients into every node that
  // requires them. root must be scalar.
  void backward(Id root);

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

 private:
  const Node<Real>& node(Id id) const;
  Node<Real>& node(Id id);
  Id record(Node<Real> n);
  void compute(Node<Real>& n);
  void backprop(Node<Real>& n);

  std::vector<Node<Real>> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace trtm::ad
