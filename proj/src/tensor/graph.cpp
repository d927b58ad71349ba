#include "trtm/tensor/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "trtm/kernels/kernels.hpp"
#include "trtm/tensor/soft_silhouette.hpp"

namespace trtm::ad {
namespace {

const kern::Table<float>& table(float) { return kern::f32(); }
const kern::Table<double>& table(double) { return kern::f64(); }

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument(what);
}

template <typename Real>
void require_rank(const Tensor<Real>& t, int rank, const char* op) {
  if (t.rank() != rank)
    fail(std::string(op) + ": expected rank " + std::to_string(rank) +
         ", got shape " + t.shape_str());
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b,
                        const char* op) {
  if (!a.same_shape(b))
    fail(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
         b.shape_str());
}

// (C,H,W) <-> (H,W,C)
template <typename Real>
void chw_to_hwc(const Real* src, Real* dst, int c, int h, int w) {
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[(static_cast<long>(y) * w + x) * c + ch] =
            src[(static_cast<long>(ch) * h + y) * w + x];
}

template <typename Real>
void hwc_to_chw(const Real* src, Real* dst, int c, int h, int w) {
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[(static_cast<long>(ch) * h + y) * w + x] =
            src[(static_cast<long>(y) * w + x) * c + ch];
}

// (F,C,kh,kw) <-> (kh,kw,C,F)
template <typename Real>
void kern_to_hwio(const Real* src, Real* dst, int f, int c, int kh, int kw) {
  for (int of = 0; of < f; ++of)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < kh; ++y)
        for (int x = 0; x < kw; ++x)
          dst[((static_cast<long>(y) * kw + x) * c + ch) * f + of] =
              src[((static_cast<long>(of) * c + ch) * kh + y) * kw + x];
}

template <typename Real>
void hwio_to_kern(const Real* src, Real* dst, int f, int c, int kh, int kw) {
  for (int of = 0; of < f; ++of)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < kh; ++y)
        for (int x = 0; x < kw; ++x)
          dst[((static_cast<long>(of) * c + ch) * kh + y) * kw + x] =
              src[((static_cast<long>(y) * kw + x) * c + ch) * f + of];
}

template <typename Real>
Real stable_sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

template <typename Real>
const Node<Real>& Graph<Real>::node(Id id) const {
  if (id < 0 || id >= size()) fail("graph: node id out of range");
  return nodes_[id];
}

template <typename Real>
Node<Real>& Graph<Real>::node(Id id) {
  if (id < 0 || id >= size()) fail("graph: node id out of range");
  return nodes_[id];
}

template <typename Real>
const Tensor<Real>& Graph<Real>::grad(Id id) const {
  const Node<Real>& n = node(id);
  if (n.grad.data.empty()) fail("graph: no gradient computed for node");
  return n.grad;
}

template <typename Real>
bool Graph<Real>::has_grad(Id id) const {
  return !node(id).grad.data.empty();
}

template <typename Real>
Tensor<Real>& Graph<Real>::leaf_value(Id id) {
  Node<Real>& n = node(id);
  if (n.kind != OpKind::kLeaf) fail("graph: only leaf values are mutable");
  return n.value;
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::record(Node<Real> n) {
  for (Id in : n.inputs)
    if (node(in).requires_grad) n.requires_grad = true;
  compute(n);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::leaf(Tensor<Real> v) {
  if (v.data.empty()) fail("leaf: empty tensor");
  Node<Real> n;
  n.kind = OpKind::kLeaf;
  n.requires_grad = v.requires_grad;
  n.value = std::move(v);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

// ------------------------------------------------------------- op builders

template <typename Real>
typename Graph<Real>::Id Graph<Real>::matmul(Id a, Id b) {
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.shape[1] != bv.shape[0])
    fail("matmul: inner dims disagree, " + av.shape_str() + " * " +
         bv.shape_str());
  Node<Real> n;
  n.kind = OpKind::kMatmul;
  n.inputs = {a, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::conv2d(Id x, Id k, int stride, int pad) {
  const auto& xv = node(x).value;
  const auto& kv = node(k).value;
  require_rank(xv, 3, "conv2d");
  require_rank(kv, 4, "conv2d");
  if (kv.shape[1] != xv.shape[0])
    fail("conv2d: kernel channels " + kv.shape_str() + " do not match input " +
         xv.shape_str());
  if (stride < 1 || pad < 0) fail("conv2d: bad stride/pad");
  int oh = (xv.shape[1] + 2 * pad - kv.shape[2]) / stride + 1;
  int ow = (xv.shape[2] + 2 * pad - kv.shape[3]) / stride + 1;
  if (oh < 1 || ow < 1) fail("conv2d: empty output");
  Node<Real> n;
  n.kind = OpKind::kConv2d;
  n.inputs = {x, k};
  n.ints = {stride, pad, oh, ow};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::add(Id a, Id b) {
  require_same_shape(node(a).value, node(b).value, "add");
  Node<Real> n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sub(Id a, Id b) {
  require_same_shape(node(a).value, node(b).value, "sub");
  Node<Real> n;
  n.kind = OpKind::kSub;
  n.inputs = {a, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::mul(Id a, Id b) {
  require_same_shape(node(a).value, node(b).value, "mul");
  Node<Real> n;
  n.kind = OpKind::kMul;
  n.inputs = {a, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::add_bias(Id x, Id b) {
  const auto& xv = node(x).value;
  const auto& bv = node(b).value;
  require_rank(xv, 2, "add_bias");
  require_rank(bv, 1, "add_bias");
  if (bv.shape[0] != xv.shape[1])
    fail("add_bias: bias length does not match columns");
  Node<Real> n;
  n.kind = OpKind::kAddBias;
  n.inputs = {x, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::add_channel_bias(Id x, Id b) {
  const auto& xv = node(x).value;
  const auto& bv = node(b).value;
  require_rank(xv, 3, "add_channel_bias");
  require_rank(bv, 1, "add_channel_bias");
  if (bv.shape[0] != xv.shape[0])
    fail("add_channel_bias: bias length does not match channels");
  Node<Real> n;
  n.kind = OpKind::kAddChannelBias;
  n.inputs = {x, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::relu(Id x) {
  Node<Real> n;
  n.kind = OpKind::kRelu;
  n.inputs = {x};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sigmoid(Id x) {
  Node<Real> n;
  n.kind = OpKind::kSigmoid;
  n.inputs = {x};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::abs(Id x) {
  Node<Real> n;
  n.kind = OpKind::kAbs;
  n.inputs = {x};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::concat_cols(const std::vector<Id>& xs) {
  if (xs.empty()) fail("concat_cols: no inputs");
  int rows = -1;
  for (Id id : xs) {
    const auto& v = node(id).value;
    require_rank(v, 2, "concat_cols");
    if (rows < 0) rows = v.shape[0];
    if (v.shape[0] != rows) fail("concat_cols: row counts disagree");
  }
  Node<Real> n;
  n.kind = OpKind::kConcatCols;
  n.inputs = xs;
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::gather_rows(Id x,
                                                  const std::vector<int>& idx) {
  const auto& xv = node(x).value;
  require_rank(xv, 2, "gather_rows");
  if (idx.empty()) fail("gather_rows: empty index list");
  for (int i : idx)
    if (i < 0 || i >= xv.shape[0]) fail("gather_rows: index out of range");
  Node<Real> n;
  n.kind = OpKind::kGatherRows;
  n.inputs = {x};
  n.ints = idx;
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::tile_rows(Id x, int count) {
  const auto& xv = node(x).value;
  require_rank(xv, 2, "tile_rows");
  if (xv.shape[0] != 1) fail("tile_rows: input must have one row");
  if (count < 1) fail("tile_rows: count must be >= 1");
  Node<Real> n;
  n.kind = OpKind::kTileRows;
  n.inputs = {x};
  n.ints = {count};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::segment_softmax(
    Id logits, std::shared_ptr<const SegmentIndex> seg) {
  const auto& lv = node(logits).value;
  require_rank(lv, 2, "segment_softmax");
  if (lv.shape[1] != 1) fail("segment_softmax: logits must be (E,1)");
  seg->validate();
  if (seg->total() != lv.shape[0])
    fail("segment_softmax: segment total does not match rows");
  Node<Real> n;
  n.kind = OpKind::kSegmentSoftmax;
  n.inputs = {logits};
  n.seg = std::move(seg);
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::segment_weighted_sum(
    Id feat, Id w, std::shared_ptr<const SegmentIndex> seg) {
  const auto& fv = node(feat).value;
  const auto& wv = node(w).value;
  require_rank(fv, 2, "segment_weighted_sum");
  require_rank(wv, 2, "segment_weighted_sum");
  if (wv.shape[1] != 1 || wv.shape[0] != fv.shape[0])
    fail("segment_weighted_sum: weights must be (E,1) matching features");
  seg->validate();
  if (seg->total() != fv.shape[0])
    fail("segment_weighted_sum: segment total does not match rows");
  Node<Real> n;
  n.kind = OpKind::kSegmentWeightedSum;
  n.inputs = {feat, w};
  n.seg = std::move(seg);
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sum(Id x) {
  Node<Real> n;
  n.kind = OpKind::kSum;
  n.inputs = {x};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::mean(Id x) {
  Node<Real> n;
  n.kind = OpKind::kMean;
  n.inputs = {x};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::row_mean(Id x) {
  require_rank(node(x).value, 2, "row_mean");
  Node<Real> n;
  n.kind = OpKind::kRowMean;
  n.inputs = {x};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::rows_l2norm(Id x) {
  require_rank(node(x).value, 2, "rows_l2norm");
  Node<Real> n;
  n.kind = OpKind::kRowsL2Norm;
  n.inputs = {x};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::scale(Id x, Real c) {
  Node<Real> n;
  n.kind = OpKind::kScale;
  n.inputs = {x};
  n.scalar = c;
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::l1_distance(Id a, Id b) {
  require_same_shape(node(a).value, node(b).value, "l1_distance");
  Node<Real> n;
  n.kind = OpKind::kL1Distance;
  n.inputs = {a, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sq_l2_distance(Id a, Id b) {
  require_same_shape(node(a).value, node(b).value, "sq_l2_distance");
  Node<Real> n;
  n.kind = OpKind::kSqL2Distance;
  n.inputs = {a, b};
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::reshape(Id x, std::vector<int> shape) {
  int64_t n_new = Tensor<Real>::checked_numel(shape);
  if (n_new != node(x).value.numel()) fail("reshape: element count changes");
  Node<Real> n;
  n.kind = OpKind::kReshape;
  n.inputs = {x};
  n.ints = shape;
  return record(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::soft_silhouette(
    Id verts, std::shared_ptr<const SilhouetteParams> sil) {
  const auto& vv = node(verts).value;
  require_rank(vv, 2, "soft_silhouette");
  if (vv.shape[1] != 3) fail("soft_silhouette: vertices must be (V,3)");
  sil->validate(vv.shape[0]);
  Node<Real> n;
  n.kind = OpKind::kSoftSilhouette;
  n.inputs = {verts};
  n.sil = std::move(sil);
  return record(std::move(n));
}

// ----------------------------------------------------------------- forward

template <typename Real>
void Graph<Real>::compute(Node<Real>& n) {
  const auto& kt = table(Real(0));
  switch (n.kind) {
    case OpKind::kLeaf:
      return;
    case OpKind::kMatmul: {
      const auto& a = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      int m = a.shape[0], k = a.shape[1], c = b.shape[1];
      n.value = Tensor<Real>({m, c});
      kt.gemm_nn(a.data.data(), b.data.data(), n.value.data.data(), m, c, k);
      return;
    }
    case OpKind::kConv2d: {
      const auto& x = node(n.inputs[0]).value;
      const auto& k = node(n.inputs[1]).value;
      int ic = x.shape[0], ih = x.shape[1], iw = x.shape[2];
      int oc = k.shape[0], kh = k.shape[2], kw = k.shape[3];
      int stride = n.ints[0], pad = n.ints[1], oh = n.ints[2], ow = n.ints[3];
      std::vector<Real> xh(x.data.size()), kr(k.data.size());
      chw_to_hwc(x.data.data(), xh.data(), ic, ih, iw);
      kern_to_hwio(k.data.data(), kr.data(), oc, ic, kh, kw);
      std::vector<Real> yh(static_cast<long>(oh) * ow * oc);
      kt.conv2d_hwc(xh.data(), kr.data(), yh.data(), ih, iw, ic, oc, kh, kw,
                    stride, pad, oh, ow);
      n.value = Tensor<Real>({oc, oh, ow});
      hwc_to_chw(yh.data(), n.value.data.data(), oc, oh, ow);
      return;
    }
    case OpKind::kAdd: {
      const auto& a = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      n.value = Tensor<Real>(a.shape);
      kt.add(n.value.data.data(), a.data.data(), b.data.data(),
             static_cast<int>(a.numel()));
      return;
    }
    case OpKind::kSub: {
      const auto& a = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      n.value = Tensor<Real>(a.shape);
      kt.sub(n.value.data.data(), a.data.data(), b.data.data(),
             static_cast<int>(a.numel()));
      return;
    }
    case OpKind::kMul: {
      const auto& a = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      n.value = Tensor<Real>(a.shape);
      kt.mul(n.value.data.data(), a.data.data(), b.data.data(),
             static_cast<int>(a.numel()));
      return;
    }
    case OpKind::kAddBias: {
      const auto& x = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      int rows = x.shape[0], cols = x.shape[1];
      n.value = Tensor<Real>(x.shape);
      for (int r = 0; r < rows; ++r)
        kt.add(n.value.data.data() + static_cast<long>(r) * cols,
               x.data.data() + static_cast<long>(r) * cols, b.data.data(),
               cols);
      return;
    }
    case OpKind::kAddChannelBias: {
      const auto& x = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      int c = x.shape[0];
      long hw = static_cast<long>(x.shape[1]) * x.shape[2];
      n.value = Tensor<Real>(x.shape);
      for (int ch = 0; ch < c; ++ch) {
        const Real* src = x.data.data() + ch * hw;
        Real* dst = n.value.data.data() + ch * hw;
        Real bias = b.data[ch];
        for (long i = 0; i < hw; ++i) dst[i] = src[i] + bias;
      }
      return;
    }
    case OpKind::kRelu: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>(x.shape);
      kt.relu(n.value.data.data(), x.data.data(), static_cast<int>(x.numel()));
      return;
    }
    case OpKind::kSigmoid: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>(x.shape);
      for (int64_t i = 0; i < x.numel(); ++i)
        n.value.data[i] = stable_sigmoid(x.data[i]);
      return;
    }
    case OpKind::kAbs: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>(x.shape);
      for (int64_t i = 0; i < x.numel(); ++i)
        n.value.data[i] = std::abs(x.data[i]);
      return;
    }
    case OpKind::kConcatCols: {
      int rows = node(n.inputs[0]).value.shape[0];
      int cols = 0;
      for (Id in : n.inputs) cols += node(in).value.shape[1];
      n.value = Tensor<Real>({rows, cols});
      int off = 0;
      for (Id in : n.inputs) {
        const auto& v = node(in).value;
        int c = v.shape[1];
        for (int r = 0; r < rows; ++r)
          std::copy_n(v.data.data() + static_cast<long>(r) * c, c,
                      n.value.data.data() + static_cast<long>(r) * cols + off);
        off += c;
      }
      return;
    }
    case OpKind::kGatherRows: {
      const auto& x = node(n.inputs[0]).value;
      int cols = x.shape[1];
      int count = static_cast<int>(n.ints.size());
      n.value = Tensor<Real>({count, cols});
      for (int r = 0; r < count; ++r)
        std::copy_n(x.data.data() + static_cast<long>(n.ints[r]) * cols, cols,
                    n.value.data.data() + static_cast<long>(r) * cols);
      return;
    }
    case OpKind::kTileRows: {
      const auto& x = node(n.inputs[0]).value;
      int cols = x.shape[1], count = n.ints[0];
      n.value = Tensor<Real>({count, cols});
      for (int r = 0; r < count; ++r)
        std::copy_n(x.data.data(), cols,
                    n.value.data.data() + static_cast<long>(r) * cols);
      return;
    }
    case OpKind::kSegmentSoftmax: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>(x.shape);
      const auto& off = n.seg->offsets;
      for (size_t s = 0; s + 1 < off.size(); ++s) {
        Real mx = x.data[off[s]];
        for (int i = off[s] + 1; i < off[s + 1]; ++i)
          mx = std::max(mx, x.data[i]);
        Real total = Real(0);
        for (int i = off[s]; i < off[s + 1]; ++i) {
          Real e = std::exp(x.data[i] - mx);
          n.value.data[i] = e;
          total += e;
        }
        for (int i = off[s]; i < off[s + 1]; ++i) n.value.data[i] /= total;
      }
      return;
    }
    case OpKind::kSegmentWeightedSum: {
      const auto& f = node(n.inputs[0]).value;
      const auto& w = node(n.inputs[1]).value;
      int cols = f.shape[1];
      const auto& off = n.seg->offsets;
      int segs = static_cast<int>(off.size()) - 1;
      n.value = Tensor<Real>({segs, cols});
      for (int s = 0; s < segs; ++s) {
        Real* out = n.value.data.data() + static_cast<long>(s) * cols;
        for (int i = off[s]; i < off[s + 1]; ++i)
          kt.axpy(out, w.data[i], f.data.data() + static_cast<long>(i) * cols,
                  cols);
      }
      return;
    }
    case OpKind::kSum: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>({1});
      n.value.data[0] = kt.sum(x.data.data(), static_cast<int>(x.numel()));
      return;
    }
    case OpKind::kMean: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>({1});
      n.value.data[0] =
          kt.sum(x.data.data(), static_cast<int>(x.numel())) / Real(x.numel());
      return;
    }
    case OpKind::kRowMean: {
      const auto& x = node(n.inputs[0]).value;
      int rows = x.shape[0], cols = x.shape[1];
      n.value = Tensor<Real>({rows});
      for (int r = 0; r < rows; ++r)
        n.value.data[r] =
            kt.sum(x.data.data() + static_cast<long>(r) * cols, cols) /
            Real(cols);
      return;
    }
    case OpKind::kRowsL2Norm: {
      const auto& x = node(n.inputs[0]).value;
      int rows = x.shape[0], cols = x.shape[1];
      n.value = Tensor<Real>({rows, 1});
      for (int r = 0; r < rows; ++r) {
        const Real* row = x.data.data() + static_cast<long>(r) * cols;
        n.value.data[r] = std::sqrt(kt.dot(row, row, cols));
      }
      return;
    }
    case OpKind::kScale: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>(x.shape);
      kt.scale(n.value.data.data(), x.data.data(), n.scalar,
               static_cast<int>(x.numel()));
      return;
    }
    case OpKind::kL1Distance: {
      const auto& a = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      n.value = Tensor<Real>({1});
      n.value.data[0] = kt.absdiff_sum(a.data.data(), b.data.data(),
                                       static_cast<int>(a.numel()));
      return;
    }
    case OpKind::kSqL2Distance: {
      const auto& a = node(n.inputs[0]).value;
      const auto& b = node(n.inputs[1]).value;
      n.value = Tensor<Real>({1});
      n.value.data[0] = kt.sqdiff_sum(a.data.data(), b.data.data(),
                                      static_cast<int>(a.numel()));
      return;
    }
    case OpKind::kReshape: {
      const auto& x = node(n.inputs[0]).value;
      n.value = Tensor<Real>(n.ints, x.data);
      return;
    }
    case OpKind::kSoftSilhouette: {
      const auto& v = node(n.inputs[0]).value;
      soft_silhouette_forward(v, *n.sil, n.value);
      return;
    }
  }
  fail("graph: unknown op");
}

// ---------------------------------------------------------------- backward

template <typename Real>
void Graph<Real>::backprop(Node<Real>& n) {
  const auto& kt = table(Real(0));
  const Tensor<Real>& dy = n.grad;
  auto g = [&](int slot) -> Tensor<Real>* {
    Node<Real>& in = node(n.inputs[slot]);
    return in.requires_grad ? &in.grad : nullptr;
  };
  auto v = [&](int slot) -> const Tensor<Real>& {
    return node(n.inputs[slot]).value;
  };

  switch (n.kind) {
    case OpKind::kLeaf:
      return;
    case OpKind::kMatmul: {
      const auto& a = v(0);
      const auto& b = v(1);
      int m = a.shape[0], k = a.shape[1], c = b.shape[1];
      if (auto* da = g(0)) {
        std::vector<Real> tmp(static_cast<long>(m) * k);
        kt.gemm_nt(dy.data.data(), b.data.data(), tmp.data(), m, k, c);
        kt.add_into(da->data.data(), tmp.data(), m * k);
      }
      if (auto* db = g(1)) {
        std::vector<Real> tmp(static_cast<long>(k) * c);
        kt.gemm_tn(a.data.data(), dy.data.data(), tmp.data(), k, c, m);
        kt.add_into(db->data.data(), tmp.data(), k * c);
      }
      return;
    }
    case OpKind::kConv2d: {
      const auto& x = v(0);
      const auto& k = v(1);
      int ic = x.shape[0], ih = x.shape[1], iw = x.shape[2];
      int oc = k.shape[0], kh = k.shape[2], kw = k.shape[3];
      int stride = n.ints[0], pad = n.ints[1], oh = n.ints[2], ow = n.ints[3];
      std::vector<Real> dyh(dy.data.size());
      chw_to_hwc(dy.data.data(), dyh.data(), oc, oh, ow);
      if (auto* dx = g(0)) {
        std::vector<Real> kr(k.data.size()), dxh(x.data.size()),
            dxc(x.data.size());
        kern_to_hwio(k.data.data(), kr.data(), oc, ic, kh, kw);
        kt.conv2d_hwc_bwd_x(dxh.data(), kr.data(), dyh.data(), ih, iw, ic, oc,
                            kh, kw, stride, pad, oh, ow);
        hwc_to_chw(dxh.data(), dxc.data(), ic, ih, iw);
        kt.add_into(dx->data.data(), dxc.data(), static_cast<int>(x.numel()));
      }
      if (auto* dk = g(1)) {
        std::vector<Real> xh(x.data.size()), dkr(k.data.size()),
            dkc(k.data.size());
        chw_to_hwc(x.data.data(), xh.data(), ic, ih, iw);
        kt.conv2d_hwc_bwd_k(xh.data(), dkr.data(), dyh.data(), ih, iw, ic, oc,
                            kh, kw, stride, pad, oh, ow);
        hwio_to_kern(dkr.data(), dkc.data(), oc, ic, kh, kw);
        kt.add_into(dk->data.data(), dkc.data(), static_cast<int>(k.numel()));
      }
      return;
    }
    case OpKind::kAdd: {
      int count = static_cast<int>(dy.numel());
      if (auto* da = g(0)) kt.add_into(da->data.data(), dy.data.data(), count);
      if (auto* db = g(1)) kt.add_into(db->data.data(), dy.data.data(), count);
      return;
    }
    case OpKind::kSub: {
      int count = static_cast<int>(dy.numel());
      if (auto* da = g(0)) kt.add_into(da->data.data(), dy.data.data(), count);
      if (auto* db = g(1)) kt.axpy(db->data.data(), Real(-1), dy.data.data(), count);
      return;
    }
    case OpKind::kMul: {
      int count = static_cast<int>(dy.numel());
      const auto& a = v(0);
      const auto& b = v(1);
      std::vector<Real> tmp(count);
      if (auto* da = g(0)) {
        kt.mul(tmp.data(), dy.data.data(), b.data.data(), count);
        kt.add_into(da->data.data(), tmp.data(), count);
      }
      if (auto* db = g(1)) {
        kt.mul(tmp.data(), dy.data.data(), a.data.data(), count);
        kt.add_into(db->data.data(), tmp.data(), count);
      }
      return;
    }
    case OpKind::kAddBias: {
      int rows = dy.shape[0], cols = dy.shape[1];
      if (auto* dx = g(0))
        kt.add_into(dx->data.data(), dy.data.data(), rows * cols);
      if (auto* db = g(1))
        for (int r = 0; r < rows; ++r)
          kt.add_into(db->data.data(),
                      dy.data.data() + static_cast<long>(r) * cols, cols);
      return;
    }
    case OpKind::kAddChannelBias: {
      int c = dy.shape[0];
      long hw = static_cast<long>(dy.shape[1]) * dy.shape[2];
      if (auto* dx = g(0))
        kt.add_into(dx->data.data(), dy.data.data(),
                    static_cast<int>(dy.numel()));
      if (auto* db = g(1))
        for (int ch = 0; ch < c; ++ch)
          db->data[ch] +=
              kt.sum(dy.data.data() + ch * hw, static_cast<int>(hw));
      return;
    }
    case OpKind::kRelu: {
      if (auto* dx = g(0)) {
        int count = static_cast<int>(dy.numel());
        std::vector<Real> tmp(count);
        kt.relu_bwd(tmp.data(), v(0).data.data(), dy.data.data(), count);
        kt.add_into(dx->data.data(), tmp.data(), count);
      }
      return;
    }
    case OpKind::kSigmoid: {
      if (auto* dx = g(0)) {
        for (int64_t i = 0; i < dy.numel(); ++i) {
          Real y = n.value.data[i];
          dx->data[i] += dy.data[i] * y * (Real(1) - y);
        }
      }
      return;
    }
    case OpKind::kAbs: {
      if (auto* dx = g(0)) {
        const auto& x = v(0);
        for (int64_t i = 0; i < dy.numel(); ++i) {
          if (x.data[i] > Real(0))
            dx->data[i] += dy.data[i];
          else if (x.data[i] < Real(0))
            dx->data[i] -= dy.data[i];
        }
      }
      return;
    }
    case OpKind::kConcatCols: {
      int rows = dy.shape[0], cols = dy.shape[1];
      int off = 0;
      for (size_t s = 0; s < n.inputs.size(); ++s) {
        int c = node(n.inputs[s]).value.shape[1];
        if (auto* dx = g(static_cast<int>(s))) {
          for (int r = 0; r < rows; ++r)
            kt.add_into(dx->data.data() + static_cast<long>(r) * c,
                        dy.data.data() + static_cast<long>(r) * cols + off, c);
        }
        off += c;
      }
      return;
    }
    case OpKind::kGatherRows: {
      if (auto* dx = g(0)) {
        int cols = dx->shape[1];
        for (size_t r = 0; r < n.ints.size(); ++r)
          kt.add_into(dx->data.data() + static_cast<long>(n.ints[r]) * cols,
                      dy.data.data() + static_cast<long>(r) * cols, cols);
      }
      return;
    }
    case OpKind::kTileRows: {
      if (auto* dx = g(0)) {
        int cols = dx->shape[1];
        for (int r = 0; r < n.ints[0]; ++r)
          kt.add_into(dx->data.data(),
                      dy.data.data() + static_cast<long>(r) * cols, cols);
      }
      return;
    }
    case OpKind::kSegmentSoftmax: {
      if (auto* dx = g(0)) {
        const auto& off = n.seg->offsets;
        for (size_t s = 0; s + 1 < off.size(); ++s) {
          Real dot = Real(0);
          for (int i = off[s]; i < off[s + 1]; ++i)
            dot += n.value.data[i] * dy.data[i];
          for (int i = off[s]; i < off[s + 1]; ++i)
            dx->data[i] += n.value.data[i] * (dy.data[i] - dot);
        }
      }
      return;
    }
    case OpKind::kSegmentWeightedSum: {
      const auto& f = v(0);
      const auto& w = v(1);
      int cols = f.shape[1];
      const auto& off = n.seg->offsets;
      int segs = static_cast<int>(off.size()) - 1;
      Tensor<Real>* df = g(0);
      Tensor<Real>* dw = g(1);
      for (int s = 0; s < segs; ++s) {
        const Real* drow = dy.data.data() + static_cast<long>(s) * cols;
        for (int i = off[s]; i < off[s + 1]; ++i) {
          if (df)
            kt.axpy(df->data.data() + static_cast<long>(i) * cols, w.data[i],
                    drow, cols);
          if (dw)
            dw->data[i] +=
                kt.dot(f.data.data() + static_cast<long>(i) * cols, drow, cols);
        }
      }
      return;
    }
    case OpKind::kSum: {
      if (auto* dx = g(0)) {
        Real s = dy.data[0];
        for (auto& gi : dx->data) gi += s;
      }
      return;
    }
    case OpKind::kMean: {
      if (auto* dx = g(0)) {
        Real s = dy.data[0] / Real(dx->numel());
        for (auto& gi : dx->data) gi += s;
      }
      return;
    }
    case OpKind::kRowMean: {
      if (auto* dx = g(0)) {
        int rows = dx->shape[0], cols = dx->shape[1];
        for (int r = 0; r < rows; ++r) {
          Real s = dy.data[r] / Real(cols);
          Real* row = dx->data.data() + static_cast<long>(r) * cols;
          for (int c = 0; c < cols; ++c) row[c] += s;
        }
      }
      return;
    }
    case OpKind::kRowsL2Norm: {
      if (auto* dx = g(0)) {
        const auto& x = v(0);
        int rows = x.shape[0], cols = x.shape[1];
        for (int r = 0; r < rows; ++r) {
          Real norm = std::max(n.value.data[r], Real(1e-12));
          Real s = dy.data[r] / norm;
          kt.axpy(dx->data.data() + static_cast<long>(r) * cols, s,
                  x.data.data() + static_cast<long>(r) * cols, cols);
        }
      }
      return;
    }
    case OpKind::kScale: {
      if (auto* dx = g(0))
        kt.axpy(dx->data.data(), n.scalar, dy.data.data(),
                static_cast<int>(dy.numel()));
      return;
    }
    case OpKind::kL1Distance: {
      const auto& a = v(0);
      const auto& b = v(1);
      Real s = dy.data[0];
      Tensor<Real>* da = g(0);
      Tensor<Real>* db = g(1);
      for (int64_t i = 0; i < a.numel(); ++i) {
        Real d = a.data[i] - b.data[i];
        Real sg = d > Real(0) ? s : (d < Real(0) ? -s : Real(0));
        if (da) da->data[i] += sg;
        if (db) db->data[i] -= sg;
      }
      return;
    }
    case OpKind::kSqL2Distance: {
      const auto& a = v(0);
      const auto& b = v(1);
      Real s = Real(2) * dy.data[0];
      Tensor<Real>* da = g(0);
      Tensor<Real>* db = g(1);
      for (int64_t i = 0; i < a.numel(); ++i) {
        Real d = s * (a.data[i] - b.data[i]);
        if (da) da->data[i] += d;
        if (db) db->data[i] -= d;
      }
      return;
    }
    case OpKind::kReshape: {
      if (auto* dx = g(0))
        kt.add_into(dx->data.data(), dy.data.data(),
                    static_cast<int>(dy.numel()));
      return;
    }
    case OpKind::kSoftSilhouette: {
      if (auto* dv = g(0))
        soft_silhouette_backward(v(0), *n.sil, n.value, dy, *dv);
      return;
    }
  }
  fail("graph: unknown op in backward");
}

template <typename Real>
void Graph<Real>::replay() {
  for (auto& n : nodes_)
    if (n.kind != OpKind::kLeaf) compute(n);
}

template <typename Real>
void Graph<Real>::backward(Id root) {
  Node<Real>& r = node(root);
  if (r.value.numel() != 1) fail("backward: root must be scalar");
  if (!r.requires_grad)
    fail("backward: root does not depend on any differentiable leaf");
  for (auto& n : nodes_) {
    if (n.requires_grad)
      n.grad = Tensor<Real>(n.value.shape);
    else
      n.grad = Tensor<Real>();
  }
  r.grad.data[0] = Real(1);
  for (int i = root; i >= 0; --i)
    if (nodes_[i].requires_grad && nodes_[i].kind != OpKind::kLeaf)
      backprop(nodes_[i]);
}

template class Graph<float>;
template class Graph<double>;

}  // namespace trtm::ad
