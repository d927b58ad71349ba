#include "trtm/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "trtm/tensor/graph.hpp"
#include "trtm/util/rng.hpp"

namespace trtm::ad {
namespace {

using G = Graph<double>;
using util::Rng;

struct Built {
  int loss = -1;
  std::vector<int> leaves;  // leaf ids whose gradients are checked
};

using Builder = std::function<Built(G&, Rng&, const std::string&)>;

Tensor<double> rand_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0,
                           double hi = 1.0, double kink_margin = 0.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) {
    v = rng.uniform(lo, hi);
    if (kink_margin > 0.0 && std::abs(v) < kink_margin)
      v = v >= 0.0 ? v + kink_margin : v - kink_margin;
  }
  return t;
}

int grad_leaf(G& g, Tensor<double> t) {
  t.requires_grad = true;
  return g.leaf(std::move(t));
}

int const_leaf(G& g, Tensor<double> t) {
  t.requires_grad = false;
  return g.leaf(std::move(t));
}

// Reduces an arbitrary output to a scalar with fixed random weights so the
// whole Jacobian is exercised.
int probe(G& g, Rng& rng, int out) {
  auto w = rand_tensor(rng, g.value(out).shape, 0.1, 1.0);
  return g.sum(g.mul(out, const_leaf(g, std::move(w))));
}

std::vector<int> parse_dims(const std::string& spec) {
  std::vector<int> dims;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, 'x'))
    if (!item.empty()) dims.push_back(std::stoi(item));
  return dims;
}

std::shared_ptr<const SegmentIndex> rand_segments(Rng& rng, int n_segments,
                                                  int max_len = 4) {
  auto seg = std::make_shared<SegmentIndex>();
  seg->offsets.push_back(0);
  for (int s = 0; s < n_segments; ++s)
    seg->offsets.push_back(seg->offsets.back() + rng.uniform_int(1, max_len));
  return seg;
}

const std::map<std::string, Builder>& registry() {
  static const std::map<std::string, Builder> reg = [] {
    std::map<std::string, Builder> r;

    r["matmul"] = [](G& g, Rng& rng, const std::string& spec) {
      int m = 4, k = 3, n = 2;
      auto dims = parse_dims(spec);
      if (dims.size() == 3) {
        m = dims[0];
        k = dims[1];
        n = dims[2];
      }
      int a = grad_leaf(g, rand_tensor(rng, {m, k}));
      int b = grad_leaf(g, rand_tensor(rng, {k, n}));
      int out = g.matmul(a, b);
      return Built{probe(g, rng, out), {a, b}};
    };

    r["conv2d"] = [](G& g, Rng& rng, const std::string& spec) {
      int ic = 2, ih = 6, oc = 3, kh = 3, stride = 2, pad = 1;
      auto dims = parse_dims(spec);
      if (dims.size() == 6) {
        ic = dims[0];
        ih = dims[1];
        oc = dims[2];
        kh = dims[3];
        stride = dims[4];
        pad = dims[5];
      }
      int x = grad_leaf(g, rand_tensor(rng, {ic, ih, ih}));
      int k = grad_leaf(g, rand_tensor(rng, {oc, ic, kh, kh}));
      int out = g.conv2d(x, k, stride, pad);
      return Built{probe(g, rng, out), {x, k}};
    };

    r["add"] = [](G& g, Rng& rng, const std::string&) {
      int a = grad_leaf(g, rand_tensor(rng, {3, 4}));
      int b = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{probe(g, rng, g.add(a, b)), {a, b}};
    };

    r["sub"] = [](G& g, Rng& rng, const std::string&) {
      int a = grad_leaf(g, rand_tensor(rng, {3, 4}));
      int b = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{probe(g, rng, g.sub(a, b)), {a, b}};
    };

    r["mul"] = [](G& g, Rng& rng, const std::string&) {
      int a = grad_leaf(g, rand_tensor(rng, {3, 4}));
      int b = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{probe(g, rng, g.mul(a, b)), {a, b}};
    };

    r["add_bias"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {4, 5}));
      int b = grad_leaf(g, rand_tensor(rng, {5}));
      return Built{probe(g, rng, g.add_bias(x, b)), {x, b}};
    };

    r["add_channel_bias"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4, 4}));
      int b = grad_leaf(g, rand_tensor(rng, {3}));
      return Built{probe(g, rng, g.add_channel_bias(x, b)), {x, b}};
    };

    r["relu"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}, -1.0, 1.0, 1e-3));
      return Built{probe(g, rng, g.relu(x)), {x}};
    };

    r["sigmoid"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}, -3.0, 3.0));
      return Built{probe(g, rng, g.sigmoid(x)), {x}};
    };

    r["abs"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}, -1.0, 1.0, 1e-3));
      return Built{probe(g, rng, g.abs(x)), {x}};
    };

    r["concat_cols"] = [](G& g, Rng& rng, const std::string&) {
      int a = grad_leaf(g, rand_tensor(rng, {4, 2}));
      int b = grad_leaf(g, rand_tensor(rng, {4, 3}));
      int c = grad_leaf(g, rand_tensor(rng, {4, 1}));
      return Built{probe(g, rng, g.concat_cols({a, b, c})), {a, b, c}};
    };

    r["gather_rows"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {6, 3}));
      std::vector<int> idx(8);
      for (auto& i : idx) i = rng.uniform_int(0, 5);  // duplicates expected
      return Built{probe(g, rng, g.gather_rows(x, idx)), {x}};
    };

    r["tile_rows"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {1, 5}));
      return Built{probe(g, rng, g.tile_rows(x, 4)), {x}};
    };

    r["segment_softmax"] = [](G& g, Rng& rng, const std::string& spec) {
      int segs = 8;
      auto dims = parse_dims(spec);
      if (dims.size() == 1) segs = dims[0];
      auto seg = rand_segments(rng, segs);
      int x = grad_leaf(g, rand_tensor(rng, {seg->total(), 1}, -2.0, 2.0));
      return Built{probe(g, rng, g.segment_softmax(x, seg)), {x}};
    };

    r["segment_weighted_sum"] = [](G& g, Rng& rng, const std::string&) {
      auto seg = rand_segments(rng, 5);
      int f = grad_leaf(g, rand_tensor(rng, {seg->total(), 3}));
      int w = grad_leaf(g, rand_tensor(rng, {seg->total(), 1}));
      return Built{probe(g, rng, g.segment_weighted_sum(f, w, seg)), {f, w}};
    };

    r["sum"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{g.sum(x), {x}};
    };

    r["mean"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{g.mean(x), {x}};
    };

    r["row_mean"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{probe(g, rng, g.row_mean(x)), {x}};
    };

    r["rows_l2norm"] = [](G& g, Rng& rng, const std::string&) {
      // Rows bounded away from zero norm, where the gradient is undefined.
      Tensor<double> t = rand_tensor(rng, {4, 3}, -1.0, 1.0, 0.2);
      int x = grad_leaf(g, std::move(t));
      return Built{probe(g, rng, g.rows_l2norm(x)), {x}};
    };

    r["scale"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{probe(g, rng, g.scale(x, -1.7)), {x}};
    };

    r["l1_distance"] = [](G& g, Rng& rng, const std::string&) {
      auto a = rand_tensor(rng, {3, 4});
      Tensor<double> b = a;
      for (auto& v : b.data) {
        double d = rng.uniform(-1.0, 1.0);
        if (std::abs(d) < 1e-2) d = d >= 0 ? d + 1e-2 : d - 1e-2;
        v += d;
      }
      int ia = grad_leaf(g, std::move(a));
      int ib = grad_leaf(g, std::move(b));
      return Built{g.l1_distance(ia, ib), {ia, ib}};
    };

    r["sq_l2_distance"] = [](G& g, Rng& rng, const std::string&) {
      int a = grad_leaf(g, rand_tensor(rng, {3, 4}));
      int b = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{g.sq_l2_distance(a, b), {a, b}};
    };

    r["reshape"] = [](G& g, Rng& rng, const std::string&) {
      int x = grad_leaf(g, rand_tensor(rng, {3, 4}));
      return Built{probe(g, rng, g.reshape(x, {2, 6})), {x}};
    };

    r["soft_silhouette"] = [](G& g, Rng& rng, const std::string&) {
      auto sil = std::make_shared<SilhouetteParams>();
      sil->height = 24;
      sil->width = 24;
      sil->pitch = 0.01875;
      sil->faces = {0, 1, 2, 2, 3, 4, 4, 5, 0};
      Tensor<double> verts({6, 3});
      for (int i = 0; i < 6; ++i) {
        verts.data[3 * i] = rng.uniform(-0.12, 0.12);
        verts.data[3 * i + 1] = rng.uniform(-0.12, 0.12);
        verts.data[3 * i + 2] = rng.uniform(0.0, 0.05);
      }
      int v = grad_leaf(g, std::move(verts));
      return Built{probe(g, rng, g.soft_silhouette(v, sil)), {v}};
    };

    return r;
  }();
  return reg;
}

}  // namespace

double grad_check(const std::string& op_name, const std::string& input_spec,
                  double epsilon, uint64_t seed) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2))
    throw std::invalid_argument("grad_check: epsilon must be in (0, 1e-2]");
  auto it = registry().find(op_name);
  if (it == registry().end())
    throw std::invalid_argument("grad_check: unknown op '" + op_name + "'");

  G g;
  Rng rng(util::derive_stream(seed, std::hash<std::string>{}(op_name)));
  Built built = it->second(g, rng, input_spec);
  g.backward(built.loss);

  std::vector<Tensor<double>> analytic;
  analytic.reserve(built.leaves.size());
  for (int leaf : built.leaves) analytic.push_back(g.grad(leaf));

  double worst = 0.0;
  for (size_t li = 0; li < built.leaves.size(); ++li) {
    Tensor<double>& lv = g.leaf_value(built.leaves[li]);
    for (size_t j = 0; j < lv.data.size(); ++j) {
      double orig = lv.data[j];
      lv.data[j] = orig + epsilon;
      g.replay();
      double fp = g.value(built.loss).data[0];
      lv.data[j] = orig - epsilon;
      g.replay();
      double fm = g.value(built.loss).data[0];
      lv.data[j] = orig;
      double numeric = (fp - fm) / (2.0 * epsilon);
      double err = std::abs(analytic[li].data[j] - numeric) /
                   std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  // Restore the unperturbed forward values.
  g.replay();
  return worst;
}

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

double gradcheck_default_epsilon(const std::string& op_name) {
  if (op_name == "soft_silhouette") return 1e-6;
  return 1e-5;
}

}  // namespace trtm::ad
