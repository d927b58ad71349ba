#include "trtm/train/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "trtm/tensor/soft_silhouette.hpp"
#include "trtm/util/rng.hpp"

namespace trtm::train {

using ad::Graph;
using ad::ParamSet;
using ad::Tensor;

void LossWeights::validate() const {
  if (key < 0 || sil < 0 || cham < 0 || regu < 0)
    throw std::invalid_argument("loss weights must be non-negative");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (lr <= 0 || lr_min_frac < 0 || lr_min_frac > 1)
    throw std::invalid_argument("bad learning rate schedule");
  if (noise_sigma_m < 0) throw std::invalid_argument("noise sigma must be >= 0");
  if (val_fraction < 0 || val_fraction >= 1)
    throw std::invalid_argument("val fraction must be in [0, 1)");
  if (max_cloud_points < 1)
    throw std::invalid_argument("cloud cap must be positive");
}

namespace {

struct CellKey {
  int64_t v;
  bool operator==(const CellKey& o) const { return v == o.v; }
};
struct CellHash {
  size_t operator()(const CellKey& k) const {
    uint64_t x = static_cast<uint64_t>(k.v) * 0x9e3779b97f4a7c15ull;
    return static_cast<size_t>(x ^ (x >> 31));
  }
};

int64_t cell_id(int x, int y, int z) {
  // 21 bits per axis, offset to stay positive
  const int64_t b = 1 << 20;
  return (static_cast<int64_t>(x + b) << 42) |
         (static_cast<int64_t>(y + b) << 21) | static_cast<int64_t>(z + b);
}

}  // namespace

std::vector<int> nearest_vertex(const std::vector<Vec3>& verts, double cell,
                                const std::vector<Vec3>& points) {
  if (verts.empty()) throw std::invalid_argument("nearest_vertex: no vertices");
  if (cell <= 0) throw std::invalid_argument("nearest_vertex: bad cell size");

  std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
  for (int i = 0; i < static_cast<int>(verts.size()); ++i) {
    const auto& p = verts[i];
    grid[{cell_id(static_cast<int>(std::floor(p[0] / cell)),
                  static_cast<int>(std::floor(p[1] / cell)),
                  static_cast<int>(std::floor(p[2] / cell)))}]
        .push_back(i);
  }

  std::vector<int> out(points.size(), -1);
  for (size_t q = 0; q < points.size(); ++q) {
    const auto& p = points[q];
    const int cx = static_cast<int>(std::floor(p[0] / cell));
    const int cy = static_cast<int>(std::floor(p[1] / cell));
    const int cz = static_cast<int>(std::floor(p[2] / cell));
    // seed with vertex 0 so the shell bound is always finite
    double best = norm2(verts[0] - p);
    int best_i = 0;
    // expanding Chebyshev shells; a shell at radius r holds nothing closer
    // than (r - 1) * cell, so once that bound passes the best hit we stop.
    // Shells larger than the vertex count cost more than scanning, so
    // distant queries fall back to brute force.
    for (int r = 0; (r - 1) * cell <= std::sqrt(best); ++r) {
      const int64_t shell = 24LL * r * r + 2;
      if (shell > static_cast<int64_t>(verts.size())) {
        for (int i = 0; i < static_cast<int>(verts.size()); ++i) {
          const double d = norm2(verts[i] - p);
          if (d < best || (d == best && i < best_i)) {
            best = d;
            best_i = i;
          }
        }
        break;
      }
      for (int dx = -r; dx <= r; ++dx)
        for (int dy = -r; dy <= r; ++dy)
          for (int dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r)
              continue;
            auto it = grid.find({cell_id(cx + dx, cy + dy, cz + dz)});
            if (it == grid.end()) continue;
            for (int i : it->second) {
              const double d = norm2(verts[i] - p);
              if (d < best || (d == best && i < best_i)) {
                best = d;
                best_i = i;
              }
            }
          }
    }
    out[q] = best_i;
  }
  return out;
}

std::vector<Vec3> subsample_cloud(const std::vector<Vec3>& cloud, int cap,
                                  uint64_t seed) {
  const int n = static_cast<int>(cloud.size());
  if (n <= cap) return cloud;
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  util::Rng rng(seed);
  std::vector<Vec3> out(cap);
  for (int i = 0; i < cap; ++i) {
    std::swap(idx[i], idx[rng.uniform_int(i, n - 1)]);
    out[i] = cloud[idx[i]];
  }
  return out;
}

bool is_validation(uint64_t sample_seed, double val_fraction) {
  const uint64_t h = util::derive_stream(sample_seed, 0x5eed5b117ull);
  return (h >> 11) * 0x1.0p-53 < val_fraction;
}

Sample augment(const Sample& s, double angle, double noise_sigma_m,
               uint64_t noise_seed, const obs::ObsParams& op) {
  Sample out = s;
  const double c = std::cos(angle), sn = std::sin(angle);
  for (auto& p : out.truth.positions)
    p = Vec3{c * p[0] - sn * p[1], sn * p[0] + c * p[1], p[2]};
  out.clean = obs::make_observation(out.truth, op);
  if (noise_sigma_m > 0)
    obs::add_noise(out.clean.depth, noise_sigma_m / out.clean.depth_scale,
                   noise_seed);
  return out;
}

template <typename Real>
LossIds build_losses(Graph<Real>& g, int positions, const LossSpec& spec) {
  if (!spec.geometry || !spec.observation)
    throw std::invalid_argument("loss spec needs geometry and an observation");
  spec.weights.validate();
  const mesh::ClothMesh& geo = *spec.geometry;
  const obs::DepthObservation& o = *spec.observation;
  const int n = geo.n_vertices();
  if (g.value(positions).shape != std::vector<int>{n, 3})
    throw std::invalid_argument("positions node does not match the geometry");

  auto leaf_of = [&](const std::vector<Vec3>& pts) {
    Tensor<Real> t({static_cast<int>(pts.size()), 3});
    for (size_t i = 0; i < pts.size(); ++i)
      for (int k = 0; k < 3; ++k)
        t.data[i * 3 + k] = static_cast<Real>(pts[i][k]);
    return g.leaf(std::move(t));
  };

  LossIds ids;
  std::vector<int> weighted;
  int truth = -1;

  if (spec.truth_positions) {
    if (static_cast<int>(spec.truth_positions->size()) != n)
      throw std::invalid_argument("truth positions do not match the geometry");
    truth = leaf_of(*spec.truth_positions);
    ids.vtx = g.scale(g.l1_distance(positions, truth), Real(1.0 / n));
    weighted.push_back(ids.vtx);

    const auto kp = mesh::keypoint_indices(geo);
    const std::vector<int> kpv(kp.begin(), kp.end());
    ids.key = g.scale(
        g.l1_distance(g.gather_rows(positions, kpv), g.gather_rows(truth, kpv)),
        Real(1.0 / 9.0));
    weighted.push_back(g.scale(ids.key, Real(spec.weights.key)));
  }

  // silhouette: soft render of the prediction against the binary target,
  // normalized by the covered-pixel count (the binary image's squared norm)
  {
    auto sp = std::make_shared<ad::SilhouetteParams>();
    sp->faces = mesh::mesh_faces(geo);
    sp->height = sp->width = o.resolution;
    sp->pitch = o.pitch;
    double on = 0.0;
    Tensor<Real> target({o.resolution, o.resolution});
    for (int i = 0; i < o.n_pixels(); ++i) {
      target.data[i] = static_cast<Real>(o.silhouette[i]);
      on += o.silhouette[i] * o.silhouette[i];
    }
    if (on == 0.0) throw std::invalid_argument("empty target silhouette");
    ids.sil = g.scale(
        g.sq_l2_distance(g.soft_silhouette(positions, sp), g.leaf(std::move(target))),
        Real(1.0 / on));
    weighted.push_back(g.scale(ids.sil, Real(spec.weights.sil)));
  }

  // chamfer: observed points to their currently nearest predicted vertex;
  // the assignment is recorded as a gather so replays stay smooth
  {
    auto cloud = subsample_cloud(obs::depth_to_pointcloud(o),
                                 spec.max_cloud_points, spec.cloud_seed);
    if (cloud.empty()) throw std::invalid_argument("empty observed point cloud");
    const auto& pv = g.value(positions);
    std::vector<Vec3> cur(n);
    for (int i = 0; i < n; ++i)
      cur[i] = Vec3{double(pv.data[i * 3]), double(pv.data[i * 3 + 1]),
                    double(pv.data[i * 3 + 2])};
    const auto assign = nearest_vertex(cur, 2.0 * geo.spacing(), cloud);
    ids.cham = g.scale(
        g.sq_l2_distance(g.gather_rows(positions, assign), leaf_of(cloud)),
        Real(1.0 / cloud.size()));
    weighted.push_back(g.scale(ids.cham, Real(spec.weights.cham)));
  }

  // edge regularization: mean |predicted length - reference length|. With
  // ground truth the reference is that mesh's own edge lengths (perfect
  // predictions score zero); without it, the canonical rest lengths keep
  // pixel-only tuning from collapsing the sheet.
  {
    const int ne = geo.n_edges();
    std::vector<int> ra(ne), rb(ne);
    Tensor<Real> rest({ne, 1});
    for (int e = 0; e < ne; ++e) {
      ra[e] = geo.edges[e].a;
      rb[e] = geo.edges[e].b;
      rest.data[e] = static_cast<Real>(geo.rest_length[e]);
    }
    const int ref =
        truth >= 0 ? g.rows_l2norm(g.sub(g.gather_rows(truth, ra),
                                         g.gather_rows(truth, rb)))
                   : g.leaf(std::move(rest));
    const int len = g.rows_l2norm(
        g.sub(g.gather_rows(positions, ra), g.gather_rows(positions, rb)));
    ids.regu = g.scale(g.l1_distance(len, ref), Real(1.0 / ne));
    weighted.push_back(g.scale(ids.regu, Real(spec.weights.regu)));
  }

  ids.total = weighted.front();
  for (size_t i = 1; i < weighted.size(); ++i)
    ids.total = g.add(ids.total, weighted[i]);
  return ids;
}

template LossIds build_losses<float>(Graph<float>&, int, const LossSpec&);
template LossIds build_losses<double>(Graph<double>&, int, const LossSpec&);

SampleMetrics eval_prediction(const mesh::ClothMesh& pred, const Sample& s,
                              const LossWeights& w) {
  const mesh::ClothMesh& gt = s.truth;
  const int n = gt.n_vertices();
  if (pred.n_vertices() != n)
    throw std::invalid_argument("prediction does not match the ground truth");

  SampleMetrics m;
  for (int i = 0; i < n; ++i) {
    const Vec3 d = pred.positions[i] - gt.positions[i];
    m.vtx_p += std::abs(d[0]) + std::abs(d[1]) + std::abs(d[2]);
  }
  m.vtx_p /= n;

  const auto kp = mesh::keypoint_indices(gt);
  for (int i : kp) {
    const Vec3 d = pred.positions[i] - gt.positions[i];
    m.key_p += std::abs(d[0]) + std::abs(d[1]) + std::abs(d[2]);
  }
  m.key_p /= 9.0;

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  m.vtx_f = mesh::flag_error(pred.visible, gt.visible, all);
  m.key_f = mesh::flag_error(pred.visible, gt.visible,
                             std::vector<int>(kp.begin(), kp.end()));

  // hard silhouette of the prediction in the observation's own raster
  const auto depth = obs::render_depth(pred.positions, mesh::mesh_faces(pred),
                                       s.clean.resolution, s.clean.pitch);
  double on = 0.0, miss = 0.0;
  for (int i = 0; i < s.clean.n_pixels(); ++i) {
    const double t = s.clean.silhouette[i];
    const double p = depth[i] > 0.0f ? 1.0 : 0.0;
    on += t * t;
    miss += (p - t) * (p - t);
  }
  if (on == 0.0) throw std::invalid_argument("sample has an empty silhouette");
  m.sil = miss / on;

  const auto cloud = obs::depth_to_pointcloud(s.clean);
  const auto assign = nearest_vertex(pred.positions, 2.0 * gt.spacing(), cloud);
  for (size_t i = 0; i < cloud.size(); ++i)
    m.cham += norm2(pred.positions[assign[i]] - cloud[i]);
  m.cham /= static_cast<double>(cloud.size());

  m.t_loss = m.key_p + w.sil * m.sil + w.cham * m.cham;
  return m;
}

namespace {

void accumulate(SampleMetrics& into, const SampleMetrics& x) {
  into.vtx_p += x.vtx_p;
  into.key_p += x.key_p;
  into.vtx_f += x.vtx_f;
  into.key_f += x.key_f;
  into.sil += x.sil;
  into.cham += x.cham;
  into.t_loss += x.t_loss;
}

void divide(SampleMetrics& m, double d) {
  if (d == 0) return;
  m.vtx_p /= d;
  m.key_p /= d;
  m.vtx_f /= d;
  m.key_f /= d;
  m.sil /= d;
  m.cham /= d;
  m.t_loss /= d;
}

}  // namespace

EvalReport evaluate(const ParamSet<float>& params, const gnn::GnnConfig& cfg,
                    const mesh::ClothMesh& tpl, const std::vector<Sample>& data,
                    const LossWeights& w, bool use_tta) {
  EvalReport r;
  for (const Sample& s : data) {
    const mesh::ClothMesh pred =
        use_tta ? gnn::reconstruct_with_tta(params, cfg, tpl, s.clean)
                : gnn::reconstruct(params, cfg, tpl, s.clean);
    const SampleMetrics m = eval_prediction(pred, s, w);
    accumulate(r.mean, m);
    if (s.tier < 3) {
      accumulate(r.per_tier[s.tier], m);
      r.tier_counts[s.tier] += 1;
    }
    r.count += 1;
  }
  divide(r.mean, r.count);
  for (int t = 0; t < 3; ++t) divide(r.per_tier[t], r.tier_counts[t]);
  return r;
}

namespace {

struct TermMeans {
  double total = 0, vtx = 0, key = 0, sil = 0, cham = 0, regu = 0;
  int n = 0;

  void add(const Graph<float>& g, const LossIds& ids) {
    total += g.value(ids.total).data[0];
    if (ids.vtx >= 0) vtx += g.value(ids.vtx).data[0];
    if (ids.key >= 0) key += g.value(ids.key).data[0];
    sil += g.value(ids.sil).data[0];
    cham += g.value(ids.cham).data[0];
    regu += g.value(ids.regu).data[0];
    n += 1;
  }
};

double cosine_lr(const TrainConfig& c, int64_t step, int64_t total_steps) {
  const double lo = c.lr * c.lr_min_frac;
  if (total_steps <= 1) return c.lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return lo + 0.5 * (c.lr - lo) * (1.0 + std::cos(t * 3.14159265358979323846));
}

// One optimization pass shared by train() and finetune_pixelwise(): runs
// `epochs` over `samples`, accumulating batch gradients into Adam.
// `vertex_terms` gates the supervised losses. Returns false on divergence.
bool run_epochs(ParamSet<float>& params, ad::AdamState<float>& adam,
                const gnn::GnnConfig& gcfg, const TrainConfig& tcfg,
                const LossWeights& w, const mesh::ClothMesh& tpl,
                const std::vector<Sample>& samples, bool vertex_terms,
                bool augment_samples, int epoch0, int epochs,
                std::vector<TermMeans>* per_epoch, int64_t* step_io,
                int64_t total_steps) {
  const int nt = static_cast<int>(samples.size());
  std::vector<std::vector<float>> grads(params.size());
  obs::ObsParams op;
  op.resolution = gcfg.resolution;

  for (int e = epoch0; e < epoch0 + epochs; ++e) {
    util::Rng order_rng(util::derive_stream(tcfg.seed, 1000 + e));
    std::vector<int> order(nt);
    for (int i = 0; i < nt; ++i) order[i] = i;
    for (int i = nt - 1; i > 0; --i)
      std::swap(order[i], order[order_rng.uniform_int(0, i)]);
    util::Rng aug_rng(util::derive_stream(tcfg.seed, 2000 + e));

    TermMeans means;
    for (int start = 0; start < nt; start += tcfg.batch_size) {
      const int bn = std::min(tcfg.batch_size, nt - start);
      for (int i = 0; i < params.size(); ++i)
        grads[i].assign(params.tensor(i).numel(), 0.0f);

      for (int bi = 0; bi < bn; ++bi) {
        const Sample* s = &samples[order[start + bi]];
        Sample tmp;
        const double angle =
            tcfg.augment_rotation ? aug_rng.uniform(0.0, 2.0 * 3.14159265358979323846) : 0.0;
        const uint64_t noise_seed = aug_rng.next_u64();
        const uint64_t cloud_seed = aug_rng.next_u64();
        if (augment_samples &&
            (tcfg.augment_rotation || tcfg.augment_noise)) {
          tmp = augment(*s, angle,
                        tcfg.augment_noise ? tcfg.noise_sigma_m : 0.0,
                        noise_seed, op);
          s = &tmp;
        }

        Graph<float> g;
        const gnn::GnnTape tape =
            gnn::build_forward(g, params, gcfg, tpl, s->clean.depth);
        LossSpec spec;
        spec.geometry = &tpl;
        spec.truth_positions = vertex_terms ? &s->truth.positions : nullptr;
        spec.observation = &s->clean;
        spec.weights = w;
        spec.cloud_seed = cloud_seed;
        spec.max_cloud_points = tcfg.max_cloud_points;
        const LossIds ids = build_losses(g, tape.positions, spec);
        if (!std::isfinite(g.value(ids.total).data[0])) return false;
        g.backward(ids.total);
        means.add(g, ids);

        const float inv = 1.0f / static_cast<float>(bn);
        for (int i = 0; i < params.size(); ++i) {
          const auto& gd = g.grad(tape.param_ids[i]).data;
          auto& acc = grads[i];
          for (size_t j = 0; j < acc.size(); ++j) acc[j] += inv * gd[j];
        }
      }

      adam_step(params, grads, adam,
                static_cast<float>(cosine_lr(tcfg, (*step_io)++, total_steps)));
    }
    if (per_epoch) per_epoch->push_back(means);
  }
  return true;
}

}  // namespace

TrainResult train(const std::vector<Sample>& data, const gnn::GnnConfig& gcfg,
                  const TrainConfig& tcfg, const LossWeights& w,
                  const mesh::ClothMesh& tpl) {
  gcfg.validate();
  tcfg.validate();
  w.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");

  std::vector<Sample> tr, va;
  for (const Sample& s : data)
    (is_validation(s.seed, tcfg.val_fraction) ? va : tr).push_back(s);
  if (tr.empty()) throw std::invalid_argument("train: split left no training data");

  TrainResult result;
  trtm::gnn::init_params(gcfg, util::derive_stream(tcfg.seed, 1), result.params);
  ad::AdamState<float> adam;
  adam.init(result.params);

  const int64_t batches_per_epoch =
      (static_cast<int64_t>(tr.size()) + tcfg.batch_size - 1) / tcfg.batch_size;
  const int64_t total_steps = batches_per_epoch * tcfg.epochs;
  int64_t step = 0;

  ParamSet<float> last_good = result.params;
  ParamSet<float> best = result.params;
  double best_val = std::numeric_limits<double>::infinity();

  for (int e = 0; e < tcfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_now = cosine_lr(tcfg, step, total_steps);
    std::vector<TermMeans> means;
    const bool ok = run_epochs(result.params, adam, gcfg, tcfg, w, tpl, tr,
                               /*vertex_terms=*/true, /*augment=*/true, e, 1,
                               &means, &step, total_steps);
    if (!ok) {
      result.diverged = true;
      result.params = last_good;
      return result;
    }
    last_good = result.params;

    EpochStats st;
    st.epoch = e;
    st.lr = lr_now;
    const TermMeans& tm = means.front();
    st.train_total = tm.total / tm.n;
    st.train_vtx = tm.vtx / tm.n;
    st.train_key = tm.key / tm.n;
    st.train_sil = tm.sil / tm.n;
    st.train_cham = tm.cham / tm.n;
    st.train_regu = tm.regu / tm.n;
    if (!va.empty()) {
      const EvalReport vr = evaluate(result.params, gcfg, tpl, va, w);
      st.val_t_loss = vr.mean.t_loss;
      st.val_vtx_p = vr.mean.vtx_p;
      if (vr.mean.t_loss < best_val) {
        best_val = vr.mean.t_loss;
        best = result.params;
        result.best_epoch = e;
      }
    }
    st.seconds = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    result.log.push_back(st);
  }

  if (!va.empty() && result.best_epoch >= 0) {
    result.params = best;
  } else {
    result.best_epoch = tcfg.epochs - 1;
  }
  return result;
}

std::vector<double> finetune_pixelwise(ParamSet<float>& params,
                                       const gnn::GnnConfig& gcfg,
                                       const mesh::ClothMesh& tpl,
                                       const std::vector<obs::DepthObservation>& tune,
                                       int epochs, const TrainConfig& tcfg,
                                       const LossWeights& w) {
  gcfg.validate();
  tcfg.validate();
  w.validate();
  if (tune.empty()) throw std::invalid_argument("finetune: no observations");

  std::vector<Sample> samples(tune.size());
  for (size_t i = 0; i < tune.size(); ++i) {
    samples[i].clean = tune[i];
    samples[i].seed = i;
  }

  auto pixel_objective = [&]() {
    double sum = 0.0;
    for (const Sample& s : samples) {
      Graph<float> g;
      const gnn::GnnTape tape =
          gnn::build_forward(g, params, gcfg, tpl, s.clean.depth);
      LossSpec spec;
      spec.geometry = &tpl;
      spec.observation = &s.clean;
      spec.weights = w;
      spec.max_cloud_points = tcfg.max_cloud_points;
      const LossIds ids = build_losses(g, tape.positions, spec);
      sum += g.value(ids.sil).data[0] * w.sil +
             g.value(ids.cham).data[0] * w.cham;
    }
    return sum / static_cast<double>(samples.size());
  };

  std::vector<double> curve;
  curve.push_back(pixel_objective());
  if (epochs == 0) return curve;

  ad::AdamState<float> adam;
  adam.init(params);
  const int64_t batches =
      (static_cast<int64_t>(samples.size()) + tcfg.batch_size - 1) /
      tcfg.batch_size;
  int64_t step = 0;
  for (int e = 0; e < epochs; ++e) {
    if (!run_epochs(params, adam, gcfg, tcfg, w, tpl, samples,
                    /*vertex_terms=*/false, /*augment=*/false, e, 1, nullptr,
                    &step, batches * epochs))
      break;
    curve.push_back(pixel_objective());
  }
  return curve;
}

mesh::ClothMesh optimize_mesh(const mesh::ClothMesh& m,
                              const obs::DepthObservation& o, int iterations,
                              const LossWeights& w, double thickness) {
  w.validate();
  if (iterations < 0) throw std::invalid_argument("optimize_mesh: bad count");

  mesh::ClothMesh cur = m;
  double eta = 1e-4;
  for (int it = 0; it < iterations; ++it) {
    Graph<double> g;
    Tensor<double> pos({cur.n_vertices(), 3});
    pos.requires_grad = true;
    for (int v = 0; v < cur.n_vertices(); ++v)
      for (int k = 0; k < 3; ++k) pos.data[v * 3 + k] = cur.positions[v][k];
    const int pid = g.leaf(std::move(pos));

    LossSpec spec;
    spec.geometry = &cur;
    spec.observation = &o;
    spec.weights = w;
    const LossIds ids = build_losses(g, pid, spec);
    const double before = g.value(ids.total).data[0];
    g.backward(ids.total);
    const auto grad = g.grad(pid).data;  // copy; replay reuses the tape

    // backtracking step on the recorded (fixed-assignment) objective;
    // re-assignment next iteration can only lower the chamfer term further
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      auto& pv = g.leaf_value(pid);
      for (size_t j = 0; j < pv.data.size(); ++j)
        pv.data[j] -= eta * grad[j];
      g.replay();
      if (g.value(ids.total).data[0] <= before) {
        for (int v = 0; v < cur.n_vertices(); ++v)
          cur.positions[v] = Vec3{pv.data[v * 3], pv.data[v * 3 + 1],
                                  pv.data[v * 3 + 2]};
        eta *= 1.5;
        accepted = true;
        break;
      }
      for (size_t j = 0; j < pv.data.size(); ++j)
        pv.data[j] += eta * grad[j];  // undo and shrink
      eta *= 0.5;
      if (eta < 1e-12) break;
    }
    if (!accepted) break;
  }

  cur.visible = mesh::compute_visibility(
      cur.positions, mesh::default_visibility(cur.spacing(), thickness));
  return cur;
}

}  // namespace trtm::train
