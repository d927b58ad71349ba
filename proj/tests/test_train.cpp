#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "trtm/gnn/gnn.hpp"
#include "trtm/mesh/cloth_mesh.hpp"
#include "trtm/obs/observation.hpp"
#include "trtm/train/train.hpp"
#include "trtm/util/rng.hpp"

using trtm::ad::Graph;
using trtm::ad::ParamSet;
using trtm::ad::Tensor;
using trtm::gnn::GnnConfig;
using trtm::mesh::ClothMesh;
using trtm::mesh::make_template;
using trtm::obs::DepthObservation;
using trtm::obs::ObsParams;
using trtm::train::LossIds;
using trtm::train::LossSpec;
using trtm::train::LossWeights;
using trtm::train::Sample;
using trtm::train::TrainConfig;
using trtm::util::Vec3;

namespace {

GnnConfig tiny_cfg() {
  GnnConfig cfg;
  cfg.resolution = 32;
  cfg.channels = {8, 16};
  cfg.d_v = 16;
  cfg.d_e = 16;
  cfg.iterations = 2;
  return cfg;
}

ClothMesh bumpy_mesh(int n, uint64_t seed) {
  trtm::util::Rng rng(seed);
  ClothMesh m = make_template(n, n, 0.3);
  const double ax = rng.uniform(2.0, 9.0), ay = rng.uniform(2.0, 9.0);
  const double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
  const double amp = rng.uniform(0.01, 0.03);
  for (auto& p : m.positions) {
    p[0] += rng.uniform(-0.01, 0.01);
    p[1] += rng.uniform(-0.01, 0.01);
    p[2] = 0.0015 + amp * (1.0 + std::sin(ax * p[0] + px) * std::cos(ay * p[1] + py));
  }
  m.visible = trtm::mesh::compute_visibility(
      m.positions, trtm::mesh::default_visibility(m.spacing(), 0.003));
  return m;
}

Sample make_sample(int n, uint64_t seed, int resolution, uint8_t tier = 0) {
  Sample s;
  s.truth = trtm::obs::recenter_mesh(bumpy_mesh(n, seed));
  ObsParams op;
  op.resolution = resolution;
  s.clean = trtm::obs::make_observation(s.truth, op);
  s.tier = tier;
  s.seed = seed;
  return s;
}

// positions leaf for a mesh, differentiable
int positions_leaf(Graph<double>& g, const std::vector<Vec3>& pts) {
  Tensor<double> t({static_cast<int>(pts.size()), 3});
  t.requires_grad = true;
  for (size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) t.data[i * 3 + k] = pts[i][k];
  return g.leaf(std::move(t));
}

double pixel_objective(const ClothMesh& m, const DepthObservation& o,
                       const LossWeights& w) {
  Graph<double> g;
  const int pid = positions_leaf(g, m.positions);
  LossSpec spec;
  spec.geometry = &m;
  spec.observation = &o;
  spec.weights = w;
  const LossIds ids = trtm::train::build_losses(g, pid, spec);
  return g.value(ids.total).data[0];
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("config and weight validation") {
  CHECK_NOTHROW(LossWeights{}.validate());
  LossWeights w;
  w.cham = -0.1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);

  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.val_fraction = 1.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("grid nearest vertex matches brute force") {
  trtm::util::Rng rng(5);
  std::vector<Vec3> verts;
  for (int i = 0; i < 60; ++i)
    verts.push_back({rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                     rng.uniform(0.0, 0.05)});
  std::vector<Vec3> points;
  for (int i = 0; i < 150; ++i)
    points.push_back({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                      rng.uniform(-0.02, 0.08)});
  points.push_back(verts[7]);               // exact hit
  points.push_back({5.0, -3.0, 2.0});       // far outside the grid
  points.push_back({-4.0, 4.0, -1.0});

  const auto got = trtm::train::nearest_vertex(verts, 2.0 * 0.0375, points);
  REQUIRE(got.size() == points.size());
  for (size_t q = 0; q < points.size(); ++q) {
    double best = 1e30;
    int bi = -1;
    for (int i = 0; i < static_cast<int>(verts.size()); ++i) {
      const double d = trtm::util::norm2(verts[i] - points[q]);
      if (d < best) {
        best = d;
        bi = i;
      }
    }
    CHECK(got[q] == bi);
  }
  CHECK(got[points.size() - 3] == 7);

  CHECK_THROWS_AS(trtm::train::nearest_vertex({}, 0.1, points),
                  std::invalid_argument);
  CHECK_THROWS_AS(trtm::train::nearest_vertex(verts, 0.0, points),
                  std::invalid_argument);
}

TEST_CASE("cloud subsampling is deterministic and bounded") {
  trtm::util::Rng rng(9);
  std::vector<Vec3> cloud;
  for (int i = 0; i < 500; ++i)
    cloud.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 1)});

  const auto a = trtm::train::subsample_cloud(cloud, 128, 3);
  const auto b = trtm::train::subsample_cloud(cloud, 128, 3);
  const auto c = trtm::train::subsample_cloud(cloud, 128, 4);
  REQUIRE(a.size() == 128);
  bool same = true, all_members = true;
  for (size_t i = 0; i < a.size(); ++i) {
    same = same && a[i][0] == b[i][0] && a[i][1] == b[i][1] && a[i][2] == b[i][2];
    bool found = false;
    for (const auto& p : cloud)
      found = found || (p[0] == a[i][0] && p[1] == a[i][1] && p[2] == a[i][2]);
    all_members = all_members && found;
  }
  CHECK(same);
  CHECK(all_members);
  bool differs = false;
  for (size_t i = 0; i < c.size(); ++i)
    differs = differs || c[i][0] != a[i][0];
  CHECK(differs);

  const auto small = trtm::train::subsample_cloud(cloud, 5000, 3);
  CHECK(small.size() == cloud.size());
}

TEST_CASE("validation split is stable and close to the target fraction") {
  int val = 0;
  for (uint64_t s = 0; s < 1000; ++s) {
    const bool a = trtm::train::is_validation(s, 0.1);
    CHECK(a == trtm::train::is_validation(s, 0.1));
    val += a;
  }
  CHECK(val > 60);
  CHECK(val < 150);
  CHECK(!trtm::train::is_validation(123, 0.0));
  CHECK(trtm::train::is_validation(123, 0.999999999));
}

TEST_CASE("loss terms match hand-computed fixtures") {
  const Sample s = make_sample(5, 2, 48);
  const int n = s.truth.n_vertices();

  // perfect prediction: supervised terms vanish, errors reject bad shapes
  {
    Graph<double> g;
    const int pid = positions_leaf(g, s.truth.positions);
    LossSpec spec;
    spec.geometry = &s.truth;
    spec.truth_positions = &s.truth.positions;
    spec.observation = &s.clean;
    const LossIds ids = trtm::train::build_losses(g, pid, spec);
    CHECK(g.value(ids.vtx).data[0] == 0.0);
    CHECK(g.value(ids.key).data[0] == 0.0);
    CHECK(g.value(ids.sil).data[0] >= 0.0);
    CHECK(g.value(ids.regu).data[0] == 0.0);  // reference is the truth's own lengths
    CHECK(g.value(ids.total).data[0] >= 0.0);

    LossSpec bad = spec;
    ClothMesh other = make_template(3, 3, 0.3);
    bad.geometry = &other;
    Graph<double> g2;
    CHECK_THROWS_AS(
        trtm::train::build_losses(g2, positions_leaf(g2, s.truth.positions), bad),
        std::invalid_argument);
  }

  // uniform +x shift: mean vertex L1 equals the shift
  {
    auto shifted = s.truth.positions;
    for (auto& p : shifted) p += Vec3{0.01, 0.0, 0.0};
    Graph<double> g;
    const int pid = positions_leaf(g, shifted);
    LossSpec spec;
    spec.geometry = &s.truth;
    spec.truth_positions = &s.truth.positions;
    spec.observation = &s.clean;
    const LossIds ids = trtm::train::build_losses(g, pid, spec);
    CHECK(g.value(ids.vtx).data[0] == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(g.value(ids.key).data[0] == doctest::Approx(0.01).epsilon(1e-9));
  }

  // single keypoint displaced: key averages over 9, vtx over all vertices
  {
    const auto kp = trtm::mesh::keypoint_indices(s.truth);
    auto moved = s.truth.positions;
    moved[kp[3]] += Vec3{0.001, -0.002, 0.003};
    Graph<double> g;
    const int pid = positions_leaf(g, moved);
    LossSpec spec;
    spec.geometry = &s.truth;
    spec.truth_positions = &s.truth.positions;
    spec.observation = &s.clean;
    const LossIds ids = trtm::train::build_losses(g, pid, spec);
    CHECK(g.value(ids.key).data[0] == doctest::Approx(0.006 / 9).epsilon(1e-9));
    CHECK(g.value(ids.vtx).data[0] == doctest::Approx(0.006 / n).epsilon(1e-9));
  }

  // stretched sheet against canonical rest lengths (no ground truth):
  // every edge deviates proportionally
  {
    ClothMesh flat = trtm::obs::recenter_mesh(make_template(5, 5, 0.3));
    for (auto& p : flat.positions) p[2] = 0.0015;  // on the table, renderable
    Graph<double> g;
    std::vector<Vec3> scaled = flat.positions;
    for (auto& p : scaled) p = Vec3{1.1 * p[0], 1.1 * p[1], p[2]};
    ObsParams op;
    op.resolution = 48;
    const auto o = trtm::obs::make_observation(flat, op);
    const int pid = positions_leaf(g, scaled);
    LossSpec spec;
    spec.geometry = &flat;
    spec.observation = &o;
    const LossIds ids = trtm::train::build_losses(g, pid, spec);
    double expect = 0.0;
    for (int e = 0; e < flat.n_edges(); ++e) expect += 0.1 * flat.rest_length[e];
    expect /= flat.n_edges();
    CHECK(g.value(ids.regu).data[0] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(ids.vtx == -1);  // no ground truth, vertex terms off
    CHECK(ids.key == -1);
  }
}

TEST_CASE("chamfer term vanishes on exact hits and ignores far vertices") {
  // hand-built observation: 4 covered pixels at known positions
  DepthObservation o;
  o.resolution = 4;
  o.pitch = 0.05;
  o.depth_scale = 0.1;
  o.depth.assign(16, 0.0f);
  o.silhouette.assign(16, 0.0f);
  const int on[4] = {1 * 4 + 1, 1 * 4 + 2, 2 * 4 + 1, 2 * 4 + 2};
  for (int i : on) {
    o.depth[i] = 0.2f;
    o.silhouette[i] = 1.0f;
  }
  const auto cloud = trtm::obs::depth_to_pointcloud(o);
  REQUIRE(cloud.size() == 4);

  ClothMesh m = make_template(3, 3, 0.3);
  for (int i = 0; i < 4; ++i) m.positions[i] = cloud[i];
  for (int i = 4; i < 9; ++i) m.positions[i] = Vec3{1.0, 1.0, 0.0};

  Graph<double> g;
  const int pid = positions_leaf(g, m.positions);
  LossSpec spec;
  spec.geometry = &m;
  spec.observation = &o;
  const LossIds ids = trtm::train::build_losses(g, pid, spec);
  CHECK(g.value(ids.cham).data[0] == 0.0);

  // moving the unmatched cluster further away changes nothing
  ClothMesh far = m;
  for (int i = 4; i < 9; ++i) far.positions[i] = Vec3{2.0, -2.0, 1.0};
  Graph<double> g2;
  const int pid2 = positions_leaf(g2, far.positions);
  LossSpec spec2 = spec;
  spec2.geometry = &far;
  const LossIds ids2 = trtm::train::build_losses(g2, pid2, spec2);
  CHECK(g2.value(ids2.cham).data[0] == 0.0);

  // a uniform z lift of matched vertices shows up as the squared distance
  ClothMesh lifted = m;
  for (int i = 0; i < 4; ++i) lifted.positions[i][2] += 0.01;
  Graph<double> g3;
  const int pid3 = positions_leaf(g3, lifted.positions);
  LossSpec spec3 = spec;
  spec3.geometry = &lifted;
  const LossIds ids3 = trtm::train::build_losses(g3, pid3, spec3);
  CHECK(g3.value(ids3.cham).data[0] == doctest::Approx(1e-4).epsilon(1e-9));
}

TEST_CASE("loss gradients match finite differences") {
  const Sample s = make_sample(3, 7, 32);
  // prediction well off the truth so no L1 kink sits near zero
  auto start = s.truth.positions;
  trtm::util::Rng rng(31);
  for (auto& p : start)
    p += Vec3{rng.uniform(0.004, 0.02), rng.uniform(0.004, 0.02),
              rng.uniform(0.004, 0.02)};

  Graph<double> g;
  const int pid = positions_leaf(g, start);
  LossSpec spec;
  spec.geometry = &s.truth;
  spec.truth_positions = &s.truth.positions;
  spec.observation = &s.clean;
  const LossIds ids = trtm::train::build_losses(g, pid, spec);
  g.backward(ids.total);
  const auto grad = g.grad(pid).data;

  double worst = 0.0;
  for (size_t j = 0; j < grad.size(); ++j) {
    const double v0 = g.leaf_value(pid).data[j];
    const double h = 1e-6;
    g.leaf_value(pid).data[j] = v0 + h;
    g.replay();
    const double up = g.value(ids.total).data[0];
    g.leaf_value(pid).data[j] = v0 - h;
    g.replay();
    const double dn = g.value(ids.total).data[0];
    g.leaf_value(pid).data[j] = v0;
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[j]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-3);
  CHECK(worst < 1e-6);  // in practice far tighter; a kink would blow both
}

TEST_CASE("losses are stable under joint rotation of the scene") {
  const Sample s = make_sample(7, 11, 64);
  trtm::util::Rng rng(17);
  auto pred = s.truth.positions;
  for (auto& p : pred)
    p += Vec3{0.01 * rng.normal(), 0.01 * rng.normal(), 0.005 * rng.normal()};

  auto eval_terms = [](const Sample& smp, const std::vector<Vec3>& pp) {
    Graph<double> g;
    LossSpec spec;
    spec.geometry = &smp.truth;
    spec.truth_positions = &smp.truth.positions;
    spec.observation = &smp.clean;
    const LossIds ids =
        trtm::train::build_losses(g, positions_leaf(g, pp), spec);
    return std::array<double, 5>{
        g.value(ids.vtx).data[0], g.value(ids.key).data[0],
        g.value(ids.sil).data[0], g.value(ids.cham).data[0],
        g.value(ids.regu).data[0]};
  };
  const auto base = eval_terms(s, pred);

  ObsParams op;
  op.resolution = 64;
  for (double angle : {0.7, 2.0, 3.9, 5.5}) {
    const Sample rs = trtm::train::augment(s, angle, 0.0, 0, op);
    const double c = std::cos(angle), sn = std::sin(angle);
    auto rp = pred;
    for (auto& p : rp)
      p = Vec3{c * p[0] - sn * p[1], sn * p[0] + c * p[1], p[2]};
    const auto rot = eval_terms(rs, rp);
    for (int t = 0; t < 5; ++t)
      CHECK(std::abs(rot[t] - base[t]) / std::max(1e-9, base[t]) < 0.05);
  }
}

TEST_CASE("augmentation preserves flags and refreshes the render") {
  const Sample s = make_sample(7, 13, 48);
  ObsParams op;
  op.resolution = 48;

  const Sample a = trtm::train::augment(s, 0.0, 0.0, 99, op);
  REQUIRE(a.clean.depth.size() == s.clean.depth.size());
  CHECK(a.clean.depth == s.clean.depth);  // zero rotation, zero noise
  CHECK(a.truth.visible == s.truth.visible);

  const Sample b = trtm::train::augment(s, 1.234, 0.002, 99, op);
  CHECK(b.truth.visible == s.truth.visible);
  CHECK(b.clean.silhouette != s.clean.silhouette);
  double pos_delta = 0.0;
  for (int v = 0; v < s.truth.n_vertices(); ++v)
    pos_delta += norm(b.truth.positions[v] - s.truth.positions[v]);
  CHECK(pos_delta > 0.01);

  // noise hits only covered pixels and keeps the background at zero
  const Sample c = trtm::train::augment(s, 0.0, 0.004, 7, op);
  int changed = 0;
  for (size_t i = 0; i < c.clean.depth.size(); ++i) {
    if (s.clean.depth[i] == 0.0f) CHECK(c.clean.depth[i] == 0.0f);
    changed += c.clean.depth[i] != s.clean.depth[i];
  }
  CHECK(changed > 50);
}

TEST_CASE("training overfits a single sample") {
  const GnnConfig gcfg = tiny_cfg();
  const ClothMesh tpl = make_template(5, 5, 0.3);
  std::vector<Sample> data = {make_sample(5, 21, gcfg.resolution, 1)};

  TrainConfig tcfg;
  tcfg.epochs = 400;
  tcfg.batch_size = 1;
  tcfg.lr = 2e-3;
  tcfg.seed = 5;
  tcfg.augment_rotation = false;
  tcfg.augment_noise = false;
  tcfg.val_fraction = 0.0;

  const auto result =
      trtm::train::train(data, gcfg, tcfg, LossWeights{}, tpl);
  REQUIRE(!result.diverged);
  REQUIRE(result.log.size() == 400);
  CHECK(result.log.back().train_total < result.log.front().train_total);

  const auto report = trtm::train::evaluate(result.params, gcfg, tpl, data,
                                            LossWeights{});
  CHECK(report.mean.vtx_p < 0.005);  // < 5 mm mean vertex error
  CHECK(report.tier_counts[1] == 1);
}

TEST_CASE("fixed seed reproduces the checkpoint bit for bit") {
  const GnnConfig gcfg = tiny_cfg();
  const ClothMesh tpl = make_template(5, 5, 0.3);
  std::vector<Sample> data;
  for (uint64_t s = 0; s < 6; ++s)
    data.push_back(make_sample(5, 100 + s, gcfg.resolution, s % 3));

  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 2;
  tcfg.seed = 11;
  tcfg.val_fraction = 0.34;

  const auto a = trtm::train::train(data, gcfg, tcfg, LossWeights{}, tpl);
  const auto b = trtm::train::train(data, gcfg, tcfg, LossWeights{}, tpl);
  REQUIRE(a.params.size() == b.params.size());
  for (int i = 0; i < a.params.size(); ++i)
    CHECK(a.params.tensor(i).data == b.params.tensor(i).data);
  CHECK(a.best_epoch == b.best_epoch);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t e = 0; e < a.log.size(); ++e) {
    CHECK(a.log[e].train_total == b.log[e].train_total);
    CHECK(a.log[e].val_t_loss == b.log[e].val_t_loss);
  }

  TrainConfig other = tcfg;
  other.seed = 12;
  const auto c = trtm::train::train(data, gcfg, other, LossWeights{}, tpl);
  bool differs = false;
  for (int i = 0; i < a.params.size(); ++i)
    differs = differs || a.params.tensor(i).data != c.params.tensor(i).data;
  CHECK(differs);
}

TEST_CASE("divergence halts with the last good checkpoint") {
  const GnnConfig gcfg = tiny_cfg();
  const ClothMesh tpl = make_template(5, 5, 0.3);
  std::vector<Sample> data;
  for (uint64_t s = 0; s < 4; ++s)
    data.push_back(make_sample(5, 200 + s, gcfg.resolution));

  TrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.batch_size = 1;
  tcfg.lr = 1e14;  // guaranteed blow-up
  tcfg.seed = 3;
  tcfg.val_fraction = 0.0;
  tcfg.augment_noise = false;
  tcfg.augment_rotation = false;

  const auto r = trtm::train::train(data, gcfg, tcfg, LossWeights{}, tpl);
  CHECK(r.diverged);
  ParamSet<float> init;
  trtm::gnn::init_params(gcfg, trtm::util::derive_stream(tcfg.seed, 1), init);
  REQUIRE(r.params.size() == init.size());
  for (int i = 0; i < init.size(); ++i) {
    CHECK(r.params.tensor(i).data == init.tensor(i).data);
    for (float v : r.params.tensor(i).data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("pixel-only finetuning descends and zero epochs is the identity") {
  const GnnConfig gcfg = tiny_cfg();
  const ClothMesh tpl = make_template(5, 5, 0.3);
  std::vector<Sample> data;
  for (uint64_t s = 0; s < 4; ++s)
    data.push_back(make_sample(5, 300 + s, gcfg.resolution));

  TrainConfig tcfg;
  tcfg.epochs = 6;
  tcfg.batch_size = 2;
  tcfg.lr = 5e-4;
  tcfg.seed = 7;
  tcfg.val_fraction = 0.0;
  const auto pre = trtm::train::train(data, gcfg, tcfg, LossWeights{}, tpl);
  REQUIRE(!pre.diverged);

  std::vector<DepthObservation> tune;
  for (uint64_t s = 0; s < 3; ++s)
    tune.push_back(make_sample(5, 400 + s, gcfg.resolution).clean);

  ParamSet<float> frozen = pre.params;
  TrainConfig ft = tcfg;
  ft.lr = 2e-4;
  const auto id_curve = trtm::train::finetune_pixelwise(frozen, gcfg, tpl, tune,
                                                        0, ft, LossWeights{});
  CHECK(id_curve.size() == 1);
  for (int i = 0; i < frozen.size(); ++i)
    CHECK(frozen.tensor(i).data == pre.params.tensor(i).data);

  ParamSet<float> tuned = pre.params;
  const auto curve = trtm::train::finetune_pixelwise(tuned, gcfg, tpl, tune, 8,
                                                     ft, LossWeights{});
  REQUIRE(curve.size() == 9);
  CHECK(curve.back() < curve.front());
  bool moved = false;
  for (int i = 0; i < tuned.size(); ++i)
    moved = moved || tuned.tensor(i).data != pre.params.tensor(i).data;
  CHECK(moved);
}

TEST_CASE("mesh optimization descends the pixel objective") {
  const Sample s = make_sample(7, 55, 64);
  const LossWeights w;

  ClothMesh start = s.truth;
  for (auto& p : start.positions) p += Vec3{0.008, -0.006, 0.0};
  const double before = pixel_objective(start, s.clean, w);

  const ClothMesh tuned = trtm::train::optimize_mesh(start, s.clean, 40, w);
  const double after = pixel_objective(tuned, s.clean, w);
  CHECK(after < before);

  // a rigid offset is recovered down to roughly one pixel: below that the
  // silhouette cannot see the shift and the point-to-vertex floor tolerates it
  double err0 = 0.0, err1 = 0.0;
  for (int v = 0; v < s.truth.n_vertices(); ++v) {
    err0 += norm(start.positions[v] - s.truth.positions[v]);
    err1 += norm(tuned.positions[v] - s.truth.positions[v]);
  }
  CHECK(err1 < 0.8 * err0);
  CHECK(err1 / s.truth.n_vertices() < 1.1 * s.clean.pitch);

  const auto flags = trtm::mesh::compute_visibility(
      tuned.positions, trtm::mesh::default_visibility(tuned.spacing(), 0.003));
  CHECK(tuned.visible == flags);

  // an already pixel-consistent mesh barely moves
  const ClothMesh fixed = trtm::train::optimize_mesh(s.truth, s.clean, 10, w);
  double shift = 0.0;
  for (int v = 0; v < s.truth.n_vertices(); ++v)
    shift = std::max(shift, norm(fixed.positions[v] - s.truth.positions[v]));
  CHECK(shift < 0.004);

  const ClothMesh zero = trtm::train::optimize_mesh(s.truth, s.clean, 0, w);
  for (int v = 0; v < s.truth.n_vertices(); ++v)
    CHECK(norm(zero.positions[v] - s.truth.positions[v]) == 0.0);
}

TEST_CASE("evaluation metrics are exact for ground-truth predictions") {
  const Sample s = make_sample(7, 77, 64, 2);
  ClothMesh pred = s.truth;
  const auto m = trtm::train::eval_prediction(pred, s, LossWeights{});
  CHECK(m.vtx_p == 0.0);
  CHECK(m.key_p == 0.0);
  CHECK(m.vtx_f == 0.0);
  CHECK(m.key_f == 0.0);
  CHECK(m.sil == 0.0);  // same renderer, same raster: silhouettes identical
  CHECK(m.cham > 0.0);  // points hit face interiors, vertices are discrete
  CHECK(m.cham < 5e-4);
  CHECK(m.t_loss == doctest::Approx(0.5 * m.cham).epsilon(1e-12));

  // flag mismatches show up at the advertised granularity
  ClothMesh flipped = pred;
  const auto kp = trtm::mesh::keypoint_indices(s.truth);
  flipped.visible[kp[0]] ^= 1;
  const auto mf = trtm::train::eval_prediction(flipped, s, LossWeights{});
  CHECK(mf.key_f == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(mf.vtx_f == doctest::Approx(1.0 / 49.0).epsilon(1e-12));

  // a translated prediction accrues position and pixel losses
  ClothMesh moved = pred;
  for (auto& p : moved.positions) p += Vec3{0.02, 0.0, 0.0};
  const auto mm = trtm::train::eval_prediction(moved, s, LossWeights{});
  CHECK(mm.vtx_p == doctest::Approx(0.02).epsilon(1e-6));
  CHECK(mm.sil > 0.0);
  CHECK(mm.cham > m.cham);
  CHECK(mm.t_loss ==
        doctest::Approx(mm.key_p + 0.5 * mm.sil + 0.5 * mm.cham).epsilon(1e-12));
}

TEST_CASE("evaluation report routes tiers and averages") {
  const GnnConfig gcfg = tiny_cfg();
  const ClothMesh tpl = make_template(5, 5, 0.3);
  ParamSet<float> params;
  trtm::gnn::init_params(gcfg, 9, params);

  std::vector<Sample> data;
  for (uint64_t s = 0; s < 5; ++s)
    data.push_back(make_sample(5, 500 + s, gcfg.resolution, s % 3));

  const auto r = trtm::train::evaluate(params, gcfg, tpl, data, LossWeights{});
  CHECK(r.count == 5);
  CHECK(r.tier_counts[0] + r.tier_counts[1] + r.tier_counts[2] == 5);
  CHECK(r.tier_counts[0] == 2);
  CHECK(r.mean.t_loss ==
        doctest::Approx(r.mean.key_p + 0.5 * r.mean.sil + 0.5 * r.mean.cham)
            .epsilon(1e-9));
  double blended = 0.0;
  for (int t = 0; t < 3; ++t) blended += r.per_tier[t].vtx_p * r.tier_counts[t];
  CHECK(r.mean.vtx_p == doctest::Approx(blended / 5).epsilon(1e-9));
}

}  // TEST_SUITE
