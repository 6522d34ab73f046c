#include "gf/body.h"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gf/rng.h"

using namespace gf;

namespace {

BodyParams random_params(const BodyModel& m, Rng& rng, double beta_scale,
                         double theta_scale, double offset_scale) {
  BodyParams p = BodyParams::zero(m.shape_count(), m.joint_count(), m.vertex_count());
  for (auto& b : p.beta) b = rng.uniform(-beta_scale, beta_scale);
  for (auto& t : p.theta) t = rng.uniform(-theta_scale, theta_scale);
  for (auto& o : p.offsets)
    o = {rng.uniform(-offset_scale, offset_scale),
         rng.uniform(-offset_scale, offset_scale),
         rng.uniform(-offset_scale, offset_scale)};
  return p;
}

// Two-bone cylinder with hard 0/1 weights, for the exact LBS oracle.
BodyModel two_bone_cylinder() {
  BodyModel m;
  m.rest_joints = {{0, 0, 0}, {0, 1, 0}};
  m.parents = {-1, 0};
  const int rings = 8, segs = 6;
  for (int r = 0; r < rings; ++r) {
    const double y = 2.0 * r / (rings - 1);
    for (int s = 0; s < segs; ++s) {
      const double phi = 2.0 * M_PI * s / segs;
      m.template_verts.push_back({0.2 * std::cos(phi), y, 0.2 * std::sin(phi)});
    }
  }
  const int n = static_cast<int>(m.template_verts.size());
  m.blend_weights = Mat(n, 2);
  for (int i = 0; i < n; ++i) {
    const bool lower = m.template_verts[i].y < 1.0;
    m.blend_weights(i, lower ? 0 : 1) = 1.0;
  }
  for (int r = 0; r + 1 < rings; ++r)
    for (int s = 0; s < segs; ++s) {
      const int a = r * segs + s, b = r * segs + (s + 1) % segs;
      m.faces.push_back({a, b, a + segs});
      m.faces.push_back({b, b + segs, a + segs});
    }
  return m;
}

}  // namespace

TEST_CASE("procedural body satisfies its structural invariants") {
  const BodyModel& m = default_body();
  CHECK(m.vertex_count() == 1002);
  CHECK(m.joint_count() == 16);
  CHECK(m.shape_count() == 10);
  // Blend weight rows are convex.
  for (int i = 0; i < m.vertex_count(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < m.joint_count(); ++j) {
      CHECK(m.blend_weights(i, j) >= 0.0);
      sum += m.blend_weights(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  // Joint tree rooted at 0, parents precede children.
  CHECK(m.parents[0] == -1);
  for (int j = 1; j < m.joint_count(); ++j) {
    CHECK(m.parents[j] >= 0);
    CHECK(m.parents[j] < j);
  }
  // Garment templates index valid body vertices, one per row.
  for (const auto& [name, g] : m.garments) {
    std::vector<char> seen(m.vertex_count(), 0);
    for (int v : g.body_vertex) {
      CHECK(v >= 0);
      CHECK(v < m.vertex_count());
      CHECK(!seen[v]);
      seen[v] = 1;
    }
    for (const auto& fc : g.faces)
      for (int c = 0; c < 3; ++c) {
        CHECK(fc[c] >= 0);
        CHECK(fc[c] < g.size());
      }
  }
  CHECK(m.garments.count("tshirt") == 1);
  CHECK(m.garments.count("shorts") == 1);
  CHECK(m.garments.at("tshirt").layer == GarmentLayer::kUpper);
  // Same seed twice gives the identical asset.
  const BodyModel again = build_procedural_body(811020604ULL);
  CHECK(again.template_verts.size() == m.template_verts.size());
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK(norm(again.template_verts[i] - m.template_verts[i]) == 0.0);
}

TEST_CASE("unposed: zero params give the template, basis selection works") {
  const BodyModel& m = default_body();
  BodyParams p = BodyParams::zero(m.shape_count(), m.joint_count(), m.vertex_count());
  const auto u = unposed(m, p);
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK(norm(u[i] - m.template_verts[i]) == 0.0);

  p.beta[0] = 1.0;
  const auto u1 = unposed(m, p);
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK(norm(u1[i] - (m.template_verts[i] + m.shape_dirs[0][i])) < 1e-15);
}

TEST_CASE("unposed matches the explicit tensor-contraction oracle") {
  const BodyModel& m = default_body();
  Rng rng(42);
  BodyParams p = random_params(m, rng, 2.0, 0.0, 0.0);
  const auto u = unposed(m, p);
  for (int i = 0; i < m.vertex_count(); ++i) {
    Vec3 oracle = m.template_verts[i];
    for (int k = 0; k < m.shape_count(); ++k) oracle += m.shape_dirs[k][i] * p.beta[k];
    CHECK(norm(u[i] - oracle) < 1e-9);
  }
}

TEST_CASE("skin at zero pose is the identity on unposed vertices") {
  const BodyModel& m = default_body();
  Rng rng(43);
  BodyParams p = random_params(m, rng, 1.5, 0.0, 0.01);
  const auto u = unposed(m, p);
  const Mesh posed = skin(m, p);
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK(norm(posed.vertices[i] - u[i]) < 1e-12);
}

TEST_CASE("root-only rotation is a rigid rotation of the rest pose") {
  const BodyModel& m = default_body();
  BodyParams p = BodyParams::zero(m.shape_count(), m.joint_count(), m.vertex_count());
  const Mesh rest = skin(m, p);
  p.theta[0] = 0.1;
  p.theta[1] = 0.7;
  p.theta[2] = -0.3;
  const Mesh posed = skin(m, p);
  const Mat3 r = rodrigues({p.theta[0], p.theta[1], p.theta[2]});
  const Vec3 pivot = m.rest_joints[0];
  for (int i = 0; i < m.vertex_count(); ++i) {
    const Vec3 expected = r * (rest.vertices[i] - pivot) + pivot;
    CHECK(norm(posed.vertices[i] - expected) < 1e-9);
  }
}

TEST_CASE("two-bone cylinder: 90-degree elbow matches the rigid-transform oracle") {
  const BodyModel m = two_bone_cylinder();
  BodyParams p = BodyParams::zero(0, 2, m.vertex_count());
  p.theta = {0, 0, 0, 0, 0, M_PI / 2.0};
  const Mesh posed = skin(m, p);
  const Mat3 r = rodrigues({0, 0, M_PI / 2.0});
  const Vec3 j1 = m.rest_joints[1];
  for (int i = 0; i < m.vertex_count(); ++i) {
    const Vec3 v = m.template_verts[i];
    const Vec3 expected =
        m.blend_weights(i, 1) == 1.0 ? Vec3(r * (v - j1)) + j1 : v;
    CHECK(norm(posed.vertices[i] - expected) < 1e-12);
  }
}

TEST_CASE("rodrigues jacobian matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec3 w{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    const auto jac = rodrigues_jacobian(w);
    const double h = 1e-6;
    for (int c = 0; c < 3; ++c) {
      Vec3 wp = w, wm = w;
      wp[c] += h;
      wm[c] -= h;
      const Mat3 rp = rodrigues(wp), rm = rodrigues(wm);
      for (int e = 0; e < 9; ++e) {
        const double fd = (rp.m[e] - rm.m[e]) / (2.0 * h);
        CHECK(std::abs(fd - jac[c].m[e]) < 1e-6);
      }
    }
  }
  // Near-zero limit.
  const auto jac0 = rodrigues_jacobian({0, 0, 0});
  CHECK(jac0[2](1, 0) == 1.0);
  CHECK(jac0[2](0, 1) == -1.0);
}

TEST_CASE("skin_backward matches finite differences through the whole chain") {
  const BodyModel& m = default_body();
  Rng rng(99);
  BodyParams p = random_params(m, rng, 0.8, 0.25, 0.01);

  // Random linear functional of the skinned vertices.
  std::vector<Vec3> weights(m.vertex_count());
  for (auto& w : weights)
    w = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto loss = [&](const BodyParams& params) {
    const Mesh posed = skin(m, params);
    double s = 0.0;
    for (int i = 0; i < m.vertex_count(); ++i) s += dot(weights[i], posed.vertices[i]);
    return s;
  };

  const SkinGrads grads = skin_backward(m, p, weights);
  const double h = 1e-6;
  for (int k = 0; k < m.shape_count(); ++k) {
    BodyParams pp = p, pm = p;
    pp.beta[k] += h;
    pm.beta[k] -= h;
    const double fd = (loss(pp) - loss(pm)) / (2.0 * h);
    CHECK(std::abs(fd - grads.dbeta[k]) < 1e-4 * (1.0 + std::abs(fd)));
  }
  for (int t = 0; t < 3 * m.joint_count(); t += 7) {
    BodyParams pp = p, pm = p;
    pp.theta[t] += h;
    pm.theta[t] -= h;
    const double fd = (loss(pp) - loss(pm)) / (2.0 * h);
    CHECK(std::abs(fd - grads.dtheta[t]) < 1e-4 * (1.0 + std::abs(fd)));
  }
  // Offsets: spot-check a few vertices.
  for (int i = 0; i < m.vertex_count(); i += 211) {
    for (int c = 0; c < 3; ++c) {
      BodyParams pp = p, pm = p;
      pp.offsets[i][c] += h;
      pm.offsets[i][c] -= h;
      const double fd = (loss(pp) - loss(pm)) / (2.0 * h);
      CHECK(std::abs(fd - grads.doffsets[i][c]) < 1e-5 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("pose blendshapes contribute and their gradient is exact") {
  BodyModel m = two_bone_cylinder();
  Rng rng(5);
  m.pose_dirs.resize(9);
  for (auto& field : m.pose_dirs) {
    field.resize(m.vertex_count());
    for (auto& v : field)
      v = {rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01)};
  }
  BodyParams p = BodyParams::zero(0, 2, m.vertex_count());
  p.theta = {0.0, 0.0, 0.0, 0.1, -0.2, 0.3};
  std::vector<Vec3> weights(m.vertex_count());
  for (auto& w : weights)
    w = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto loss = [&](const BodyParams& params) {
    const Mesh posed = skin(m, params);
    double s = 0.0;
    for (int i = 0; i < m.vertex_count(); ++i) s += dot(weights[i], posed.vertices[i]);
    return s;
  };
  const SkinGrads grads = skin_backward(m, p, weights);
  const double h = 1e-6;
  for (int t = 3; t < 6; ++t) {
    BodyParams pp = p, pm = p;
    pp.theta[t] += h;
    pm.theta[t] -= h;
    const double fd = (loss(pp) - loss(pm)) / (2.0 * h);
    CHECK(std::abs(fd - grads.dtheta[t]) < 1e-5 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("garment template selection matches the dense indicator product") {
  const BodyModel& m = default_body();
  const GarmentTemplate& g = m.garments.at("tshirt");
  Rng rng(13);
  BodyParams p = random_params(m, rng, 1.0, 0.0, 0.0);
  const auto tmpl = garment_template(m, g, p.beta, p.theta);
  const auto u = unposed(m, p);
  const SparseMatrix ind = g.indicator(m.vertex_count());
  const auto dense = ind.apply(u);
  REQUIRE(static_cast<int>(dense.size()) == g.size());
  for (int i = 0; i < g.size(); ++i) CHECK(norm(tmpl[i] - dense[i]) < 1e-12);
}

TEST_CASE("garment_skin equals scatter-then-skin row selection") {
  const BodyModel& m = default_body();
  const GarmentTemplate& g = m.garments.at("shorts");
  Rng rng(17);
  BodyParams p = random_params(m, rng, 1.0, 0.15, 0.0);
  std::vector<Vec3> d_g(g.size());
  for (auto& d : d_g)
    d = {rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)};

  const Mesh garment = garment_skin(m, g, p.beta, p.theta, d_g);

  BodyParams scattered = p;
  for (int i = 0; i < g.size(); ++i) scattered.offsets[g.body_vertex[i]] = d_g[i];
  const Mesh body = skin(m, scattered);
  for (int i = 0; i < g.size(); ++i)
    CHECK(norm(garment.vertices[i] - body.vertices[g.body_vertex[i]]) < 1e-9);

  // Zero offsets, zero pose: the unposed template cut.
  const Mesh plain = garment_skin(m, g, p.beta, std::vector<double>(48, 0.0),
                                  std::vector<Vec3>(g.size()));
  const auto tmpl = garment_template(m, g, p.beta, std::vector<double>(48, 0.0));
  for (int i = 0; i < g.size(); ++i) CHECK(norm(plain.vertices[i] - tmpl[i]) < 1e-12);
}

TEST_CASE("garment_unskin inverts garment_skin") {
  const BodyModel& m = default_body();
  const GarmentTemplate& g = m.garments.at("tshirt");
  Rng rng(19);
  BodyParams p = random_params(m, rng, 1.2, 0.2, 0.0);
  std::vector<Vec3> d_g(g.size());
  for (auto& d : d_g)
    d = {rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)};
  const Mesh garment = garment_skin(m, g, p.beta, p.theta, d_g);
  const auto rec = garment_unskin(m, g, p.beta, p.theta, garment.vertices);
  for (int i = 0; i < g.size(); ++i) CHECK(norm(rec[i] - d_g[i]) < 1e-9);
}

TEST_CASE("body model round-trips through the asset directory") {
  const auto dir = std::filesystem::temp_directory_path() / "gf_body_asset";
  std::filesystem::remove_all(dir);
  const BodyModel& m = default_body();
  save_body_model(dir, m);
  const BodyModel back = load_body_model(dir);
  CHECK(back.vertex_count() == m.vertex_count());
  CHECK(back.parents == m.parents);
  CHECK(back.skin_vertices == m.skin_vertices);
  CHECK(back.garments.at("tshirt").body_vertex == m.garments.at("tshirt").body_vertex);
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK(norm(back.template_verts[i] - m.template_verts[i]) == 0.0);
  Rng rng(3);
  BodyParams p = random_params(back, rng, 1.0, 0.1, 0.0);
  const Mesh a = skin(m, p);
  const Mesh b = skin(back, p);
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK(norm(a.vertices[i] - b.vertices[i]) < 1e-12);
}
