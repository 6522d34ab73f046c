#include "gf/mesh.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "gf/rng.h"

using namespace gf;

namespace {

// Jittered triangulated grid patch, rows x cols vertices.
Mesh grid_mesh(int rows, int cols, double jitter, std::uint64_t seed) {
  Rng rng(seed);
  Mesh m;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m.vertices.push_back({c * 0.1 + rng.uniform(-jitter, jitter),
                            r * 0.1 + rng.uniform(-jitter, jitter),
                            rng.uniform(-jitter, jitter)});
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) {
      const int a = r * cols + c, b = a + 1, d = a + cols, e = d + 1;
      m.faces.push_back({a, b, e});
      m.faces.push_back({a, e, d});
    }
  return m;
}

Mesh unit_cube() {
  Mesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({static_cast<double>(i & 1), static_cast<double>((i >> 1) & 1),
                          static_cast<double>((i >> 2) & 1)});
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

}  // namespace

TEST_CASE("load_obj parses minimal and quad faces") {
  const auto dir = std::filesystem::temp_directory_path() / "gf_mesh_test";
  std::filesystem::create_directories(dir);
  {
    std::FILE* f = std::fopen((dir / "tri.obj").string().c_str(), "wb");
    std::fputs("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", f);
    std::fclose(f);
    const Mesh m = load_obj(dir / "tri.obj");
    CHECK(m.vertex_count() == 3);
    CHECK(m.face_count() == 1);
  }
  {
    std::FILE* f = std::fopen((dir / "quad.obj").string().c_str(), "wb");
    std::fputs("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", f);
    std::fclose(f);
    const Mesh m = load_obj(dir / "quad.obj");
    CHECK(m.face_count() == 2);
    CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
    CHECK(m.faces[1] == std::array<int, 3>{0, 2, 3});
  }
  {
    std::FILE* f = std::fopen((dir / "bad.obj").string().c_str(), "wb");
    std::fputs("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", f);
    std::fclose(f);
    CHECK_THROWS(load_obj(dir / "bad.obj"));
  }
}

TEST_CASE("obj round-trip preserves a synthetic mesh within 1e-6") {
  const auto dir = std::filesystem::temp_directory_path() / "gf_mesh_test";
  std::filesystem::create_directories(dir);
  const Mesh m = grid_mesh(10, 10, 0.02, 7);
  save_obj(dir / "rt.obj", m);
  const Mesh back = load_obj(dir / "rt.obj");
  REQUIRE(back.vertex_count() == m.vertex_count());
  REQUIRE(back.faces == m.faces);
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK(norm(back.vertices[i] - m.vertices[i]) < 1e-6);
}

TEST_CASE("face normals: right-hand rule and orientation flip") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  auto n = face_normals(m);
  CHECK(norm(n[0] - Vec3{0, 0, 1}) < 1e-12);
  m.faces = {{0, 2, 1}};
  n = face_normals(m);
  CHECK(norm(n[0] - Vec3{0, 0, -1}) < 1e-12);
}

TEST_CASE("face normals match the cross-product oracle and rotate with the mesh") {
  Rng rng(11);
  Mesh m = grid_mesh(6, 6, 0.03, 3);
  const auto n = face_normals(m);
  for (int f = 0; f < m.face_count(); ++f) {
    const Vec3 e1 = m.vertices[m.faces[f][1]] - m.vertices[m.faces[f][0]];
    const Vec3 e2 = m.vertices[m.faces[f][2]] - m.vertices[m.faces[f][0]];
    CHECK(std::abs(dot(n[f], e1)) < 1e-9);
    CHECK(std::abs(dot(n[f], e2)) < 1e-9);
    CHECK(norm(n[f]) == doctest::Approx(1.0).epsilon(1e-12));
    const Vec3 oracle = normalized(cross(e1, e2));
    CHECK(norm(n[f] - oracle) < 1e-9);
  }
  // Rigid rotation equivariance (rotation about a random axis).
  const double ang = 0.83;
  const double ca = std::cos(ang), sa = std::sin(ang);
  auto rot = [&](const Vec3& v) {
    return Vec3{v.x * ca - v.y * sa, v.x * sa + v.y * ca, v.z};
  };
  Mesh m2 = m;
  for (auto& v : m2.vertices) v = rot(v);
  const auto n2 = face_normals(m2);
  for (int f = 0; f < m.face_count(); ++f) CHECK(norm(n2[f] - rot(n[f])) < 1e-9);
  (void)rng;
}

TEST_CASE("degenerate face raises with its index") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  m.faces = {{0, 1, 2}};
  CHECK_THROWS_WITH_AS(face_normals(m), doctest::Contains("face 0"),
                       std::invalid_argument);
}

TEST_CASE("graph laplacian of a single triangle is the K3 laplacian") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  const auto lap = graph_laplacian(m);
  CHECK(lap.isolated_vertices.empty());
  for (int r = 0; r < 3; ++r) {
    const auto row = lap.matrix.row_slice(r);
    REQUIRE(row.size() == 3);
    double sum = 0.0;
    for (const auto& e : row) {
      sum += e.value;
      if (e.col == r)
        CHECK(e.value == 2.0);
      else
        CHECK(e.value == -1.0);
    }
    CHECK(sum == 0.0);
  }
}

TEST_CASE("laplacian row sums vanish and interior grid differential coords are zero") {
  const Mesh flat = grid_mesh(7, 7, 0.0, 0);
  const auto lap = graph_laplacian(flat);
  // Row sums exactly zero (integer arithmetic).
  for (int r = 0; r < flat.vertex_count(); ++r) {
    double sum = 0.0;
    for (const auto& e : lap.matrix.row_slice(r)) sum += e.value;
    CHECK(sum == 0.0);
  }
  // For a regular planar grid, interior vertices have symmetric neighborhoods:
  // L V = degree*v - sum(neighbors) = 0, verified by direct summation.
  const auto lv = lap.matrix.apply(flat.vertices);
  for (int r = 1; r < 6; ++r)
    for (int c = 1; c < 6; ++c) CHECK(norm(lv[r * 7 + c]) < 1e-9);
}

TEST_CASE("isolated vertices are flagged with zero rows") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
  m.faces = {{0, 1, 2}};
  const auto lap = graph_laplacian(m);
  REQUIRE(lap.isolated_vertices == std::vector<int>{3});
  CHECK(lap.matrix.row_slice(3).empty());
}

TEST_CASE("geodesics: all seeds zero, line graph distances") {
  Mesh line;
  line.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  line.faces = {};  // use raw edges through a degenerate-free path of triangles
  // Build a thin strip so edges exist: duplicate points offset in y.
  Mesh strip;
  for (int i = 0; i < 4; ++i) {
    strip.vertices.push_back({static_cast<double>(i), 0, 0});
  }
  strip.vertices.push_back({0.0, 1000.0, 0.0});  // far apex shared by all faces
  strip.faces = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}};
  const auto res = geodesic_distances(strip, {0});
  CHECK(res.distances[0] == 0.0);
  CHECK(res.distances[1] == doctest::Approx(1.0));
  CHECK(res.distances[2] == doctest::Approx(2.0));
  CHECK(res.distances[3] == doctest::Approx(3.0));

  std::vector<int> all = {0, 1, 2, 3, 4};
  const auto zero = geodesic_distances(strip, all);
  for (double d : zero.distances) CHECK(d == 0.0);
}

TEST_CASE("geodesics match floyd-warshall on a 50-vertex mesh") {
  const Mesh m = grid_mesh(5, 10, 0.02, 21);
  REQUIRE(m.vertex_count() == 50);
  const int n = m.vertex_count();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 1e18));
  for (int i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const auto& e : mesh_edges(m)) {
    const double l = norm(m.vertices[e[0]] - m.vertices[e[1]]);
    d[e[0]][e[1]] = std::min(d[e[0]][e[1]], l);
    d[e[1]][e[0]] = d[e[0]][e[1]];
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);

  const auto res = geodesic_distances(m, {17});
  for (int i = 0; i < n; ++i) CHECK(std::abs(res.distances[i] - d[17][i]) < 1e-9);

  // Triangle inequality along edges.
  for (const auto& e : mesh_edges(m)) {
    const double l = norm(m.vertices[e[0]] - m.vertices[e[1]]);
    CHECK(std::abs(res.distances[e[0]] - res.distances[e[1]]) <= l + 1e-9);
  }
}

TEST_CASE("unreachable components get infinity and are reported") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {9, 9, 9}, {10, 9, 9}, {9, 10, 9}};
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  const auto res = geodesic_distances(m, {0});
  CHECK(res.unreachable == std::vector<int>{3, 4, 5});
  CHECK(std::isinf(res.distances[4]));
}

TEST_CASE("surface area: unit cube, similarity scaling, per-face oracle") {
  const Mesh cube = unit_cube();
  CHECK(surface_area(cube) == doctest::Approx(6.0).epsilon(1e-12));

  Mesh scaled = cube;
  for (auto& v : scaled.vertices) v *= 2.0;
  CHECK(surface_area(scaled) == doctest::Approx(4.0 * 6.0).epsilon(1e-9));

  const Mesh m = grid_mesh(6, 8, 0.03, 5);
  double oracle = 0.0;
  for (const auto& fc : m.faces)
    oracle += 0.5 * norm(cross(m.vertices[fc[1]] - m.vertices[fc[0]],
                               m.vertices[fc[2]] - m.vertices[fc[0]]));
  CHECK(surface_area(m) == doctest::Approx(oracle).epsilon(1e-12));

  // Rigid invariance.
  Mesh rotated = m;
  const double ca = std::cos(0.4), sa = std::sin(0.4);
  for (auto& v : rotated.vertices)
    v = {v.x, v.y * ca - v.z * sa + 3.0, v.y * sa + v.z * ca - 1.0};
  CHECK(std::abs(surface_area(rotated) - surface_area(m)) < 1e-9);
}

TEST_CASE("knn matches the exhaustive oracle with deterministic ties") {
  Rng rng(31);
  std::vector<Vec3> source, target;
  for (int i = 0; i < 40; ++i)
    source.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});
  for (int i = 0; i < 200; ++i)
    target.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});

  const auto got = knn_points(source, target, 5);
  const auto want = ref::knn_points(source, target, 5);
  CHECK(got == want);

  // Coincident vertex, k = 1.
  source[0] = target[137];
  const auto hit = knn_points(source, target, 1);
  CHECK(hit[0][0] == 137);

  // k = |target| returns everything sorted by distance.
  const auto all = knn_points({source[1]}, target, 200);
  CHECK(all[0].size() == 200);
  for (std::size_t j = 1; j < all[0].size(); ++j)
    CHECK(norm(target[all[0][j - 1]] - source[1]) <=
          norm(target[all[0][j]] - source[1]) + 1e-15);

  CHECK_THROWS(knn_points(source, target, 201));

  // Nearest-vertex kernel agrees with its reference.
  CHECK(nearest_vertex(source, target) == ref::nearest_vertex(source, target));
}
