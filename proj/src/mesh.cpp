#include "gf/mesh.h"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>

#include "gf/kernels.h"

namespace gf {

void validate_mesh(const Mesh& mesh) {
  const int n = mesh.vertex_count();
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& face = mesh.faces[f];
    for (int c = 0; c < 3; ++c) {
      if (face[c] < 0 || face[c] >= n)
        throw std::invalid_argument("face " + std::to_string(f) +
                                    " references vertex " + std::to_string(face[c]) +
                                    " outside [0," + std::to_string(n) + ")");
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
      throw std::invalid_argument("face " + std::to_string(f) +
                                  " repeats a vertex index");
  }
}

Vec3 centroid(const Mesh& mesh) {
  Vec3 c;
  for (const auto& v : mesh.vertices) c += v;
  return mesh.vertices.empty() ? c : c / static_cast<double>(mesh.vertices.size());
}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols,
                                         std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t i = 1; i < triplets.size(); ++i) {
    if (triplets[i].row == triplets[i - 1].row &&
        triplets[i].col == triplets[i - 1].col)
      throw std::invalid_argument("duplicate sparse entry at (" +
                                  std::to_string(triplets[i].row) + "," +
                                  std::to_string(triplets[i].col) + ")");
  }
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_.assign(rows + 1, 0);
  m.col_.reserve(triplets.size());
  m.val_.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw std::invalid_argument("sparse entry out of bounds");
    m.row_ptr_[t.row + 1]++;
    m.col_.push_back(t.col);
    m.val_.push_back(t.value);
  }
  for (int r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

std::vector<SparseMatrix::Entry> SparseMatrix::row_slice(int r) const {
  std::vector<Entry> out;
  for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i)
    out.push_back({col_[i], val_[i]});
  return out;
}

std::vector<Vec3> SparseMatrix::apply(const std::vector<Vec3>& x) const {
  if (static_cast<int>(x.size()) != cols_)
    throw std::invalid_argument("sparse apply: dimension mismatch");
  std::vector<Vec3> y(rows_);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows_; ++r) {
    Vec3 acc;
    for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i) acc += val_[i] * x[col_[i]];
    y[r] = acc;
  }
  return y;
}

std::vector<Vec3> SparseMatrix::apply_transpose(const std::vector<Vec3>& x) const {
  if (static_cast<int>(x.size()) != rows_)
    throw std::invalid_argument("sparse apply_transpose: dimension mismatch");
  std::vector<Vec3> y(cols_);
  for (int r = 0; r < rows_; ++r)
    for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i)
      y[col_[i]] += val_[i] * x[r];
  return y;
}

namespace {

int parse_obj_index(const std::string& token, int vertex_count, int line_no) {
  // Take everything before the first '/', tolerating f v/vt/vn forms.
  const std::size_t slash = token.find('/');
  const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
  int idx = 0;
  try {
    idx = std::stoi(head);
  } catch (const std::exception&) {
    throw std::runtime_error("OBJ parse error at line " + std::to_string(line_no) +
                             ": bad face index '" + token + "'");
  }
  if (idx < 0) idx = vertex_count + idx + 1;  // relative indexing
  if (idx < 1 || idx > vertex_count)
    throw std::invalid_argument("OBJ validation error at line " +
                                std::to_string(line_no) + ": face index " + head +
                                " out of range");
  return idx - 1;
}

}  // namespace

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Mesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z))
        throw std::runtime_error("OBJ parse error at line " + std::to_string(line_no) +
                                 ": malformed vertex record");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string token;
      while (ss >> token)
        poly.push_back(parse_obj_index(token, mesh.vertex_count(), line_no));
      if (poly.size() < 3)
        throw std::runtime_error("OBJ parse error at line " + std::to_string(line_no) +
                                 ": face with fewer than 3 vertices");
      for (std::size_t i = 1; i + 1 < poly.size(); ++i)
        mesh.faces.push_back({poly[0], poly[i], poly[i + 1]});
    }
    // All other records (vn, vt, comments, groups) are ignored.
  }
  validate_mesh(mesh);
  return mesh;
}

void save_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (f == nullptr) throw std::runtime_error("cannot open " + path.string());
  for (const auto& v : mesh.vertices)
    std::fprintf(f, "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
  for (const auto& face : mesh.faces)
    std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
  std::fclose(f);
}

std::vector<Vec3> face_normals(const Mesh& mesh, double min_area) {
  std::vector<Vec3> normals(mesh.face_count());
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& fc = mesh.faces[f];
    const Vec3 c = cross(mesh.vertices[fc[1]] - mesh.vertices[fc[0]],
                         mesh.vertices[fc[2]] - mesh.vertices[fc[0]]);
    const double area = 0.5 * norm(c);
    if (area <= min_area)
      throw std::invalid_argument("degenerate face " + std::to_string(f) +
                                  " (area " + std::to_string(area) + " m^2)");
    normals[f] = c / (2.0 * area);
  }
  return normals;
}

std::vector<Vec3> face_normals_safe(const Mesh& mesh, std::vector<int>* skipped,
                                    double min_area) {
  std::vector<Vec3> normals(mesh.face_count());
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& fc = mesh.faces[f];
    const Vec3 c = cross(mesh.vertices[fc[1]] - mesh.vertices[fc[0]],
                         mesh.vertices[fc[2]] - mesh.vertices[fc[0]]);
    const double area = 0.5 * norm(c);
    if (area <= min_area) {
      if (skipped != nullptr) skipped->push_back(f);
      normals[f] = Vec3{};
    } else {
      normals[f] = c / (2.0 * area);
    }
  }
  return normals;
}

std::vector<Vec3> vertex_normals(const Mesh& mesh) {
  std::vector<Vec3> acc(mesh.vertex_count());
  for (const auto& fc : mesh.faces) {
    // Unnormalized cross product = 2x area weighting.
    const Vec3 c = cross(mesh.vertices[fc[1]] - mesh.vertices[fc[0]],
                         mesh.vertices[fc[2]] - mesh.vertices[fc[0]]);
    acc[fc[0]] += c;
    acc[fc[1]] += c;
    acc[fc[2]] += c;
  }
  for (auto& n : acc) n = normalized(n);
  return acc;
}

std::vector<std::array<int, 2>> mesh_edges(const Mesh& mesh) {
  std::vector<std::array<int, 2>> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const auto& fc : mesh.faces) {
    for (int c = 0; c < 3; ++c) {
      int a = fc[c], b = fc[(c + 1) % 3];
      if (a > b) std::swap(a, b);
      edges.push_back({a, b});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

LaplacianResult graph_laplacian(const Mesh& mesh) {
  const auto edges = mesh_edges(mesh);
  if (edges.empty() && mesh.vertex_count() > 0 && mesh.face_count() > 0)
    throw std::invalid_argument("graph_laplacian: mesh has no edges");
  const int n = mesh.vertex_count();
  std::vector<int> degree(n, 0);
  std::vector<SparseMatrix::Triplet> triplets;
  triplets.reserve(edges.size() * 2 + n);
  for (const auto& e : edges) {
    degree[e[0]]++;
    degree[e[1]]++;
    triplets.push_back({e[0], e[1], -1.0});
    triplets.push_back({e[1], e[0], -1.0});
  }
  LaplacianResult out;
  for (int v = 0; v < n; ++v) {
    if (degree[v] == 0) {
      out.isolated_vertices.push_back(v);
    } else {
      triplets.push_back({v, v, static_cast<double>(degree[v])});
    }
  }
  out.matrix = SparseMatrix::from_triplets(n, n, std::move(triplets));
  return out;
}

GeodesicResult geodesic_distances(const Mesh& mesh, const std::vector<int>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("geodesic_distances: no seeds");
  const int n = mesh.vertex_count();
  // Adjacency in CSR form.
  const auto edges = mesh_edges(mesh);
  std::vector<int> head(n + 1, 0);
  for (const auto& e : edges) {
    head[e[0] + 1]++;
    head[e[1] + 1]++;
  }
  for (int v = 0; v < n; ++v) head[v + 1] += head[v];
  std::vector<int> adj(edges.size() * 2);
  std::vector<double> len(edges.size() * 2);
  {
    std::vector<int> cursor(head.begin(), head.end() - 1);
    for (const auto& e : edges) {
      const double l = norm(mesh.vertices[e[0]] - mesh.vertices[e[1]]);
      adj[cursor[e[0]]] = e[1];
      len[cursor[e[0]]++] = l;
      adj[cursor[e[1]]] = e[0];
      len[cursor[e[1]]++] = l;
    }
  }

  GeodesicResult out;
  out.distances.assign(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
  for (int s : seeds) {
    if (s < 0 || s >= n)
      throw std::invalid_argument("geodesic_distances: seed out of range");
    out.distances[s] = 0.0;
    queue.push({0.0, s});
  }
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > out.distances[v]) continue;
    for (int i = head[v]; i < head[v + 1]; ++i) {
      const double nd = d + len[i];
      if (nd < out.distances[adj[i]]) {
        out.distances[adj[i]] = nd;
        queue.push({nd, adj[i]});
      }
    }
  }
  for (int v = 0; v < n; ++v)
    if (std::isinf(out.distances[v])) out.unreachable.push_back(v);
  return out;
}

double surface_area(const Mesh& mesh) {
  std::vector<double> areas(mesh.face_count());
#pragma omp parallel for schedule(static)
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& fc = mesh.faces[f];
    areas[f] = 0.5 * norm(cross(mesh.vertices[fc[1]] - mesh.vertices[fc[0]],
                                mesh.vertices[fc[2]] - mesh.vertices[fc[0]]));
  }
  return kernels::det_sum(areas.data(), areas.size());
}

namespace {

std::vector<int> knn_one(const Vec3& p, const std::vector<Vec3>& target, int k) {
  std::vector<std::pair<double, int>> dist(target.size());
  for (std::size_t j = 0; j < target.size(); ++j)
    dist[j] = {dot(target[j] - p, target[j] - p), static_cast<int>(j)};
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  std::vector<int> idx(k);
  for (int j = 0; j < k; ++j) idx[j] = dist[j].second;
  return idx;
}

}  // namespace

std::vector<std::vector<int>> knn_points(const std::vector<Vec3>& source,
                                         const std::vector<Vec3>& target, int k) {
  if (k < 1 || k > static_cast<int>(target.size()))
    throw std::invalid_argument("knn: k=" + std::to_string(k) +
                                " exceeds target size " +
                                std::to_string(target.size()));
  std::vector<std::vector<int>> out(source.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(source.size()); ++i)
    out[i] = knn_one(source[i], target, k);
  return out;
}

std::vector<std::vector<int>> knn_neighborhoods(const Mesh& source,
                                                const Mesh& target, int k) {
  return knn_points(source.vertices, target.vertices, k);
}

std::vector<int> nearest_vertex(const std::vector<Vec3>& queries,
                                const std::vector<Vec3>& targets) {
  if (targets.empty()) throw std::invalid_argument("nearest_vertex: empty targets");
  std::vector<int> out(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(queries.size()); ++i) {
    const Vec3 p = queries[i];
    int best = 0;
    double best_d = dot(targets[0] - p, targets[0] - p);
    for (std::size_t j = 1; j < targets.size(); ++j) {
      const double d = dot(targets[j] - p, targets[j] - p);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    out[i] = best;
  }
  return out;
}

namespace ref {

std::vector<std::vector<int>> knn_points(const std::vector<Vec3>& source,
                                         const std::vector<Vec3>& target, int k) {
  std::vector<std::vector<int>> out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    std::vector<std::pair<double, int>> dist(target.size());
    for (std::size_t j = 0; j < target.size(); ++j)
      dist[j] = {norm(target[j] - source[i]), static_cast<int>(j)};
    std::sort(dist.begin(), dist.end());
    out[i].resize(k);
    for (int j = 0; j < k; ++j) out[i][j] = dist[j].second;
  }
  return out;
}

std::vector<int> nearest_vertex(const std::vector<Vec3>& queries,
                                const std::vector<Vec3>& targets) {
  std::vector<int> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const double d = norm(targets[j] - queries[i]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    out[i] = arg;
  }
  return out;
}

}  // namespace ref

}  // namespace gf
