#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gf {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double px, double py, double pz) : x(px), y(py), z(pz) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return n > 0.0 ? v / n : Vec3{};
}

// Triangle mesh: positions in meters, faces counter-clockwise.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
};

// Throws std::invalid_argument if a face index is out of range or a face
// repeats a vertex.
void validate_mesh(const Mesh& mesh);

Vec3 centroid(const Mesh& mesh);

// Sparse matrix in CSR form; per-row entries are sorted by column.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  struct Triplet {
    int row;
    int col;
    double value;
  };
  // Builds from (row, col, value) triplets. Duplicate (row, col) pairs are
  // rejected.
  static SparseMatrix from_triplets(int rows, int cols,
                                    std::vector<Triplet> triplets);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return val_.size(); }

  struct Entry {
    int col;
    double value;
  };
  // Entries of one row, sorted by column.
  std::vector<Entry> row_slice(int r) const;

  // y = A * x for per-vertex 3-vectors.
  std::vector<Vec3> apply(const std::vector<Vec3>& x) const;
  // y = A^T * x.
  std::vector<Vec3> apply_transpose(const std::vector<Vec3>& x) const;

  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_index() const { return col_; }
  const std::vector<double>& values() const { return val_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_;
  std::vector<int> col_;
  std::vector<double> val_;
};

// Wavefront OBJ, positions and faces only. Faces with more than three
// vertices are fan-triangulated; normals/UVs in the file are ignored.
Mesh load_obj(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const Mesh& mesh);

// Unit face normals following the winding. Throws std::invalid_argument
// naming the face if a face has area <= min_area (default 1e-12 m^2).
std::vector<Vec3> face_normals(const Mesh& mesh, double min_area = 1e-12);

// Non-throwing variant: degenerate faces get a zero normal and their indices
// are appended to *skipped (if non-null).
std::vector<Vec3> face_normals_safe(const Mesh& mesh,
                                    std::vector<int>* skipped = nullptr,
                                    double min_area = 1e-12);

// Area-weighted vertex normals (normalized; zero for isolated vertices).
std::vector<Vec3> vertex_normals(const Mesh& mesh);

// Combinatorial (uniform) graph Laplacian: diagonal = degree, off-diagonal
// -1 per edge. Isolated vertices yield zero rows and are reported.
struct LaplacianResult {
  SparseMatrix matrix;
  std::vector<int> isolated_vertices;
};
LaplacianResult graph_laplacian(const Mesh& mesh);

// Multi-source Dijkstra over the edge graph with Euclidean edge lengths.
// Vertices in components without a seed get +infinity and are reported.
struct GeodesicResult {
  std::vector<double> distances;
  std::vector<int> unreachable;
};
GeodesicResult geodesic_distances(const Mesh& mesh,
                                  const std::vector<int>& seeds);

double surface_area(const Mesh& mesh);

// For each source vertex, the k nearest target vertices by Euclidean
// distance (ascending; exact ties broken by lower index).
std::vector<std::vector<int>> knn_neighborhoods(const Mesh& source,
                                                const Mesh& target, int k);
std::vector<std::vector<int>> knn_points(const std::vector<Vec3>& source,
                                         const std::vector<Vec3>& target, int k);

// Index of the nearest target point per query (ties to lower index).
std::vector<int> nearest_vertex(const std::vector<Vec3>& queries,
                                const std::vector<Vec3>& targets);

// Undirected edge list derived from faces (each pair once, a < b).
std::vector<std::array<int, 2>> mesh_edges(const Mesh& mesh);

namespace ref {
// Serial twins used by tests and the benchmark tool.
std::vector<std::vector<int>> knn_points(const std::vector<Vec3>& source,
                                         const std::vector<Vec3>& target, int k);
std::vector<int> nearest_vertex(const std::vector<Vec3>& queries,
                                const std::vector<Vec3>& targets);
}  // namespace ref

}  // namespace gf
