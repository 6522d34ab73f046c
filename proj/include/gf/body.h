#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gf/mesh.h"
#include "gf/tensor.h"

namespace gf {

struct Mat3 {
  // Row-major 3x3.
  double m[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};

  static Mat3 identity() {
    Mat3 r;
    r.m[0] = r.m[4] = r.m[8] = 1.0;
    return r;
  }
  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }
};

Mat3 operator*(const Mat3& a, const Mat3& b);
Vec3 operator*(const Mat3& a, const Vec3& v);
Mat3 operator+(const Mat3& a, const Mat3& b);
Mat3 operator*(const Mat3& a, double s);
Mat3 transpose(const Mat3& a);
Mat3 outer(const Vec3& a, const Vec3& b);
double frobenius_dot(const Mat3& a, const Mat3& b);
Mat3 inverse(const Mat3& a);

// Axis-angle (unnormalized axis, magnitude = angle) to rotation matrix, plus
// the analytic derivative with respect to each axis-angle component.
Mat3 rodrigues(const Vec3& w);
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& w);

struct Affine {
  Mat3 rot;
  Vec3 trans;
  Vec3 apply(const Vec3& p) const { return rot * p + trans; }
};

enum class GarmentLayer { kUpper, kLower };

// Garment class template: a subset of body template vertices (the indicator,
// stored as one associated body vertex per garment vertex) plus the garment's
// own triangulation.
struct GarmentTemplate {
  std::string class_name;
  GarmentLayer layer = GarmentLayer::kUpper;
  std::vector<int> body_vertex;               // m_g entries, distinct
  std::vector<std::array<int, 3>> faces;      // indices in [0, m_g)
  int size() const { return static_cast<int>(body_vertex.size()); }
  SparseMatrix indicator(int body_vertex_count) const;
};

struct BodyParams {
  std::vector<double> beta;    // shape coefficients, sigma-normalized
  std::vector<double> theta;   // 3J axis-angle, radians
  std::vector<Vec3> offsets;   // per-vertex displacements D, meters

  static BodyParams zero(int shape_count, int joint_count, int vertex_count) {
    BodyParams p;
    p.beta.assign(shape_count, 0.0);
    p.theta.assign(3 * joint_count, 0.0);
    p.offsets.assign(vertex_count, Vec3{});
    return p;
  }
};

// Parametric skinned body: rest template, shape/pose blendshapes, a linear
// joint regressor and blend weights. Immutable after construction.
struct BodyModel {
  std::vector<Vec3> template_verts;             // n
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> rest_joints;                // J
  std::vector<int> parents;                     // parent[0] == -1
  Mat blend_weights;                            // n x J, rows sum to 1
  std::vector<std::vector<Vec3>> shape_dirs;    // S fields of n vectors
  std::vector<std::vector<Vec3>> joint_dirs;    // S fields of J vectors
  std::vector<std::vector<Vec3>> pose_dirs;     // P fields (may be empty)
  std::vector<double> shape_sigmas;             // S
  std::map<std::string, GarmentTemplate> garments;
  std::vector<int> skin_vertices;               // I^s rows, sorted

  // Procedural-asset metadata (part/ring/segment per vertex); empty for
  // externally supplied assets.
  std::vector<int> vertex_part;
  std::vector<int> vertex_ring;
  std::vector<int> vertex_seg;

  int vertex_count() const { return static_cast<int>(template_verts.size()); }
  int joint_count() const { return static_cast<int>(rest_joints.size()); }
  int shape_count() const { return static_cast<int>(shape_dirs.size()); }
  int pose_dir_count() const { return static_cast<int>(pose_dirs.size()); }

  Mesh template_mesh() const { return Mesh{template_verts, faces}; }
};

// Parts of the procedural humanoid, in vertex_part.
enum ProceduralPart {
  kTorso = 0,
  kHead,
  kLeftUpperArm,
  kLeftForearm,
  kRightUpperArm,
  kRightForearm,
  kLeftThigh,
  kLeftCalf,
  kRightThigh,
  kRightCalf,
};

// Deterministic low-poly humanoid in a relaxed A-pose: 1002 vertices,
// 16 joints, 10 shape directions, tshirt/shorts templates and a skin-region
// registry. The seed only drives sub-millimeter surface jitter.
BodyModel build_procedural_body(std::uint64_t seed);

// Default asset used by the pipeline (fixed internal seed, cached).
const BodyModel& default_body();

// T(beta, theta, D) = template + shape blendshapes + pose blendshapes + D.
std::vector<Vec3> unposed(const BodyModel& model, const BodyParams& params);

// Shaped joint positions J(beta).
std::vector<Vec3> shaped_joints(const BodyModel& model,
                                const std::vector<double>& beta);

// Per-joint skinning transforms about J(beta).
std::vector<Affine> skinning_transforms(const BodyModel& model,
                                        const std::vector<double>& beta,
                                        const std::vector<double>& theta);

// Linear blend skinning of unposed(model, params).
Mesh skin(const BodyModel& model, const BodyParams& params);

// Gradients of an upstream scalar through skin(): given dL/dvertex, returns
// dL/dbeta, dL/dtheta and dL/dD. The chain covers blend transforms, the
// joint regressor, shape and pose blendshapes.
struct SkinGrads {
  std::vector<double> dbeta;
  std::vector<double> dtheta;
  std::vector<Vec3> doffsets;
};
SkinGrads skin_backward(const BodyModel& model, const BodyParams& params,
                        const std::vector<Vec3>& dvertices);

// I^g T(beta, theta, 0): unposed garment template vertices.
std::vector<Vec3> garment_template(const BodyModel& model,
                                   const GarmentTemplate& g,
                                   const std::vector<double>& beta,
                                   const std::vector<double>& theta);

// Eq-style garment function: skin template + d_g with the blend weights of
// the associated body vertices about J(beta).
Mesh garment_skin(const BodyModel& model, const GarmentTemplate& g,
                  const std::vector<double>& beta,
                  const std::vector<double>& theta,
                  const std::vector<Vec3>& d_g);

// Per-garment-vertex blended affine transforms for the same skinning; used
// for gradients w.r.t. d_g and for un-posing garments.
std::vector<Affine> garment_vertex_transforms(const BodyModel& model,
                                              const GarmentTemplate& g,
                                              const std::vector<double>& beta,
                                              const std::vector<double>& theta);

// Inverts garment_skin for known (beta, theta): recovers d_g from posed
// vertices.
std::vector<Vec3> garment_unskin(const BodyModel& model, const GarmentTemplate& g,
                                 const std::vector<double>& beta,
                                 const std::vector<double>& theta,
                                 const std::vector<Vec3>& posed);

// Asset serialization: a directory of GFTENSOR files plus manifest.json
// (joint tree, garment registry, skin region). Externally supplied models in
// the same layout load through the same hook.
void save_body_model(const std::filesystem::path& dir, const BodyModel& model);
BodyModel load_body_model(const std::filesystem::path& dir);

}  // namespace gf
