#include "gf/body.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "gf/rng.h"
#include "gf/tensor.h"
#include "json.hpp"

namespace gf {

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      r(i, j) = s;
    }
  return r;
}

Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a.m[0] * v.x + a.m[1] * v.y + a.m[2] * v.z,
          a.m[3] * v.x + a.m[4] * v.y + a.m[5] * v.z,
          a.m[6] * v.x + a.m[7] * v.y + a.m[8] * v.z};
}

Mat3 operator+(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = a.m[i] + b.m[i];
  return r;
}

Mat3 operator*(const Mat3& a, double s) {
  Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = a.m[i] * s;
  return r;
}

Mat3 transpose(const Mat3& a) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = a(j, i);
  return r;
}

Mat3 outer(const Vec3& a, const Vec3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = a[i] * b[j];
  return r;
}

double frobenius_dot(const Mat3& a, const Mat3& b) {
  double s = 0.0;
  for (int i = 0; i < 9; ++i) s += a.m[i] * b.m[i];
  return s;
}

Mat3 inverse(const Mat3& a) {
  const double c00 = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  const double c01 = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
  const double c02 = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
  const double det = a(0, 0) * c00 + a(0, 1) * c01 + a(0, 2) * c02;
  if (std::abs(det) < 1e-14) throw std::runtime_error("Mat3: singular matrix");
  const double id = 1.0 / det;
  Mat3 r;
  r(0, 0) = c00 * id;
  r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) * id;
  r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) * id;
  r(1, 0) = c01 * id;
  r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) * id;
  r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) * id;
  r(2, 0) = c02 * id;
  r(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) * id;
  r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) * id;
  return r;
}

namespace {

Mat3 skew(const Vec3& w) {
  Mat3 k;
  k(0, 1) = -w.z;
  k(0, 2) = w.y;
  k(1, 0) = w.z;
  k(1, 2) = -w.x;
  k(2, 0) = -w.y;
  k(2, 1) = w.x;
  return k;
}

}  // namespace

Mat3 rodrigues(const Vec3& w) {
  const double phi2 = dot(w, w);
  const double phi = std::sqrt(phi2);
  double a, b;  // sin(phi)/phi, (1-cos(phi))/phi^2
  if (phi < 1e-8) {
    a = 1.0 - phi2 / 6.0;
    b = 0.5 - phi2 / 24.0;
  } else {
    a = std::sin(phi) / phi;
    b = (1.0 - std::cos(phi)) / phi2;
  }
  const Mat3 k = skew(w);
  return Mat3::identity() + k * a + (k * k) * b;
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& w) {
  const double phi2 = dot(w, w);
  std::array<Mat3, 3> out;
  if (phi2 < 1e-16) {
    // d/dw of exp([w]x) at w = 0 is the generator [e_c]x.
    for (int c = 0; c < 3; ++c) {
      Vec3 e;
      e[c] = 1.0;
      out[c] = skew(e);
    }
    return out;
  }
  // Gallego & Yezzi: dR/dw_c = (w_c [w]x + [w x ((I - R) e_c)]x) / |w|^2 * R.
  const Mat3 r = rodrigues(w);
  const Mat3 kw = skew(w);
  for (int c = 0; c < 3; ++c) {
    Vec3 e;
    e[c] = 1.0;
    const Vec3 ime = e - r * e;  // (I - R) e_c
    const Mat3 num = kw * w[c] + skew(cross(w, ime));
    out[c] = (num * (1.0 / phi2)) * r;
  }
  return out;
}

SparseMatrix GarmentTemplate::indicator(int body_vertex_count) const {
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(body_vertex.size());
  for (std::size_t i = 0; i < body_vertex.size(); ++i)
    t.push_back({static_cast<int>(i), body_vertex[i], 1.0});
  return SparseMatrix::from_triplets(size(), body_vertex_count, std::move(t));
}

// ---------------------------------------------------------------------------
// Procedural humanoid
// ---------------------------------------------------------------------------

namespace {

double smoothstep01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double gauss(double x) { return std::exp(-x * x); }

struct Builder {
  BodyModel model;
  Rng rng;

  explicit Builder(std::uint64_t seed) : rng(seed) {}

  int add_vertex(const Vec3& p, int part, int ring, int seg) {
    Vec3 q = p;
    q.x += rng.uniform(-4e-4, 4e-4);
    q.y += rng.uniform(-4e-4, 4e-4);
    q.z += rng.uniform(-4e-4, 4e-4);
    model.template_verts.push_back(q);
    model.vertex_part.push_back(part);
    model.vertex_ring.push_back(ring);
    model.vertex_seg.push_back(seg);
    return static_cast<int>(model.template_verts.size()) - 1;
  }

  // Connect two rings of equal segment count (lower ring first along the
  // outward axis). Winding is fixed afterwards by orient_outward().
  void connect_rings(const std::vector<int>& lower, const std::vector<int>& upper) {
    const int s = static_cast<int>(lower.size());
    for (int i = 0; i < s; ++i) {
      const int j = (i + 1) % s;
      model.faces.push_back({lower[i], upper[j], lower[j]});
      model.faces.push_back({lower[i], upper[i], upper[j]});
    }
  }

  void orient_outward(std::size_t face_begin, const Vec3& center) {
    for (std::size_t f = face_begin; f < model.faces.size(); ++f) {
      auto& fc = model.faces[f];
      const Vec3 a = model.template_verts[fc[0]];
      const Vec3 b = model.template_verts[fc[1]];
      const Vec3 c = model.template_verts[fc[2]];
      const Vec3 n = cross(b - a, c - a);
      const Vec3 mid = (a + b + c) / 3.0;
      if (dot(n, mid - center) < 0.0) std::swap(fc[1], fc[2]);
    }
  }
};

std::vector<int> make_ring(Builder& b, int part, int ring, const Vec3& center,
                           const Vec3& u, const Vec3& w, double ru, double rw,
                           int segs) {
  std::vector<int> ids(segs);
  for (int s = 0; s < segs; ++s) {
    const double phi = 2.0 * M_PI * s / segs;
    const Vec3 p = center + u * (ru * std::cos(phi)) + w * (rw * std::sin(phi));
    ids[s] = b.add_vertex(p, part, ring, s);
  }
  return ids;
}

void make_tube(Builder& b, int part, const Vec3& from, const Vec3& to,
               const std::vector<double>& radii, int segs) {
  const Vec3 axis = normalized(to - from);
  const Vec3 u = normalized(cross(axis, Vec3{0, 0, 1}));
  const Vec3 w = normalized(cross(u, axis));
  const std::size_t face_begin = b.model.faces.size();
  std::vector<std::vector<int>> rings;
  const int nr = static_cast<int>(radii.size());
  for (int r = 0; r < nr; ++r) {
    const double t = nr > 1 ? static_cast<double>(r) / (nr - 1) : 0.0;
    const Vec3 c = from + (to - from) * t;
    rings.push_back(make_ring(b, part, r, c, u, w, radii[r], radii[r], segs));
  }
  for (int r = 0; r + 1 < nr; ++r) b.connect_rings(rings[r], rings[r + 1]);
  b.orient_outward(face_begin, (from + to) * 0.5);
}

double interp_profile(const std::vector<std::pair<double, double>>& keys, double y) {
  if (y <= keys.front().first) return keys.front().second;
  if (y >= keys.back().first) return keys.back().second;
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (y <= keys[i].first) {
      const double t = (y - keys[i - 1].first) / (keys[i].first - keys[i - 1].first);
      return keys[i - 1].second + t * (keys[i].second - keys[i - 1].second);
    }
  }
  return keys.back().second;
}

struct Skeleton {
  std::vector<Vec3> joints;
  std::vector<int> parents;
  Vec3 l_shoulder, l_elbow, l_wrist, l_hand_end;
  Vec3 r_shoulder, r_elbow, r_wrist, r_hand_end;
  Vec3 l_hip, l_knee, l_ankle;
  Vec3 r_hip, r_knee, r_ankle;
};

enum JointId {
  kPelvis = 0,
  kSpine,
  kChest,
  kNeckHead,
  kLShoulder,
  kLElbow,
  kLWrist,
  kRShoulder,
  kRElbow,
  kRWrist,
  kLHip,
  kLKnee,
  kLAnkle,
  kRHip,
  kRKnee,
  kRAnkle,
  kJointCount
};

Skeleton make_skeleton() {
  Skeleton s;
  const Vec3 arm_dir{std::sin(40.0 * M_PI / 180.0), -std::cos(40.0 * M_PI / 180.0), 0.0};
  s.l_shoulder = {0.19, 1.47, 0.0};
  s.l_elbow = s.l_shoulder + arm_dir * 0.27;
  s.l_wrist = s.l_elbow + arm_dir * 0.25;
  s.l_hand_end = s.l_wrist + arm_dir * 0.06;
  auto mirror_x = [](const Vec3& p) { return Vec3{-p.x, p.y, p.z}; };
  s.r_shoulder = mirror_x(s.l_shoulder);
  s.r_elbow = mirror_x(s.l_elbow);
  s.r_wrist = mirror_x(s.l_wrist);
  s.r_hand_end = mirror_x(s.l_hand_end);
  s.l_hip = {0.095, 0.96, 0.0};
  s.l_knee = {0.105, 0.50, 0.0};
  s.l_ankle = {0.115, 0.07, 0.0};
  s.r_hip = mirror_x(s.l_hip);
  s.r_knee = mirror_x(s.l_knee);
  s.r_ankle = mirror_x(s.l_ankle);

  s.joints.resize(kJointCount);
  s.parents.assign(kJointCount, -1);
  auto set = [&](int id, const Vec3& p, int parent) {
    s.joints[id] = p;
    s.parents[id] = parent;
  };
  set(kPelvis, {0.0, 1.00, 0.0}, -1);
  set(kSpine, {0.0, 1.18, 0.0}, kPelvis);
  set(kChest, {0.0, 1.38, 0.0}, kSpine);
  set(kNeckHead, {0.0, 1.56, 0.0}, kChest);
  set(kLShoulder, s.l_shoulder, kChest);
  set(kLElbow, s.l_elbow, kLShoulder);
  set(kLWrist, s.l_wrist, kLElbow);
  set(kRShoulder, s.r_shoulder, kChest);
  set(kRElbow, s.r_elbow, kRShoulder);
  set(kRWrist, s.r_wrist, kRElbow);
  set(kLHip, s.l_hip, kPelvis);
  set(kLKnee, s.l_knee, kLHip);
  set(kLAnkle, s.l_ankle, kLKnee);
  set(kRHip, s.r_hip, kPelvis);
  set(kRKnee, s.r_knee, kRHip);
  set(kRAnkle, s.r_ankle, kRKnee);
  return s;
}

}  // namespace

BodyModel build_procedural_body(std::uint64_t seed) {
  Builder b(seed);
  const Skeleton sk = make_skeleton();

  // Torso: 16 elliptical rings of 16 segments, hip to neck base.
  {
    const std::vector<std::pair<double, double>> rx_keys = {
        {0.93, 0.170}, {1.00, 0.165}, {1.08, 0.142}, {1.20, 0.152},
        {1.35, 0.168}, {1.44, 0.178}, {1.50, 0.125}, {1.55, 0.062}};
    const std::vector<std::pair<double, double>> rz_keys = {
        {0.93, 0.118}, {1.00, 0.115}, {1.08, 0.100}, {1.20, 0.106},
        {1.35, 0.112}, {1.44, 0.105}, {1.50, 0.085}, {1.55, 0.062}};
    const std::size_t face_begin = b.model.faces.size();
    std::vector<std::vector<int>> rings;
    for (int r = 0; r < 16; ++r) {
      const double y = 0.93 + 0.62 * r / 15.0;
      rings.push_back(make_ring(b, kTorso, r, {0.0, y, 0.0}, {1, 0, 0}, {0, 0, 1},
                                interp_profile(rx_keys, y), interp_profile(rz_keys, y),
                                16));
    }
    for (int r = 0; r + 1 < 16; ++r) b.connect_rings(rings[r], rings[r + 1]);
    b.orient_outward(face_begin, {0.0, 1.24, 0.0});
  }

  // Head: ellipsoid, 10 rings of 10 segments plus two poles.
  {
    const Vec3 c{0.0, 1.685, 0.0};
    const double rx = 0.085, ry = 0.115, rz = 0.098;
    const std::size_t face_begin = b.model.faces.size();
    std::vector<std::vector<int>> rings;
    for (int r = 0; r < 10; ++r) {
      const double tau = M_PI * (r + 1) / 11.0;
      const Vec3 center{c.x, c.y + ry * std::cos(tau), c.z};
      rings.push_back(make_ring(b, kHead, r, center, {1, 0, 0}, {0, 0, 1},
                                rx * std::sin(tau), rz * std::sin(tau), 10));
    }
    // Rings go top to bottom; connect with the lower ring first.
    for (int r = 0; r + 1 < 10; ++r) b.connect_rings(rings[r + 1], rings[r]);
    const int top = b.add_vertex({c.x, c.y + ry, c.z}, kHead, 10, 0);
    const int bottom = b.add_vertex({c.x, c.y - ry, c.z}, kHead, 11, 0);
    for (int s = 0; s < 10; ++s) {
      const int j = (s + 1) % 10;
      b.model.faces.push_back({rings[0][s], rings[0][j], top});
      b.model.faces.push_back({rings[9][s], bottom, rings[9][j]});
    }
    b.orient_outward(face_begin, c);
  }

  // Limbs.
  make_tube(b, kLeftUpperArm, sk.l_shoulder, sk.l_elbow,
            {0.052, 0.050, 0.048, 0.046, 0.044, 0.042}, 10);
  make_tube(b, kLeftForearm, sk.l_elbow, sk.l_hand_end,
            {0.041, 0.039, 0.037, 0.034, 0.031, 0.035, 0.030}, 10);
  make_tube(b, kRightUpperArm, sk.r_shoulder, sk.r_elbow,
            {0.052, 0.050, 0.048, 0.046, 0.044, 0.042}, 10);
  make_tube(b, kRightForearm, sk.r_elbow, sk.r_hand_end,
            {0.041, 0.039, 0.037, 0.034, 0.031, 0.035, 0.030}, 10);
  make_tube(b, kLeftThigh, {sk.l_hip.x, 0.93, 0.0}, sk.l_knee,
            {0.088, 0.083, 0.078, 0.072, 0.066, 0.061, 0.058}, 12);
  make_tube(b, kLeftCalf, sk.l_knee, sk.l_ankle,
            {0.056, 0.061, 0.058, 0.050, 0.043, 0.037, 0.033, 0.030, 0.032}, 12);
  make_tube(b, kRightThigh, {sk.r_hip.x, 0.93, 0.0}, sk.r_knee,
            {0.088, 0.083, 0.078, 0.072, 0.066, 0.061, 0.058}, 12);
  make_tube(b, kRightCalf, sk.r_knee, sk.r_ankle,
            {0.056, 0.061, 0.058, 0.050, 0.043, 0.037, 0.033, 0.030, 0.032}, 12);

  BodyModel& m = b.model;
  m.rest_joints = sk.joints;
  m.parents = sk.parents;
  const int n = m.vertex_count();

  // Blend weights.
  m.blend_weights = Mat(n, kJointCount);
  const std::vector<std::pair<double, int>> spine_chain = {
      {1.00, kPelvis}, {1.18, kSpine}, {1.38, kChest}, {1.56, kNeckHead}};
  for (int i = 0; i < n; ++i) {
    const int part = m.vertex_part[i];
    const int ring = m.vertex_ring[i];
    double* w = m.blend_weights.row(i);
    auto chain_blend = [&](double y) {
      if (y <= spine_chain.front().first) {
        w[spine_chain.front().second] = 1.0;
        return;
      }
      if (y >= spine_chain.back().first) {
        w[spine_chain.back().second] = 1.0;
        return;
      }
      for (std::size_t kk = 1; kk < spine_chain.size(); ++kk) {
        if (y <= spine_chain[kk].first) {
          const double t = (y - spine_chain[kk - 1].first) /
                           (spine_chain[kk].first - spine_chain[kk - 1].first);
          w[spine_chain[kk - 1].second] = 1.0 - t;
          w[spine_chain[kk].second] = t;
          return;
        }
      }
    };
    auto bone_blend = [&](int near_joint, int far_joint, double t, double start) {
      const double s = smoothstep01((t - start) / (1.0 - start));
      w[far_joint] = 0.5 * s;
      w[near_joint] = 1.0 - 0.5 * s;
    };
    switch (part) {
      case kTorso:
        chain_blend(m.template_verts[i].y);
        break;
      case kHead:
        w[kNeckHead] = 1.0;
        break;
      case kLeftUpperArm:
        bone_blend(kLShoulder, kLElbow, ring / 5.0, 0.4);
        break;
      case kRightUpperArm:
        bone_blend(kRShoulder, kRElbow, ring / 5.0, 0.4);
        break;
      case kLeftForearm:
        bone_blend(kLElbow, kLWrist, ring / 6.0, 0.4);
        break;
      case kRightForearm:
        bone_blend(kRElbow, kRWrist, ring / 6.0, 0.4);
        break;
      case kLeftThigh:
        bone_blend(kLHip, kLKnee, ring / 6.0, 0.4);
        break;
      case kRightThigh:
        bone_blend(kRHip, kRKnee, ring / 6.0, 0.4);
        break;
      case kLeftCalf:
        bone_blend(kLKnee, kLAnkle, ring / 8.0, 0.5);
        break;
      case kRightCalf:
        bone_blend(kRKnee, kRAnkle, ring / 8.0, 0.5);
        break;
      default:
        throw std::logic_error("unknown part");
    }
  }

  // Shape directions: analytic displacement fields applied to both surface
  // vertices and joints, so the joint regressor stays consistent with the
  // surface deformation.
  m.shape_sigmas = {0.050, 0.030, 0.025, 0.018, 0.014, 0.010, 0.008, 0.006, 0.005, 0.004};
  auto arm_mask = [](const Vec3& p) {
    return smoothstep01((std::abs(p.x) - 0.17) / 0.05);
  };
  auto leg_mask = [&](const Vec3& p) {
    return smoothstep01((0.95 - p.y) / 0.06) * (1.0 - arm_mask(p));
  };
  auto head_mask = [](const Vec3& p) {
    return smoothstep01((p.y - 1.54) / 0.04);
  };
  auto axis_radial = [](const Vec3& p, const Vec3& a, const Vec3& bb) {
    const Vec3 d = normalized(bb - a);
    const double t = std::clamp(dot(p - a, d), 0.0, norm(bb - a));
    return p - (a + d * t);
  };
  const Vec3 head_center{0.0, 1.685, 0.0};
  std::vector<std::function<Vec3(const Vec3&)>> dirs;
  dirs.push_back([](const Vec3& p) {  // height
    return Vec3{0.15 * p.x, p.y, 0.15 * p.z} / 1.8;
  });
  dirs.push_back([](const Vec3& p) {  // girth
    const double wgt = 0.25 + 0.75 * gauss((p.y - 1.15) / 0.35);
    return Vec3{p.x, 0.0, p.z} * (wgt / 0.15) * 0.15;
  });
  dirs.push_back([&](const Vec3& p) {  // limb length
    const Vec3 sh = p.x >= 0.0 ? sk.l_shoulder : sk.r_shoulder;
    const Vec3 arms = (p - sh) * (0.8 * arm_mask(p));
    const Vec3 legs{0.0, -(0.95 - std::min(p.y, 0.95)) * 0.9 * leg_mask(p), 0.0};
    return arms + legs;
  });
  dirs.push_back([](const Vec3& p) {  // torso taper
    const double wgt = -0.9 * gauss((p.y - 1.08) / 0.10) + 0.5 * gauss((p.y - 1.45) / 0.08);
    return Vec3{p.x, 0.0, p.z} * wgt;
  });
  dirs.push_back([&](const Vec3& p) {  // shoulder width
    const double sgn = p.x >= 0.0 ? 1.0 : -1.0;
    const double band = 0.8 * gauss((p.y - 1.47) / 0.10) *
                        smoothstep01((std::abs(p.x) - 0.08) / 0.08);
    return Vec3{sgn * (band + 0.9 * arm_mask(p)) * 0.1, 0.0, 0.0};
  });
  dirs.push_back([&](const Vec3& p) {  // hip width
    const double sgn = p.x >= 0.0 ? 1.0 : -1.0;
    const double band = 0.8 * gauss((p.y - 0.95) / 0.10) *
                        smoothstep01((std::abs(p.x) - 0.04) / 0.06);
    return Vec3{sgn * (band + 0.9 * leg_mask(p)) * 0.1, 0.0, 0.0};
  });
  dirs.push_back([&](const Vec3& p) {  // arm girth
    if (arm_mask(p) <= 0.0) return Vec3{};
    const Vec3 r = p.x >= 0.0 ? axis_radial(p, sk.l_shoulder, sk.l_hand_end)
                              : axis_radial(p, sk.r_shoulder, sk.r_hand_end);
    return r * (3.0 * arm_mask(p)) * 0.3;
  });
  dirs.push_back([&](const Vec3& p) {  // leg girth
    if (leg_mask(p) <= 0.0) return Vec3{};
    const Vec3 top = p.x >= 0.0 ? Vec3{sk.l_hip.x, 0.95, 0.0} : Vec3{sk.r_hip.x, 0.95, 0.0};
    const Vec3 bot = p.x >= 0.0 ? sk.l_ankle : sk.r_ankle;
    return axis_radial(p, top, bot) * (2.5 * leg_mask(p)) * 0.4;
  });
  dirs.push_back([&](const Vec3& p) {  // head size
    return (p - head_center) * (5.0 * head_mask(p)) * 0.2;
  });
  dirs.push_back([&](const Vec3& p) {  // belly
    const double wgt = 4.0 * gauss((p.y - 1.12) / 0.14) * (1.0 - arm_mask(p));
    return Vec3{0.0, 0.0, std::max(0.0, p.z) * wgt * 0.25};
  });

  m.shape_dirs.resize(dirs.size());
  m.joint_dirs.resize(dirs.size());
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const double sigma = m.shape_sigmas[k];
    m.shape_dirs[k].resize(n);
    for (int i = 0; i < n; ++i)
      m.shape_dirs[k][i] = dirs[k](m.template_verts[i]) * sigma;
    m.joint_dirs[k].resize(kJointCount);
    for (int j = 0; j < kJointCount; ++j)
      m.joint_dirs[k][j] = dirs[k](m.rest_joints[j]) * sigma;
  }

  // Garment templates. The tshirt covers torso rings 0..12 plus upper-arm
  // rings 0..3; the shorts cover torso rings 0..3 plus thigh rings 0..4.
  // Their waist regions overlap on torso rings 0..3.
  auto build_garment = [&](const std::string& name, GarmentLayer layer,
                           const std::function<bool(int)>& take) {
    GarmentTemplate g;
    g.class_name = name;
    g.layer = layer;
    std::vector<int> map(n, -1);
    for (int i = 0; i < n; ++i) {
      if (take(i)) {
        map[i] = g.size();
        g.body_vertex.push_back(i);
      }
    }
    for (const auto& fc : m.faces) {
      if (map[fc[0]] >= 0 && map[fc[1]] >= 0 && map[fc[2]] >= 0)
        g.faces.push_back({map[fc[0]], map[fc[1]], map[fc[2]]});
    }
    m.garments[name] = g;
  };
  build_garment("tshirt", GarmentLayer::kUpper, [&](int i) {
    const int part = m.vertex_part[i];
    const int ring = m.vertex_ring[i];
    if (part == kTorso) return ring <= 12;
    if (part == kLeftUpperArm || part == kRightUpperArm) return ring <= 3;
    return false;
  });
  build_garment("shorts", GarmentLayer::kLower, [&](int i) {
    const int part = m.vertex_part[i];
    const int ring = m.vertex_ring[i];
    if (part == kTorso) return ring <= 3;
    if (part == kLeftThigh || part == kRightThigh) return ring <= 4;
    return false;
  });

  // Skin region: head, lower forearms (hands included), lower calves.
  for (int i = 0; i < n; ++i) {
    const int part = m.vertex_part[i];
    const int ring = m.vertex_ring[i];
    const bool skin = part == kHead ||
                      ((part == kLeftForearm || part == kRightForearm) && ring >= 2) ||
                      ((part == kLeftCalf || part == kRightCalf) && ring >= 4);
    if (skin) m.skin_vertices.push_back(i);
  }

  validate_mesh(m.template_mesh());
  return m;
}

const BodyModel& default_body() {
  static const BodyModel model = build_procedural_body(811020604ULL);
  return model;
}

// ---------------------------------------------------------------------------
// Skinning
// ---------------------------------------------------------------------------

namespace {

// Pose feature r(theta) = concat of vec(R_j - I) for non-root joints.
std::vector<double> pose_feature(const BodyModel& model,
                                 const std::vector<double>& theta) {
  const int j_count = model.joint_count();
  std::vector<double> r(9 * (j_count - 1), 0.0);
  for (int j = 1; j < j_count; ++j) {
    const Mat3 rot = rodrigues({theta[3 * j], theta[3 * j + 1], theta[3 * j + 2]});
    for (int c = 0; c < 9; ++c)
      r[9 * (j - 1) + c] = rot.m[c] - (c % 4 == 0 ? 1.0 : 0.0);
  }
  return r;
}

void check_params(const BodyModel& model, const BodyParams& params) {
  if (static_cast<int>(params.beta.size()) != model.shape_count())
    throw std::invalid_argument("beta dimension mismatch");
  if (static_cast<int>(params.theta.size()) != 3 * model.joint_count())
    throw std::invalid_argument("theta dimension mismatch");
  if (!params.offsets.empty() &&
      static_cast<int>(params.offsets.size()) != model.vertex_count())
    throw std::invalid_argument("offsets dimension mismatch");
}

}  // namespace

std::vector<Vec3> unposed(const BodyModel& model, const BodyParams& params) {
  check_params(model, params);
  std::vector<Vec3> u = model.template_verts;
  const int n = model.vertex_count();
  for (int k = 0; k < model.shape_count(); ++k) {
    const double bk = params.beta[k];
    if (bk == 0.0) continue;
    const auto& dir = model.shape_dirs[k];
    for (int i = 0; i < n; ++i) u[i] += dir[i] * bk;
  }
  if (!model.pose_dirs.empty()) {
    const std::vector<double> r = pose_feature(model, params.theta);
    if (static_cast<int>(r.size()) != model.pose_dir_count())
      throw std::invalid_argument("pose_dirs dimension mismatch");
    for (int p = 0; p < model.pose_dir_count(); ++p) {
      const double rp = r[p];
      if (rp == 0.0) continue;
      const auto& dir = model.pose_dirs[p];
      for (int i = 0; i < n; ++i) u[i] += dir[i] * rp;
    }
  }
  if (!params.offsets.empty())
    for (int i = 0; i < n; ++i) u[i] += params.offsets[i];
  return u;
}

std::vector<Vec3> shaped_joints(const BodyModel& model,
                                const std::vector<double>& beta) {
  std::vector<Vec3> j = model.rest_joints;
  for (int k = 0; k < model.shape_count(); ++k) {
    const double bk = beta[k];
    if (bk == 0.0) continue;
    for (int q = 0; q < model.joint_count(); ++q) j[q] += model.joint_dirs[k][q] * bk;
  }
  return j;
}

std::vector<Affine> skinning_transforms(const BodyModel& model,
                                        const std::vector<double>& beta,
                                        const std::vector<double>& theta) {
  const int j_count = model.joint_count();
  const std::vector<Vec3> joints = shaped_joints(model, beta);
  std::vector<Affine> global(j_count);
  for (int j = 0; j < j_count; ++j) {
    const Mat3 rot = rodrigues({theta[3 * j], theta[3 * j + 1], theta[3 * j + 2]});
    const int p = model.parents[j];
    if (p < 0) {
      global[j] = {rot, joints[j]};
    } else {
      const Vec3 b = joints[j] - joints[p];
      global[j] = {global[p].rot * rot, global[p].rot * b + global[p].trans};
    }
  }
  std::vector<Affine> skinning(j_count);
  for (int j = 0; j < j_count; ++j)
    skinning[j] = {global[j].rot, global[j].trans - global[j].rot * joints[j]};
  return skinning;
}

Mesh skin(const BodyModel& model, const BodyParams& params) {
  check_params(model, params);
  const std::vector<Vec3> u = unposed(model, params);
  const std::vector<Affine> f = skinning_transforms(model, params.beta, params.theta);
  const int n = model.vertex_count();
  const int j_count = model.joint_count();
  Mesh out;
  out.faces = model.faces;
  out.vertices.resize(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double* w = model.blend_weights.row(i);
    Vec3 v;
    for (int j = 0; j < j_count; ++j) {
      if (w[j] == 0.0) continue;
      v += w[j] * f[j].apply(u[i]);
    }
    out.vertices[i] = v;
  }
  return out;
}

SkinGrads skin_backward(const BodyModel& model, const BodyParams& params,
                        const std::vector<Vec3>& dvertices) {
  check_params(model, params);
  const int n = model.vertex_count();
  const int j_count = model.joint_count();
  if (static_cast<int>(dvertices.size()) != n)
    throw std::invalid_argument("skin_backward: gradient size mismatch");

  const std::vector<Vec3> u = unposed(model, params);
  const std::vector<Vec3> joints = shaped_joints(model, params.beta);

  // Forward transforms (kept here to backprop the chain).
  std::vector<Mat3> local_rot(j_count);
  std::vector<Affine> global(j_count);
  for (int j = 0; j < j_count; ++j) {
    local_rot[j] = rodrigues({params.theta[3 * j], params.theta[3 * j + 1],
                              params.theta[3 * j + 2]});
    const int p = model.parents[j];
    if (p < 0) {
      global[j] = {local_rot[j], joints[j]};
    } else {
      const Vec3 b = joints[j] - joints[p];
      global[j] = {global[p].rot * local_rot[j], global[p].rot * b + global[p].trans};
    }
  }
  std::vector<Affine> f(j_count);
  for (int j = 0; j < j_count; ++j)
    f[j] = {global[j].rot, global[j].trans - global[j].rot * joints[j]};

  // Accumulate dL/dF and dL/du.
  std::vector<Mat3> df_rot(j_count);
  std::vector<Vec3> df_trans(j_count);
  std::vector<Vec3> du(n);
  for (int i = 0; i < n; ++i) {
    const double* w = model.blend_weights.row(i);
    const Vec3 dv = dvertices[i];
    Mat3 blended;
    for (int j = 0; j < j_count; ++j) {
      if (w[j] == 0.0) continue;
      df_rot[j] = df_rot[j] + outer(dv, u[i]) * w[j];
      df_trans[j] += dv * w[j];
      blended = blended + f[j].rot * w[j];
    }
    du[i] = transpose(blended) * dv;
  }

  SkinGrads grads;
  grads.dbeta.assign(model.shape_count(), 0.0);
  grads.dtheta.assign(3 * j_count, 0.0);
  grads.doffsets = du;

  // du -> beta (shape dirs) and theta (pose dirs).
  for (int k = 0; k < model.shape_count(); ++k) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += dot(du[i], model.shape_dirs[k][i]);
    grads.dbeta[k] = s;
  }
  std::vector<Mat3> dlocal_rot(j_count);
  if (!model.pose_dirs.empty()) {
    for (int p = 0; p < model.pose_dir_count(); ++p) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += dot(du[i], model.pose_dirs[p][i]);
      const int j = 1 + p / 9;
      dlocal_rot[j].m[p % 9] += s;
    }
  }

  // F -> G and joints.
  std::vector<Mat3> dg_rot(j_count);
  std::vector<Vec3> dg_trans(j_count);
  std::vector<Vec3> djoints(j_count);
  for (int j = 0; j < j_count; ++j) {
    dg_rot[j] = df_rot[j] + outer(df_trans[j], joints[j]) * -1.0;
    dg_trans[j] = df_trans[j];
    djoints[j] -= transpose(global[j].rot) * df_trans[j];
  }

  // Chain, children before parents (parents[j] < j by construction).
  for (int j = j_count - 1; j >= 0; --j) {
    const int p = model.parents[j];
    if (p < 0) {
      dlocal_rot[j] = dlocal_rot[j] + dg_rot[j];
      djoints[j] += dg_trans[j];
    } else {
      const Vec3 b = joints[j] - joints[p];
      dg_rot[p] = dg_rot[p] + dg_rot[j] * transpose(local_rot[j]) + outer(dg_trans[j], b);
      dg_trans[p] += dg_trans[j];
      dlocal_rot[j] = dlocal_rot[j] + transpose(global[p].rot) * dg_rot[j];
      const Vec3 db = transpose(global[p].rot) * dg_trans[j];
      djoints[j] += db;
      djoints[p] -= db;
    }
  }

  // Local rotations -> theta.
  for (int j = 0; j < j_count; ++j) {
    const auto jac = rodrigues_jacobian(
        {params.theta[3 * j], params.theta[3 * j + 1], params.theta[3 * j + 2]});
    for (int c = 0; c < 3; ++c)
      grads.dtheta[3 * j + c] += frobenius_dot(dlocal_rot[j], jac[c]);
  }

  // Joints -> beta via the linear joint regressor.
  for (int k = 0; k < model.shape_count(); ++k) {
    double s = 0.0;
    for (int j = 0; j < j_count; ++j) s += dot(djoints[j], model.joint_dirs[k][j]);
    grads.dbeta[k] += s;
  }
  return grads;
}

std::vector<Vec3> garment_template(const BodyModel& model, const GarmentTemplate& g,
                                   const std::vector<double>& beta,
                                   const std::vector<double>& theta) {
  BodyParams p;
  p.beta = beta;
  p.theta = theta;
  const std::vector<Vec3> u = unposed(model, p);
  std::vector<Vec3> out(g.size());
  for (int i = 0; i < g.size(); ++i) out[i] = u[g.body_vertex[i]];
  return out;
}

std::vector<Affine> garment_vertex_transforms(const BodyModel& model,
                                              const GarmentTemplate& g,
                                              const std::vector<double>& beta,
                                              const std::vector<double>& theta) {
  const std::vector<Affine> f = skinning_transforms(model, beta, theta);
  const int j_count = model.joint_count();
  std::vector<Affine> out(g.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < g.size(); ++i) {
    const double* w = model.blend_weights.row(g.body_vertex[i]);
    Mat3 rot;
    Vec3 trans;
    for (int j = 0; j < j_count; ++j) {
      if (w[j] == 0.0) continue;
      rot = rot + f[j].rot * w[j];
      trans += f[j].trans * w[j];
    }
    out[i] = {rot, trans};
  }
  return out;
}

Mesh garment_skin(const BodyModel& model, const GarmentTemplate& g,
                  const std::vector<double>& beta, const std::vector<double>& theta,
                  const std::vector<Vec3>& d_g) {
  if (static_cast<int>(d_g.size()) != g.size())
    throw std::invalid_argument("garment_skin: displacement size mismatch");
  const std::vector<Vec3> tmpl = garment_template(model, g, beta, theta);
  const std::vector<Affine> a = garment_vertex_transforms(model, g, beta, theta);
  Mesh out;
  out.faces = g.faces;
  out.vertices.resize(g.size());
  for (int i = 0; i < g.size(); ++i) out.vertices[i] = a[i].apply(tmpl[i] + d_g[i]);
  return out;
}

std::vector<Vec3> garment_unskin(const BodyModel& model, const GarmentTemplate& g,
                                 const std::vector<double>& beta,
                                 const std::vector<double>& theta,
                                 const std::vector<Vec3>& posed) {
  if (static_cast<int>(posed.size()) != g.size())
    throw std::invalid_argument("garment_unskin: vertex count mismatch");
  const std::vector<Vec3> tmpl = garment_template(model, g, beta, theta);
  const std::vector<Affine> a = garment_vertex_transforms(model, g, beta, theta);
  std::vector<Vec3> d(g.size());
  for (int i = 0; i < g.size(); ++i)
    d[i] = inverse(a[i].rot) * (posed[i] - a[i].trans) - tmpl[i];
  return d;
}

// ---------------------------------------------------------------------------
// Asset serialization
// ---------------------------------------------------------------------------

namespace {

Tensor vec3_field_tensor(const std::vector<std::vector<Vec3>>& fields) {
  Tensor t;
  const std::int64_t s = static_cast<std::int64_t>(fields.size());
  const std::int64_t n = s > 0 ? static_cast<std::int64_t>(fields[0].size()) : 0;
  t.shape = {s, n, 3};
  t.data.reserve(static_cast<std::size_t>(s * n * 3));
  for (const auto& f : fields)
    for (const auto& v : f) {
      t.data.push_back(v.x);
      t.data.push_back(v.y);
      t.data.push_back(v.z);
    }
  return t;
}

std::vector<std::vector<Vec3>> vec3_field_from_tensor(const Tensor& t) {
  if (t.shape.size() != 3 || t.shape[2] != 3)
    throw std::runtime_error("expected [S, n, 3] tensor");
  std::vector<std::vector<Vec3>> fields(t.shape[0]);
  std::size_t idx = 0;
  for (auto& f : fields) {
    f.resize(t.shape[1]);
    for (auto& v : f) {
      v = {t.data[idx], t.data[idx + 1], t.data[idx + 2]};
      idx += 3;
    }
  }
  return fields;
}

Tensor vec3_list_tensor(const std::vector<Vec3>& v) {
  Tensor t;
  t.shape = {static_cast<std::int64_t>(v.size()), 3};
  t.data.reserve(v.size() * 3);
  for (const auto& p : v) {
    t.data.push_back(p.x);
    t.data.push_back(p.y);
    t.data.push_back(p.z);
  }
  return t;
}

std::vector<Vec3> vec3_list_from_tensor(const Tensor& t) {
  if (t.shape.size() != 2 || t.shape[1] != 3)
    throw std::runtime_error("expected [n, 3] tensor");
  std::vector<Vec3> v(t.shape[0]);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = {t.data[3 * i], t.data[3 * i + 1], t.data[3 * i + 2]};
  return v;
}

nlohmann::json faces_json(const std::vector<std::array<int, 3>>& faces) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : faces) arr.push_back({f[0], f[1], f[2]});
  return arr;
}

std::vector<std::array<int, 3>> faces_from_json(const nlohmann::json& arr) {
  std::vector<std::array<int, 3>> out;
  for (const auto& f : arr) out.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
  return out;
}

}  // namespace

void save_body_model(const std::filesystem::path& dir, const BodyModel& model) {
  std::filesystem::create_directories(dir);
  write_tensor(dir / "template.gft", vec3_list_tensor(model.template_verts));
  write_tensor(dir / "rest_joints.gft", vec3_list_tensor(model.rest_joints));
  write_tensor(dir / "blend_weights.gft", model.blend_weights);
  write_tensor(dir / "shape_dirs.gft", vec3_field_tensor(model.shape_dirs));
  write_tensor(dir / "joint_dirs.gft", vec3_field_tensor(model.joint_dirs));
  if (!model.pose_dirs.empty())
    write_tensor(dir / "pose_dirs.gft", vec3_field_tensor(model.pose_dirs));

  nlohmann::json manifest;
  manifest["parents"] = model.parents;
  manifest["shape_sigmas"] = model.shape_sigmas;
  manifest["faces"] = faces_json(model.faces);
  manifest["skin_vertices"] = model.skin_vertices;
  manifest["vertex_part"] = model.vertex_part;
  manifest["vertex_ring"] = model.vertex_ring;
  manifest["vertex_seg"] = model.vertex_seg;
  nlohmann::json garments = nlohmann::json::object();
  for (const auto& [name, g] : model.garments) {
    nlohmann::json jg;
    jg["layer"] = g.layer == GarmentLayer::kUpper ? "upper" : "lower";
    jg["body_vertex"] = g.body_vertex;
    jg["faces"] = faces_json(g.faces);
    garments[name] = jg;
  }
  manifest["garments"] = garments;
  std::FILE* f = std::fopen((dir / "manifest.json").string().c_str(), "wb");
  if (f == nullptr) throw std::runtime_error("cannot write body manifest");
  const std::string s = manifest.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fclose(f);
}

BodyModel load_body_model(const std::filesystem::path& dir) {
  BodyModel model;
  model.template_verts = vec3_list_from_tensor(read_tensor(dir / "template.gft"));
  model.rest_joints = vec3_list_from_tensor(read_tensor(dir / "rest_joints.gft"));
  model.blend_weights = read_tensor_mat(dir / "blend_weights.gft");
  model.shape_dirs = vec3_field_from_tensor(read_tensor(dir / "shape_dirs.gft"));
  model.joint_dirs = vec3_field_from_tensor(read_tensor(dir / "joint_dirs.gft"));
  if (std::filesystem::exists(dir / "pose_dirs.gft"))
    model.pose_dirs = vec3_field_from_tensor(read_tensor(dir / "pose_dirs.gft"));

  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot read body manifest in " + dir.string());
  nlohmann::json manifest;
  in >> manifest;
  model.parents = manifest.at("parents").get<std::vector<int>>();
  model.shape_sigmas = manifest.at("shape_sigmas").get<std::vector<double>>();
  model.faces = faces_from_json(manifest.at("faces"));
  model.skin_vertices = manifest.at("skin_vertices").get<std::vector<int>>();
  if (manifest.contains("vertex_part")) {
    model.vertex_part = manifest.at("vertex_part").get<std::vector<int>>();
    model.vertex_ring = manifest.at("vertex_ring").get<std::vector<int>>();
    model.vertex_seg = manifest.at("vertex_seg").get<std::vector<int>>();
  }
  for (const auto& [name, jg] : manifest.at("garments").items()) {
    GarmentTemplate g;
    g.class_name = name;
    g.layer = jg.at("layer").get<std::string>() == "upper" ? GarmentLayer::kUpper
                                                           : GarmentLayer::kLower;
    g.body_vertex = jg.at("body_vertex").get<std::vector<int>>();
    g.faces = faces_from_json(jg.at("faces"));
    model.garments[name] = g;
  }

  // Validate the joint tree: single root at 0, parents precede children.
  if (model.parents.empty() || model.parents[0] != -1)
    throw std::runtime_error("body model: joint 0 must be the root");
  for (std::size_t j = 1; j < model.parents.size(); ++j)
    if (model.parents[j] < 0 || model.parents[j] >= static_cast<int>(j))
      throw std::runtime_error("body model: joint parents must form a tree");
  return model;
}

}  // namespace gf
