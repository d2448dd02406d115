#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "stsp/buffers.hpp"
#include "stsp/errors.hpp"
#include "stsp/parallel.hpp"

namespace stsp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw BadParams("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw BadParams("intrinsics: non-positive image size");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      throw BadParams("intrinsics: principal point outside image");
  }
};

// Camera-to-world: `rotation` maps camera axes into world axes and
// `translation` is the camera center in world coordinates. Camera axes:
// +x right, +y down, +z into the scene.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const {
    Mat3 rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw BadParams("pose: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
      throw BadParams("pose: rotation determinant is not +1");
  }

  const Vec3& center() const { return translation; }
};

struct Camera {
  CameraIntrinsics intrinsics;
  RigidPose pose;
};

struct StereoRig {
  double baseline_m = 0;
  Camera left;
  Camera right;
};

// Oriented camera ray in Plücker form: unit direction d (pointing from the
// camera into the scene) and moment m = c x d, c the camera center in meters.
// Invariants: |d| = 1 and d.m = 0.
struct PluckerRay {
  Vec3 direction;
  Vec3 moment;
};

// H x W ray field, exported as 6 channels (dx, dy, dz, mx, my, mz).
struct PluckerMap {
  int height = 0, width = 0;
  std::vector<PluckerRay> rays;  // row-major

  const PluckerRay& at(int i, int j) const {
    return rays[static_cast<std::size_t>(i) * width + j];
  }
};

// Ray through the center of pixel (row i, col j), i.e. image point
// (j + 0.5, i + 0.5), in world coordinates.
inline PluckerRay pixel_ray(const CameraIntrinsics& intr, const RigidPose& pose, int i, int j) {
  intr.validate();
  pose.validate();
  if (i < 0 || i >= intr.height || j < 0 || j >= intr.width)
    throw OutOfBounds("pixel_ray: pixel outside image bounds");
  Vec3 dir_cam((j + 0.5 - intr.cx) / intr.fx, (i + 0.5 - intr.cy) / intr.fy, 1.0);
  Vec3 d = (pose.rotation * dir_cam).normalized();
  return PluckerRay{d, pose.center().cross(d)};
}

inline PluckerMap plucker_map(const CameraIntrinsics& intr, const RigidPose& pose) {
  intr.validate();
  pose.validate();
  PluckerMap map;
  map.height = intr.height;
  map.width = intr.width;
  map.rays.resize(static_cast<std::size_t>(intr.height) * intr.width);
  const Vec3 c = pose.center();
  parallel_for(static_cast<std::size_t>(intr.height), [&](std::size_t row) {
    const int i = static_cast<int>(row);
    for (int j = 0; j < intr.width; ++j) {
      Vec3 dir_cam((j + 0.5 - intr.cx) / intr.fx, (i + 0.5 - intr.cy) / intr.fy, 1.0);
      Vec3 d = (pose.rotation * dir_cam).normalized();
      map.rays[row * intr.width + j] = PluckerRay{d, c.cross(d)};
    }
  });
  return map;
}

// (6, H, W) channel-major export, layout (dx, dy, dz, mx, my, mz).
inline Tensor to_tensor(const PluckerMap& map) {
  Tensor t(6, map.height, map.width);
  for (int i = 0; i < map.height; ++i)
    for (int j = 0; j < map.width; ++j) {
      const PluckerRay& r = map.at(i, j);
      for (int k = 0; k < 3; ++k) {
        t.at(k, i, j) = static_cast<float>(r.direction[k]);
        t.at(k + 3, i, j) = static_cast<float>(r.moment[k]);
      }
    }
  return t;
}

// d1.m2 + d2.m1 — zero iff the two lines are coplanar (intersecting or parallel).
inline double reciprocal_product(const PluckerRay& a, const PluckerRay& b) {
  return a.direction.dot(b.moment) + b.direction.dot(a.moment);
}

// Shortest distance between two non-parallel lines.
inline double line_distance(const PluckerRay& a, const PluckerRay& b) {
  const double cross_norm = a.direction.cross(b.direction).norm();
  if (cross_norm <= 1e-9) throw ParallelRays("line_distance: directions are parallel");
  return std::abs(reciprocal_product(a, b)) / cross_norm;
}

namespace detail {
inline double rotation_angle(const Mat3& r) {
  double c = (r.trace() - 1.0) * 0.5;
  return std::acos(std::min(1.0, std::max(-1.0, c)));
}
}  // namespace detail

// Re-expresses a rectified pair in the canonical frame: rig center at the
// origin, cameras on the x-axis at -+B/2, rotations identity. The pair must
// already be rectified (relative rotation ~ identity, offset purely along
// the shared x-axis) and baseline_m must agree with the measured distance.
inline StereoRig canonicalize_rig(const Camera& left, const Camera& right, double baseline_m) {
  if (baseline_m <= 0) throw BadParams("canonicalize_rig: baseline must be positive");
  left.pose.validate();
  right.pose.validate();

  const Mat3 rel_rot = left.pose.rotation.transpose() * right.pose.rotation;
  if (detail::rotation_angle(rel_rot) >= 1e-6)
    throw NotRectified("canonicalize_rig: relative rotation exceeds 1e-6 rad");

  // Offset of the right center, expressed in the left camera frame.
  const Vec3 offset = left.pose.rotation.transpose() * (right.pose.center() - left.pose.center());
  const double tol = 1e-9 * baseline_m;
  if (std::abs(offset.y()) > tol || std::abs(offset.z()) > tol)
    throw NotRectified("canonicalize_rig: vertical/depth offset exceeds tolerance");
  if (offset.x() <= 0)
    throw NotRectified("canonicalize_rig: right camera is not on the +x side of left");
  if (std::abs(offset.norm() - baseline_m) > 1e-9 * std::max(1.0, baseline_m))
    throw NotRectified("canonicalize_rig: center distance disagrees with baseline_m");

  StereoRig rig;
  rig.baseline_m = baseline_m;
  rig.left.intrinsics = left.intrinsics;
  rig.right.intrinsics = right.intrinsics;
  rig.left.pose = RigidPose{Mat3::Identity(), Vec3(-baseline_m / 2.0, 0.0, 0.0)};
  rig.right.pose = RigidPose{Mat3::Identity(), Vec3(+baseline_m / 2.0, 0.0, 0.0)};
  return rig;
}

inline StereoRig canonicalize_rig(const StereoRig& rig) {
  return canonicalize_rig(rig.left, rig.right, rig.baseline_m);
}

}  // namespace stsp
