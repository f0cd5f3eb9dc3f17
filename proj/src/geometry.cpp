// Copyright 2026 The Occgrounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ago/geometry.hpp"

#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "ago/errors.hpp"

namespace ago {

namespace {

constexpr double kMinDepth = 1e-6;       // meters; closer counts as invisible
constexpr double kClipNudge = 1e-9;      // inward nudge after AABB clipping
constexpr double kTieBreak = 1e-12;      // boundary-distance tie tolerance

}  // namespace

void Pose::validate(double tol) const {
  const Mat3d err = rotation.transpose() * rotation - Mat3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) {
    throw ConfigError("pose rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > tol) {
    throw ConfigError("pose rotation determinant is not +1");
  }
  if (!translation.allFinite()) {
    throw ConfigError("pose translation is not finite");
  }
}

void CameraModel::validate() const {
  ego_to_camera.validate();
  const double fx = intrinsics(0, 0);
  const double fy = intrinsics(1, 1);
  const double cx = intrinsics(0, 2);
  const double cy = intrinsics(1, 2);
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConfigError("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ConfigError("camera image size must be positive");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw ConfigError("camera principal point outside the image");
  }
}

std::optional<PixelProjection> project_point(const CameraModel& camera, const Vec3d& point_ego) {
  const Vec3d pc = camera.ego_to_camera.apply(point_ego);
  const double z = pc.z();
  if (z <= kMinDepth) {
    return std::nullopt;
  }
  const Mat3d& k = camera.intrinsics;
  const double u = (k(0, 0) * pc.x() + k(0, 1) * pc.y()) / z + k(0, 2);
  const double v = (k(1, 1) * pc.y()) / z + k(1, 2);
  if (u < 0.0 || u >= camera.width || v < 0.0 || v >= camera.height) {
    return std::nullopt;
  }
  return PixelProjection{u, v, z};
}

PointsD warp_points(const PointsD& points, const Pose& src_ego_to_world,
                    const Pose& dst_ego_to_world) {
  const Pose rel = dst_ego_to_world.inverse().compose(src_ego_to_world);
  PointsD out(points.rows(), 3);
  out = points * rel.rotation.transpose();
  out.rowwise() += rel.translation.transpose();
  return out;
}

std::vector<Vec3i> cast_ray(const GridSpec& spec, const Vec3d& origin, const Vec3d& endpoint) {
  const Vec3d d = endpoint - origin;

  if (d.isZero(0.0)) {
    if (auto cell = voxel_index(spec, origin)) {
      return {*cell};
    }
    return {};
  }

  // Clip the parametric segment t in [0, 1] against the grid box.
  Vec3d lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = static_cast<double>(spec.origin[a]);
    hi[a] = lo[a] + static_cast<double>(spec.dims[a]) * static_cast<double>(spec.voxel_size[a]);
  }
  double t0 = 0.0;
  double t1 = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] >= hi[a]) return {};
      continue;
    }
    double ta = (lo[a] - origin[a]) / d[a];
    double tb = (hi[a] - origin[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return {};

  // Nudge inward so entry/exit never sit exactly on a face.
  const double tn0 = std::min(t0 + kClipNudge, 0.5 * (t0 + t1));
  const double tn1 = std::max(t1 - kClipNudge, 0.5 * (t0 + t1));
  const Vec3d entry = origin + tn0 * d;
  const Vec3d exit = origin + tn1 * d;

  const auto start = voxel_index(spec, entry);
  const auto goal = voxel_index(spec, exit);
  if (!start || !goal) return {};

  Vec3i cur = *start;
  std::vector<Vec3i> out;
  out.push_back(cur);
  if (cur == *goal) return out;

  // Incremental traversal: tMax[a] is the absolute segment parameter at
  // which the ray crosses the next boundary along axis a.
  Vec3i step = Vec3i::Zero();
  Vec3d t_max, t_delta;
  for (int a = 0; a < 3; ++a) {
    if (d[a] > 0.0) {
      step[a] = 1;
      const double boundary = lo[a] + (cur[a] + 1.0) * static_cast<double>(spec.voxel_size[a]);
      t_max[a] = (boundary - origin[a]) / d[a];
      t_delta[a] = static_cast<double>(spec.voxel_size[a]) / d[a];
    } else if (d[a] < 0.0) {
      step[a] = -1;
      const double boundary = lo[a] + static_cast<double>(cur[a]) * static_cast<double>(spec.voxel_size[a]);
      t_max[a] = (boundary - origin[a]) / d[a];
      t_delta[a] = static_cast<double>(spec.voxel_size[a]) / -d[a];
    } else {
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  const long max_steps = static_cast<long>(spec.dims.x()) + spec.dims.y() + spec.dims.z() + 4;
  for (long i = 0; i < max_steps && cur != *goal; ++i) {
    // Ties within kTieBreak step the lower axis first (x before y before z).
    int axis = 0;
    if (t_max[1] < t_max[axis] - kTieBreak) axis = 1;
    if (t_max[2] < t_max[axis] - kTieBreak) axis = 2;
    cur[axis] += step[axis];
    if (cur[axis] < 0 || cur[axis] >= spec.dims[axis]) break;
    t_max[axis] += t_delta[axis];
    out.push_back(cur);
  }
  return out;
}

}  // namespace ago
