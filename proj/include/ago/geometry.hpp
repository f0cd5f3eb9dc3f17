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

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ago/grid.hpp"
#include "ago/types.hpp"

namespace ago {

/// Rigid transform source -> target.
struct Pose {
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  Vec3d apply(const Vec3d& p) const { return rotation * p + translation; }

  /// this after other: apply(other.apply(p)).
  Pose compose(const Pose& other) const {
    return Pose{rotation * other.rotation, rotation * other.translation + translation};
  }

  Pose inverse() const {
    const Mat3d rt = rotation.transpose();
    return Pose{rt, -(rt * translation)};
  }

  /// Rotation must be orthonormal with determinant +1 within `tol`.
  void validate(double tol = 1e-6) const;
};

/// Calibrated pinhole camera mounted on the ego body.
struct CameraModel {
  Mat3d intrinsics = Mat3d::Identity();  // fx, fy, cx, cy; skew permitted
  Pose ego_to_camera;
  int width = 0;
  int height = 0;

  void validate() const;
};

struct CameraRig {
  std::vector<CameraModel> cameras;
};

struct LidarSweep {
  PointsF points;  // sensor frame
  Pose sensor_to_ego;
  Pose ego_to_world;
  std::uint64_t timestamp_us = 0;
};

struct PixelProjection {
  double u = 0;
  double v = 0;
  double depth = 0;
};

/// Perspective projection of an ego-frame point. Absent when the point sits
/// behind the camera (depth <= 1e-6 m) or projects outside
/// [0, width) x [0, height).
std::optional<PixelProjection> project_point(const CameraModel& camera, const Vec3d& point_ego);

/// Moves points from the src ego frame into the dst ego frame through the
/// shared world frame: dst^-1 o src.
PointsD warp_points(const PointsD& points, const Pose& src_ego_to_world,
                    const Pose& dst_ego_to_world);

/// Voxels intersected by the segment origin -> endpoint, in increasing
/// entry-distance order. The segment is clipped to the grid box first;
/// consecutive voxels differ in exactly one index by +-1. A segment fully
/// outside the grid yields an empty list; a zero-length segment yields the
/// single containing voxel.
std::vector<Vec3i> cast_ray(const GridSpec& spec, const Vec3d& origin, const Vec3d& endpoint);

}  // namespace ago
