#pragma once

// Pinhole projection of instance points into camera frames with depth-based
// occlusion rejection.

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <optional>
#include <vector>

#include "o3dsg/scene_model.hpp"

namespace o3dsg {

using Matrix34d = Eigen::Matrix<double, 3, 4>;

struct CameraFrame {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Matrix34d extrinsics = Matrix34d::Zero();  // world -> camera
  DepthMap depth;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }

  /// Checks focal lengths, principal point and depth dimensions.
  void validate() const;

  static CameraFrame from_descriptor(const FrameDescriptor& desc, DepthMap depth);
};

/// Loads depth maps for every frame of the scene manifest.
std::vector<CameraFrame> load_frames(const SceneManifest& manifest);

struct Pixel {
  std::int32_t x = 0;
  std::int32_t y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Inclusive pixel box.
struct Box2D {
  std::int32_t min_x = 0, min_y = 0, max_x = -1, max_y = -1;

  bool valid() const { return max_x >= min_x && max_y >= min_y; }
  std::int64_t area() const {
    return valid() ? std::int64_t(max_x - min_x + 1) * (max_y - min_y + 1) : 0;
  }
  Box2D united(const Box2D& o) const {
    return {std::min(min_x, o.min_x), std::min(min_y, o.min_y), std::max(max_x, o.max_x),
            std::max(max_y, o.max_y)};
  }
  friend bool operator==(const Box2D&, const Box2D&) = default;
};

struct ProjectedInstance {
  std::size_t frame = 0;
  InstanceId instance = 0;
  std::vector<Pixel> pixels;  // one per valid point, point order
  std::size_t total_points = 0;
  double vis = 0.0;
  std::optional<Box2D> box2d;
};

/// Homogeneous image coordinates (u, v, w) = K [R|t] p; w is camera depth.
Eigen::Vector3d project_point(const CameraFrame& frame, const Eigen::Vector3d& p);

inline constexpr double kDefaultOcclusionThreshold = 0.10;

/// A point is valid iff w > 0, floor(u/w) in [0, W-1], floor(v/w) in [0, H-1],
/// the depth map has a measurement there and w - depth <= t_occ.
ProjectedInstance project_instance(const CameraFrame& frame, std::size_t frame_index,
                                   const ScenePointCloud& cloud, const InstanceSet& inst,
                                   InstanceId id, double t_occ = kDefaultOcclusionThreshold);

}  // namespace o3dsg
