#include "o3dsg/projection.hpp"

#include <cmath>
#include <limits>

#include "o3dsg/errors.hpp"

namespace o3dsg {

void CameraFrame::validate() const {
  if (!(fx() > 0)) throw DataError("intrinsics: fx must be positive");
  if (!(fy() > 0)) throw DataError("intrinsics: fy must be positive");
  if (!(cx() >= 0 && cx() < width)) throw DataError("intrinsics: cx outside [0, W)");
  if (!(cy() >= 0 && cy() < height)) throw DataError("intrinsics: cy outside [0, H)");
  if (depth.height != height || depth.width != width) {
    throw DataError("depth map is " + std::to_string(depth.height) + "x" +
                    std::to_string(depth.width) + ", frame is " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
}

CameraFrame CameraFrame::from_descriptor(const FrameDescriptor& desc, DepthMap depth) {
  CameraFrame f;
  f.width = desc.width;
  f.height = desc.height;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) f.intrinsics(r, c) = desc.intrinsics[r * 3 + c];
    for (int c = 0; c < 4; ++c) f.extrinsics(r, c) = desc.extrinsics[r * 4 + c];
  }
  f.depth = std::move(depth);
  f.validate();
  return f;
}

std::vector<CameraFrame> load_frames(const SceneManifest& manifest) {
  std::vector<CameraFrame> frames;
  frames.reserve(manifest.frames.size());
  for (const auto& d : manifest.frames) {
    frames.push_back(CameraFrame::from_descriptor(d, read_depth(d.depth)));
  }
  return frames;
}

Eigen::Vector3d project_point(const CameraFrame& frame, const Eigen::Vector3d& p) {
  return frame.intrinsics * (frame.extrinsics * p.homogeneous());
}

ProjectedInstance project_instance(const CameraFrame& frame, std::size_t frame_index,
                                   const ScenePointCloud& cloud, const InstanceSet& inst,
                                   InstanceId id, double t_occ) {
  if (!(t_occ > 0)) throw DataError("t_occ must be positive");
  const auto& indices = inst.points_of(id);

  ProjectedInstance out;
  out.frame = frame_index;
  out.instance = id;
  out.total_points = indices.size();

  Box2D box{std::numeric_limits<std::int32_t>::max(), std::numeric_limits<std::int32_t>::max(),
            std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::min()};
  for (auto idx : indices) {
    const auto& pt = cloud.points[idx];
    const Eigen::Vector3d uvw = project_point(frame, Eigen::Vector3d(pt.x, pt.y, pt.z));
    const double w = uvw.z();
    if (!(w > 0)) continue;
    const double px = std::floor(uvw.x() / w);
    const double py = std::floor(uvw.y() / w);
    if (!(px >= 0 && px <= double(frame.width) - 1)) continue;
    if (!(py >= 0 && py <= double(frame.height) - 1)) continue;
    const auto x = static_cast<std::int32_t>(px);
    const auto y = static_cast<std::int32_t>(py);
    const float d = frame.depth.at(std::uint32_t(y), std::uint32_t(x));
    if (!DepthMap::is_measurement(d)) continue;
    if (w - double(d) > t_occ) continue;
    out.pixels.push_back({x, y});
    box.min_x = std::min(box.min_x, x);
    box.min_y = std::min(box.min_y, y);
    box.max_x = std::max(box.max_x, x);
    box.max_y = std::max(box.max_y, y);
  }
  out.vis = indices.empty() ? 0.0 : double(out.pixels.size()) / double(indices.size());
  if (!out.pixels.empty()) out.box2d = box;
  return out;
}

}  // namespace o3dsg
