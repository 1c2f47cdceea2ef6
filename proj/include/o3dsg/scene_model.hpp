#pragma once

// Scene data model: point cloud with per-point instance ids, instance
// bounding boxes, pairwise box-union point sets and the graph skeleton.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace o3dsg {

using InstanceId = std::uint32_t;

struct Point3 {
  float x = 0, y = 0, z = 0;
  float operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  friend bool operator==(const Point3&, const Point3&) = default;
};

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Color&, const Color&) = default;
};

/// Axis-aligned box with closed intervals on every axis.
struct Aabb {
  Point3 min;
  Point3 max;

  bool contains(const Point3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
           p.z >= min.z && p.z <= max.z;
  }
  std::array<double, 3> center() const {
    return {0.5 * (double(min.x) + max.x), 0.5 * (double(min.y) + max.y),
            0.5 * (double(min.z) + max.z)};
  }
  Aabb merged(const Aabb& o) const;
  friend bool operator==(const Aabb&, const Aabb&) = default;
};

struct ScenePointCloud {
  std::vector<Point3> points;
  std::vector<Color> colors;
  std::vector<InstanceId> instance_ids;

  std::size_t size() const noexcept { return points.size(); }
  /// Throws ParseError naming the first violated invariant.
  void validate() const;
};

struct InstanceSet {
  std::vector<InstanceId> ids;  // sorted, unique
  std::map<InstanceId, std::vector<std::size_t>> point_index;
  std::map<InstanceId, Aabb> aabb;

  static InstanceSet from_cloud(const ScenePointCloud& cloud);

  bool contains(InstanceId id) const { return point_index.count(id) != 0; }
  const std::vector<std::size_t>& points_of(InstanceId id) const;
  const Aabb& box_of(InstanceId id) const;
};

struct PairPointSet {
  InstanceId i = 0;
  InstanceId j = 0;
  std::vector<std::size_t> point_indices;  // input order
  std::vector<Point3> points;
  std::vector<std::uint8_t> mask_channel;  // 1 for i, 2 for j, 0 otherwise
  Aabb union_box;                          // bounds of box(i) and box(j)
};

PairPointSet build_pair_set(const ScenePointCloud& cloud, const InstanceSet& inst,
                            InstanceId i, InstanceId j);

struct FeatureSlots {
  std::optional<std::vector<float>> f2d;
  std::optional<std::vector<float>> f3d;
  std::optional<std::vector<float>> fused;
};

struct Edge {
  InstanceId i = 0;
  InstanceId j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct SceneGraphSkeleton {
  std::vector<InstanceId> nodes;
  std::vector<Edge> edges;
  std::vector<FeatureSlots> node_slots;
  std::vector<FeatureSlots> edge_slots;

  std::optional<std::size_t> node_index(InstanceId id) const;
  std::optional<std::size_t> edge_index(InstanceId i, InstanceId j) const;
};

/// Fully connected over ordered pairs; with `max_pair_distance` an edge is kept
/// iff the distance between the two box centers is <= the limit.
SceneGraphSkeleton build_skeleton(const InstanceSet& inst,
                                  std::optional<double> max_pair_distance = std::nullopt);

// ---------------------------------------------------------------------------
// Files

struct DepthMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> meters;  // row-major, height * width

  float at(std::uint32_t row, std::uint32_t col) const { return meters[std::size_t(row) * width + col]; }
  /// 0.0, negative and non-finite values carry no measurement.
  static bool is_measurement(float d);
};

/// One frame entry of a scene manifest. Paths are resolved against the manifest directory.
struct FrameDescriptor {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::array<double, 9> intrinsics{};   // row-major 3x3
  std::array<double, 12> extrinsics{};  // row-major 3x4, world -> camera
  std::filesystem::path depth;
  std::optional<std::filesystem::path> pixel_embeddings;
  std::optional<std::filesystem::path> rgb;
};

struct SceneManifest {
  std::filesystem::path cloud;
  std::vector<FrameDescriptor> frames;
  std::optional<std::filesystem::path> crop_embeddings;
  std::optional<std::filesystem::path> ground_truth;
};

struct Scene {
  std::string name;
  std::filesystem::path manifest_path;
  SceneManifest manifest;
  ScenePointCloud cloud;
  InstanceSet instances;
};

std::string encode_cloud(const ScenePointCloud& cloud);
ScenePointCloud decode_cloud(std::string_view bytes);
ScenePointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const ScenePointCloud& cloud);

std::string encode_depth(const DepthMap& depth);
DepthMap decode_depth(std::string_view bytes);
DepthMap read_depth(const std::filesystem::path& path);
void write_depth(const std::filesystem::path& path, const DepthMap& depth);

SceneManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);
/// Serializes with paths relative to `base_dir` where possible.
std::string manifest_to_json(const SceneManifest& manifest, const std::filesystem::path& base_dir);

/// Loads manifest and cloud, builds the instance set. The scene name is the
/// manifest's parent directory name.
Scene load_scene(const std::filesystem::path& manifest_path);

}  // namespace o3dsg
