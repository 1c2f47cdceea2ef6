#include "o3dsg/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "o3dsg/binary_io.hpp"
#include "o3dsg/errors.hpp"

namespace o3dsg {

namespace fs = std::filesystem;
using nlohmann::json;

Aabb Aabb::merged(const Aabb& o) const {
  return {{std::min(min.x, o.min.x), std::min(min.y, o.min.y), std::min(min.z, o.min.z)},
          {std::max(max.x, o.max.x), std::max(max.y, o.max.y), std::max(max.z, o.max.z)}};
}

void ScenePointCloud::validate() const {
  if (points.empty()) throw ParseError("count", "point cloud must contain at least one point");
  if (colors.size() != points.size()) {
    throw ParseError("colors length", "expected " + std::to_string(points.size()) + ", got " +
                                          std::to_string(colors.size()));
  }
  if (instance_ids.size() != points.size()) {
    throw ParseError("instance_ids length", "expected " + std::to_string(points.size()) +
                                                ", got " + std::to_string(instance_ids.size()));
  }
}

InstanceSet InstanceSet::from_cloud(const ScenePointCloud& cloud) {
  cloud.validate();
  InstanceSet inst;
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const auto id = cloud.instance_ids[p];
    const auto& pt = cloud.points[p];
    auto [it, fresh] = inst.aabb.try_emplace(id, Aabb{pt, pt});
    if (!fresh) {
      Aabb& b = it->second;
      b.min = {std::min(b.min.x, pt.x), std::min(b.min.y, pt.y), std::min(b.min.z, pt.z)};
      b.max = {std::max(b.max.x, pt.x), std::max(b.max.y, pt.y), std::max(b.max.z, pt.z)};
    }
    inst.point_index[id].push_back(p);
  }
  inst.ids.reserve(inst.point_index.size());
  for (const auto& [id, _] : inst.point_index) inst.ids.push_back(id);
  return inst;
}

const std::vector<std::size_t>& InstanceSet::points_of(InstanceId id) const {
  auto it = point_index.find(id);
  if (it == point_index.end()) throw DataError("unknown instance id " + std::to_string(id));
  return it->second;
}

const Aabb& InstanceSet::box_of(InstanceId id) const {
  auto it = aabb.find(id);
  if (it == aabb.end()) throw DataError("unknown instance id " + std::to_string(id));
  return it->second;
}

PairPointSet build_pair_set(const ScenePointCloud& cloud, const InstanceSet& inst, InstanceId i,
                            InstanceId j) {
  if (i == j) throw DataError("pair set needs two distinct instances, got " + std::to_string(i) + " twice");
  const Aabb& bi = inst.box_of(i);
  const Aabb& bj = inst.box_of(j);

  PairPointSet pair;
  pair.i = i;
  pair.j = j;
  pair.union_box = bi.merged(bj);
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const auto& pt = cloud.points[p];
    if (!bi.contains(pt) && !bj.contains(pt)) continue;
    const auto id = cloud.instance_ids[p];
    pair.point_indices.push_back(p);
    pair.points.push_back(pt);
    pair.mask_channel.push_back(id == i ? 1 : (id == j ? 2 : 0));
  }
  return pair;
}

std::optional<std::size_t> SceneGraphSkeleton::node_index(InstanceId id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
  if (it == nodes.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

std::optional<std::size_t> SceneGraphSkeleton::edge_index(InstanceId i, InstanceId j) const {
  auto it = std::lower_bound(edges.begin(), edges.end(), Edge{i, j});
  if (it == edges.end() || *it != Edge{i, j}) return std::nullopt;
  return static_cast<std::size_t>(it - edges.begin());
}

SceneGraphSkeleton build_skeleton(const InstanceSet& inst, std::optional<double> max_pair_distance) {
  SceneGraphSkeleton sk;
  sk.nodes = inst.ids;
  for (auto i : inst.ids) {
    const auto ci = inst.box_of(i).center();
    for (auto j : inst.ids) {
      if (i == j) continue;
      if (max_pair_distance) {
        const auto cj = inst.box_of(j).center();
        const double d = std::sqrt((ci[0] - cj[0]) * (ci[0] - cj[0]) +
                                   (ci[1] - cj[1]) * (ci[1] - cj[1]) +
                                   (ci[2] - cj[2]) * (ci[2] - cj[2]));
        if (d > *max_pair_distance) continue;
      }
      sk.edges.push_back({i, j});
    }
  }
  sk.node_slots.resize(sk.nodes.size());
  sk.edge_slots.resize(sk.edges.size());
  return sk;
}

// ---------------------------------------------------------------------------
// Cloud binary: "O3PC", u32 version, u64 count, count * (3 f32, 3 u8, u32).

namespace {
constexpr std::uint32_t kCloudVersion = 1;
constexpr std::uint32_t kDepthVersion = 1;
constexpr std::uint64_t kCloudRecordBytes = 3 * 4 + 3 + 4;
}  // namespace

std::string encode_cloud(const ScenePointCloud& cloud) {
  cloud.validate();
  io::ByteWriter w;
  w.magic("O3PC");
  w.u32(kCloudVersion);
  w.u64(cloud.size());
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    w.f32(cloud.points[p].x);
    w.f32(cloud.points[p].y);
    w.f32(cloud.points[p].z);
    w.u8(cloud.colors[p].r);
    w.u8(cloud.colors[p].g);
    w.u8(cloud.colors[p].b);
    w.u32(cloud.instance_ids[p]);
  }
  return w.take();
}

ScenePointCloud decode_cloud(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("O3PC");
  r.expect_version(kCloudVersion);
  const auto count = r.u64("count");
  if (count == 0) throw ParseError("count", "point cloud must contain at least one point");
  r.require_records(count, kCloudRecordBytes, "count");
  ScenePointCloud cloud;
  cloud.points.resize(count);
  cloud.colors.resize(count);
  cloud.instance_ids.resize(count);
  for (std::uint64_t p = 0; p < count; ++p) {
    cloud.points[p] = {r.f32("x"), r.f32("y"), r.f32("z")};
    cloud.colors[p] = {r.u8("r"), r.u8("g"), r.u8("b")};
    cloud.instance_ids[p] = r.u32("instance_id");
  }
  r.expect_end();
  return cloud;
}

ScenePointCloud read_cloud(const fs::path& path) { return decode_cloud(io::read_file(path)); }

void write_cloud(const fs::path& path, const ScenePointCloud& cloud) {
  io::write_file(path, encode_cloud(cloud));
}

bool DepthMap::is_measurement(float d) { return std::isfinite(d) && d > 0.0f; }

std::string encode_depth(const DepthMap& depth) {
  if (depth.meters.size() != std::size_t(depth.height) * depth.width) {
    throw DataError("depth map payload does not match H*W");
  }
  io::ByteWriter w;
  w.magic("O3DP");
  w.u32(kDepthVersion);
  w.u32(depth.height);
  w.u32(depth.width);
  w.f32s(depth.meters);
  return w.take();
}

DepthMap decode_depth(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("O3DP");
  r.expect_version(kDepthVersion);
  DepthMap d;
  d.height = r.u32("H");
  d.width = r.u32("W");
  if (d.height == 0) throw ParseError("H", "must be positive");
  if (d.width == 0) throw ParseError("W", "must be positive");
  const std::uint64_t n = std::uint64_t(d.height) * d.width;
  r.require_records(n, 4, "depth");
  d.meters.resize(n);
  r.f32s(d.meters, "depth");
  r.expect_end();
  return d;
}

DepthMap read_depth(const fs::path& path) { return decode_depth(io::read_file(path)); }

void write_depth(const fs::path& path, const DepthMap& depth) {
  io::write_file(path, encode_depth(depth));
}

// ---------------------------------------------------------------------------
// Manifest JSON

namespace {

template <std::size_t N>
std::array<double, N> number_array(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != N) {
    throw ParseError(field, "expected " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t k = 0; k < N; ++k) {
    if (!j[k].is_number()) throw ParseError(field, "element " + std::to_string(k) + " is not a number");
    out[k] = j[k].get<double>();
  }
  return out;
}

std::uint32_t positive_u32(const json& obj, const std::string& key, const std::string& field) {
  if (!obj.contains(key) || !obj[key].is_number_integer() || obj[key].get<long long>() <= 0) {
    throw ParseError(field, "expected positive integer");
  }
  return obj[key].get<std::uint32_t>();
}

std::optional<fs::path> optional_path(const json& obj, const std::string& key, const fs::path& base,
                                      const std::string& field) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  if (!obj[key].is_string()) throw ParseError(field, "expected path string or null");
  return base / obj[key].get<std::string>();
}

std::string relative_or_absolute(const fs::path& p, const fs::path& base) {
  auto rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

}  // namespace

SceneManifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest", e.what());
  }
  if (!j.is_object()) throw ParseError("manifest", "expected a JSON object");
  SceneManifest m;
  if (!j.contains("cloud") || !j["cloud"].is_string()) throw ParseError("cloud", "expected path string");
  m.cloud = base_dir / j["cloud"].get<std::string>();
  m.crop_embeddings = optional_path(j, "crop_embeddings", base_dir, "crop_embeddings");
  m.ground_truth = optional_path(j, "ground_truth", base_dir, "ground_truth");
  if (j.contains("frames")) {
    if (!j["frames"].is_array()) throw ParseError("frames", "expected array");
    for (std::size_t k = 0; k < j["frames"].size(); ++k) {
      const auto& f = j["frames"][k];
      const std::string prefix = "frames[" + std::to_string(k) + "].";
      if (!f.is_object()) throw ParseError(prefix.substr(0, prefix.size() - 1), "expected object");
      FrameDescriptor d;
      d.width = positive_u32(f, "width", prefix + "width");
      d.height = positive_u32(f, "height", prefix + "height");
      d.intrinsics = number_array<9>(f.value("intrinsics", json()), prefix + "intrinsics");
      d.extrinsics = number_array<12>(f.value("extrinsics", json()), prefix + "extrinsics");
      auto depth = optional_path(f, "depth", base_dir, prefix + "depth");
      if (!depth) throw ParseError(prefix + "depth", "expected path string");
      d.depth = *depth;
      d.pixel_embeddings = optional_path(f, "pixel_embeddings", base_dir, prefix + "pixel_embeddings");
      d.rgb = optional_path(f, "rgb", base_dir, prefix + "rgb");
      m.frames.push_back(std::move(d));
    }
  }
  return m;
}

std::string manifest_to_json(const SceneManifest& m, const fs::path& base_dir) {
  json j;
  j["cloud"] = relative_or_absolute(m.cloud, base_dir);
  json frames = json::array();
  for (const auto& d : m.frames) {
    json f;
    f["width"] = d.width;
    f["height"] = d.height;
    f["intrinsics"] = d.intrinsics;
    f["extrinsics"] = d.extrinsics;
    f["depth"] = relative_or_absolute(d.depth, base_dir);
    f["pixel_embeddings"] =
        d.pixel_embeddings ? json(relative_or_absolute(*d.pixel_embeddings, base_dir)) : json();
    f["rgb"] = d.rgb ? json(relative_or_absolute(*d.rgb, base_dir)) : json();
    frames.push_back(std::move(f));
  }
  j["frames"] = std::move(frames);
  if (m.crop_embeddings) j["crop_embeddings"] = relative_or_absolute(*m.crop_embeddings, base_dir);
  if (m.ground_truth) j["ground_truth"] = relative_or_absolute(*m.ground_truth, base_dir);
  return j.dump(2) + "\n";
}

Scene load_scene(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw DataError("manifest not found: " + manifest_path.string());
  Scene s;
  s.manifest_path = manifest_path;
  const auto base = manifest_path.parent_path();
  s.name = fs::absolute(manifest_path).parent_path().filename().string();
  s.manifest = parse_manifest(io::read_file(manifest_path), base);
  if (!fs::exists(s.manifest.cloud)) throw DataError("cloud file not found: " + s.manifest.cloud.string());
  s.cloud = read_cloud(s.manifest.cloud);
  s.instances = InstanceSet::from_cloud(s.cloud);
  return s;
}

}  // namespace o3dsg
