#include "o3dsg/fixture.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "o3dsg/binary_io.hpp"
#include "o3dsg/errors.hpp"
#include "o3dsg/feature_pipeline.hpp"
#include "o3dsg/inference.hpp"
#include "o3dsg/projection.hpp"

namespace o3dsg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr float kContactTolerance = 1e-3f;
const std::vector<float> kScales = {1.0f, 1.5f, 2.0f};

// Lower id is the canonical subject of every annotated pair.
constexpr InstanceId kLamp = 2, kChair = 3, kTable = 5, kCrate = 7;

const std::vector<std::string> kDistractorObjects = {"bed", "cabinet", "door", "shelf", "sofa", "window"};
const std::vector<std::string> kOtherPredicates = {
    "attached to", "behind",       "belonging to",    "bigger than",    "build in",    "close by",
    "connected to", "cover",       "front",           "hanging in",     "hanging on",  "higher than",
    "inside",       "leaning against", "lower than",  "lying in",       "lying on",    "none",
    "part of",      "same as",     "same symmetry as", "smaller than",  "standing in"};
const std::map<std::string, std::string> kMaterials = {
    {"chair", "fabric"}, {"crate", "plastic"}, {"lamp", "metal"}, {"table", "wood"}};
const std::map<std::string, double> kObjectFrequencies = {
    {"table", 120}, {"chair", 95}, {"lamp", 31}, {"crate", 12}};

// Streams are derived from (seed, purpose, index) so adding a scene never
// shifts the random numbers of another.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(purpose), std::uint32_t(index)};
  return std::mt19937_64(seq);
}

std::vector<float> random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double n = 0;
  for (auto& x : v) {
    x = g(rng);
    n += x * x;
  }
  n = std::sqrt(n);
  std::vector<float> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = float(v[k] / n);
  return out;
}

/// Unit vectors with pairwise |cos| below `max_cos`.
std::vector<std::vector<float>> spread_prototypes(std::mt19937_64& rng, std::size_t count, int dim, double max_cos) {
  std::vector<std::vector<float>> out;
  while (out.size() < count) {
    auto v = random_unit(rng, dim);
    if (std::all_of(out.begin(), out.end(), [&](const auto& u) { return std::abs(cosine(u, v)) < max_cos; })) {
      out.push_back(std::move(v));
    }
  }
  return out;
}

std::vector<float> perturbed(const std::vector<float>& base, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<float> out(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) out[k] = float(double(base[k]) + sigma * g(rng));
  return out;
}

std::vector<float> blend(const std::vector<float>& a, const std::vector<float>& b, double weight) {
  std::vector<double> v(a.size());
  double n = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    v[k] = double(a[k]) + weight * b[k];
    n += v[k] * v[k];
  }
  n = std::sqrt(n);
  std::vector<float> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = float(v[k] / n);
  return out;
}

Aabb make_box(double x0, double y0, double z0, double sx, double sy, double sz) {
  return {{float(x0), float(y0), float(z0)}, {float(x0 + sx), float(y0 + sy), float(z0 + sz)}};
}

std::vector<FixtureObject> make_layout(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  struct Footprint {
    InstanceId id;
    std::string label;
    double sx, sy, sz;
  };
  std::vector<Footprint> row = {
      {kChair, "chair", uni(0.45, 0.55), uni(0.45, 0.55), uni(0.82, 0.88)},
      {kTable, "table", uni(1.1, 1.3), uni(0.75, 0.85), uni(0.72, 0.78)},
      {kCrate, "crate", uni(0.45, 0.55), uni(0.45, 0.55), uni(0.45, 0.50)},
  };
  std::shuffle(row.begin(), row.end(), rng);

  std::vector<double> gaps = {uni(0.35, 0.6), uni(0.35, 0.6)};
  double total = gaps[0] + gaps[1];
  for (const auto& f : row) total += f.sx;
  double x = -total / 2;
  std::vector<FixtureObject> objects;
  for (std::size_t k = 0; k < row.size(); ++k) {
    const auto& f = row[k];
    const double y = uni(-0.2, 0.2) - f.sy / 2;
    objects.push_back({f.id, f.label, make_box(x, y, 0.0, f.sx, f.sy, f.sz)});
    x += f.sx + (k < gaps.size() ? gaps[k] : 0.0);
  }
  const auto& table = *std::find_if(objects.begin(), objects.end(), [](const auto& o) { return o.id == kTable; });
  const double lamp_h = uni(0.45, 0.55), side = 0.2;
  const double lx = uni(table.box.min.x + 0.1, table.box.max.x - 0.1 - side);
  const double ly = uni(table.box.min.y + 0.1, table.box.max.y - 0.1 - side);
  Aabb lamp = make_box(lx, ly, 0.0, side, side, lamp_h);
  lamp.min.z = table.box.max.z;  // rests exactly on the table top
  lamp.max.z = float(double(table.box.max.z) + lamp_h);
  objects.push_back({kLamp, "lamp", lamp});
  std::sort(objects.begin(), objects.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return objects;
}

/// Points on the five faces a scan can see (no underside), counts
/// proportional to face area.
void sample_surface(const FixtureObject& obj, int count, std::mt19937_64& rng, ScenePointCloud& cloud,
                    Color color) {
  const auto& b = obj.box;
  const double sx = b.max.x - b.min.x, sy = b.max.y - b.min.y, sz = b.max.z - b.min.z;
  const std::array<double, 6> areas = {0.0, sx * sy, sx * sz, sx * sz, sy * sz, sy * sz};
  std::discrete_distribution<int> face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int n = 0; n < count; ++n) {
    const int f = face(rng);
    double x = b.min.x + sx * u01(rng), y = b.min.y + sy * u01(rng), z = b.min.z + sz * u01(rng);
    switch (f) {
      case 0: z = b.min.z; break;
      case 1: z = b.max.z; break;
      case 2: y = b.min.y; break;
      case 3: y = b.max.y; break;
      case 4: x = b.min.x; break;
      default: x = b.max.x; break;
    }
    cloud.points.push_back({float(x), float(y), float(z)});
    cloud.colors.push_back(color);
    cloud.instance_ids.push_back(obj.id);
  }
}

struct Camera {
  Eigen::Matrix3d K;
  Matrix34d Rt;
};

std::vector<Camera> ring_cameras(const FixtureSpec& spec) {
  std::vector<Camera> cams;
  const double f = 0.86 * spec.image_size, c = spec.image_size / 2.0;
  const Eigen::Vector3d target(0.0, 0.0, 0.45), up(0.0, 0.0, 1.0);
  for (int k = 0; k < spec.cameras; ++k) {
    const double theta = 2 * std::numbers::pi * k / spec.cameras + std::numbers::pi / 12;
    const Eigen::Vector3d eye(2.6 * std::cos(theta), 2.6 * std::sin(theta), 2.8);
    const Eigen::Vector3d forward = (target - eye).normalized();
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d R;
    R.row(0) = right;
    R.row(1) = down;
    R.row(2) = forward;
    Camera cam;
    cam.K << f, 0, c, 0, f, c, 0, 0, 1;
    cam.Rt.leftCols<3>() = R;
    cam.Rt.col(3) = -R * eye;
    cams.push_back(cam);
  }
  return cams;
}

struct Rendered {
  DepthMap depth;
  std::vector<int> owner;  // per pixel index into objects, -1 for background
};

/// Z-buffered point splat (3 x 3 pixels per point).
Rendered render(const Camera& cam, const ScenePointCloud& cloud, const std::vector<FixtureObject>& objects,
                int size) {
  Rendered r;
  r.depth.width = r.depth.height = std::uint32_t(size);
  r.depth.meters.assign(std::size_t(size) * size, 0.0f);
  r.owner.assign(std::size_t(size) * size, -1);
  std::map<InstanceId, int> index;
  for (std::size_t k = 0; k < objects.size(); ++k) index[objects[k].id] = int(k);
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const auto& pt = cloud.points[p];
    const Eigen::Vector3d q = cam.K * (cam.Rt * Eigen::Vector4d(pt.x, pt.y, pt.z, 1.0));
    if (q.z() <= 0) continue;
    const auto px = int(std::floor(q.x() / q.z())), py = int(std::floor(q.y() / q.z()));
    const float w = float(q.z());
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = px + dx, y = py + dy;
        if (x < 0 || y < 0 || x >= size || y >= size) continue;
        const auto at = std::size_t(y) * size + x;
        if (r.owner[at] < 0 || w < r.depth.meters[at]) {
          r.depth.meters[at] = w;
          r.owner[at] = index.at(cloud.instance_ids[p]);
        }
      }
    }
  }
  return r;
}

struct Prototypes {
  std::map<std::string, std::vector<float>> objects;     // every object-table label
  std::map<std::string, std::vector<float>> predicates;  // the four fixture predicates
};

Prototypes make_prototypes(const FixtureSpec& spec) {
  auto rng = stream(spec.seed, 1, 0);
  Prototypes p;
  std::vector<std::string> labels = fixture_object_classes();
  labels.insert(labels.end(), kDistractorObjects.begin(), kDistractorObjects.end());
  auto vs = spread_prototypes(rng, labels.size(), spec.dim_obj, 0.6);
  for (std::size_t k = 0; k < labels.size(); ++k) p.objects[labels[k]] = vs[k];
  const auto& preds = fixture_predicate_classes();
  auto ps = spread_prototypes(rng, preds.size(), spec.dim_rel, 0.5);
  for (std::size_t k = 0; k < preds.size(); ++k) p.predicates[preds[k]] = ps[k];
  return p;
}

void write_json(const fs::path& path, const json& j) {
  io::write_file(path, j.dump(2) + "\n");
}

struct SceneOutput {
  fs::path manifest;
  bool ok = true;  // false when two differently labelled pairs share a crop
};

SceneOutput write_scene(const FixtureSpec& spec, const Prototypes& protos, const std::vector<FixtureObject>& objects,
                        const fs::path& dir, std::uint64_t stream_index) {
  auto rng = stream(spec.seed, 3, stream_index);
  ScenePointCloud cloud;
  const std::map<std::string, std::pair<int, Color>> look = {{"lamp", {160, {230, 200, 60}}},
                                                             {"chair", {360, {60, 90, 200}}},
                                                             {"table", {520, {150, 100, 50}}},
                                                             {"crate", {300, {90, 160, 90}}}};
  for (const auto& o : objects) sample_surface(o, look.at(o.label).first, rng, cloud, look.at(o.label).second);
  cloud.validate();
  const auto inst = InstanceSet::from_cloud(cloud);

  SceneManifest m;
  m.cloud = dir / "cloud.o3pc";
  write_cloud(m.cloud, cloud);

  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<CameraFrame> frames;
  const auto cameras = ring_cameras(spec);
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    const auto& cam = cameras[k];
    auto rendered = render(cam, cloud, objects, spec.image_size);
    FrameDescriptor d;
    d.width = d.height = std::uint32_t(spec.image_size);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) d.intrinsics[std::size_t(r * 3 + c)] = cam.K(r, c);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) d.extrinsics[std::size_t(r * 4 + c)] = cam.Rt(r, c);
    const auto stem = "frame_" + std::to_string(k);
    d.depth = dir / (stem + ".o3dp");
    d.pixel_embeddings = dir / (stem + ".o3pe");
    write_depth(d.depth, rendered.depth);

    EmbeddingGrid grid;
    grid.dim = std::uint32_t(spec.dim_obj);
    grid.height = grid.width = std::uint32_t(spec.image_size);
    grid.data.assign(std::size_t(spec.image_size) * spec.image_size * spec.dim_obj, 0.0f);
    for (std::size_t px = 0; px < rendered.owner.size(); ++px) {
      if (rendered.owner[px] < 0) continue;
      const auto& proto = protos.objects.at(objects[std::size_t(rendered.owner[px])].label);
      for (int c = 0; c < spec.dim_obj; ++c) {
        grid.data[px * std::size_t(spec.dim_obj) + std::size_t(c)] = float(proto[std::size_t(c)] + spec.noise * g(rng));
      }
    }
    write_pixel_embeddings(*d.pixel_embeddings, grid);
    frames.push_back(CameraFrame::from_descriptor(d, rendered.depth));
    m.frames.push_back(std::move(d));
  }

  // Union-box crops for every unordered pair, every frame showing both, every scale.
  SceneOutput out;
  CropCache cache;
  cache.dim = std::uint32_t(spec.dim_rel);
  json preds = json::object();
  std::map<std::tuple<std::size_t, std::int32_t, std::int32_t, std::int32_t, std::int32_t>, std::string> seen;
  for (std::size_t a = 0; a < objects.size(); ++a) {
    for (std::size_t b = a + 1; b < objects.size(); ++b) {
      const auto& s = objects[a];
      const auto& o = objects[b];
      const auto pred = geometric_predicate(s.box, o.box);
      preds[std::to_string(s.id) + "," + std::to_string(o.id)] = json::array({pred});
      for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto ps = project_instance(frames[k], k, cloud, inst, s.id);
        const auto po = project_instance(frames[k], k, cloud, inst, o.id);
        if (!ps.box2d || !po.box2d) continue;
        const auto box = ps.box2d->united(*po.box2d);
        auto [it, fresh] = seen.try_emplace({k, box.min_x, box.min_y, box.max_x, box.max_y}, pred);
        if (!fresh) {
          if (it->second != pred) out.ok = false;
          continue;
        }
        for (float scale : kScales) {
          cache.records.push_back({std::uint32_t(k), box, scale, perturbed(protos.predicates.at(pred), spec.noise, rng)});
        }
      }
    }
  }
  m.crop_embeddings = dir / "crops.o3ce";
  write_crop_cache(*m.crop_embeddings, cache);

  json objs = json::object(), material = json::object();
  for (const auto& o : objects) {
    objs[std::to_string(o.id)] = o.label;
    material[std::to_string(o.id)] = kMaterials.at(o.label);
  }
  std::vector<std::string> object_classes = fixture_object_classes();
  object_classes.insert(object_classes.end(), kDistractorObjects.begin(), kDistractorObjects.end());
  std::sort(object_classes.begin(), object_classes.end());
  std::vector<std::string> predicate_classes = fixture_predicate_classes();
  predicate_classes.insert(predicate_classes.end(), kOtherPredicates.begin(), kOtherPredicates.end());
  std::sort(predicate_classes.begin(), predicate_classes.end());
  m.ground_truth = dir / "gt.json";
  write_json(*m.ground_truth, json{{"objects", objs},
                                   {"predicates", preds},
                                   {"object_classes", object_classes},
                                   {"predicate_classes", predicate_classes},
                                   {"attributes", {{"material", material}}}});

  out.manifest = dir / "manifest.json";
  io::write_file(out.manifest, manifest_to_json(m, dir));
  return out;
}

void write_tables(const FixtureSpec& spec, const Prototypes& protos, const fs::path& dir) {
  auto rng = stream(spec.seed, 2, 0);
  EmbeddingTable objects{"object-text", std::uint32_t(spec.dim_obj), {}, {}};
  for (const auto& [label, v] : protos.objects) objects.add(label, v);
  write_table(dir / "objects.o3et", objects);

  EmbeddingTable predicates{"predicate-text", std::uint32_t(spec.dim_rel), {}, {}};
  for (const auto& [label, v] : protos.predicates) predicates.add(label, v);
  write_table(dir / "predicates.o3et", predicates);

  // Closed-set lookup labels in the text-embedder space, plus a synonym that
  // must land nearest to its canonical label.
  std::vector<std::string> lookup_labels = fixture_predicate_classes();
  lookup_labels.insert(lookup_labels.end(), kOtherPredicates.begin(), kOtherPredicates.end());
  std::sort(lookup_labels.begin(), lookup_labels.end());
  const auto vs = spread_prototypes(rng, lookup_labels.size(), spec.dim_text, 0.75);
  EmbeddingTable lookup{"lookup-text", std::uint32_t(spec.dim_text), {}, {}};
  for (std::size_t k = 0; k < lookup_labels.size(); ++k) lookup.add(lookup_labels[k], vs[k]);
  write_table(dir / "lookup.o3et", lookup);

  EmbeddingTable phrases{"lookup-text", std::uint32_t(spec.dim_text), {}, {}};
  const auto& standing = lookup.vectors[*lookup.find("standing on")];
  for (;;) {
    auto synonym = blend(standing, random_unit(rng, spec.dim_text), 0.35);
    if (rank_by_cosine(synonym, lookup, 1).front().label == "standing on") {
      phrases.add("resting on", std::move(synonym));
      break;
    }
  }
  write_table(dir / "phrases.o3et", phrases);

  EmbeddingTable materials{"material", std::uint32_t(spec.dim_obj), {}, {}};
  for (const auto& [cls, mat] : kMaterials) {
    for (;;) {
      auto v = blend(protos.objects.at(cls), random_unit(rng, spec.dim_obj), 0.4);
      bool nearest = true;
      for (const auto& [other, proto] : protos.objects)
        if (other != cls && cosine(proto, v) >= cosine(protos.objects.at(cls), v)) nearest = false;
      if (nearest) {
        materials.add(mat, std::move(v));
        break;
      }
    }
  }
  write_table(dir / "materials.o3et", materials);
}

json pipeline_config(const FixtureSpec& spec, const FixtureSummary& s, const fs::path& root) {
  auto rel = [&](const fs::path& p) { return fs::relative(p, root).generic_string(); };
  json train = json::array(), heldout = json::array();
  for (const auto& p : s.train_manifests) train.push_back(rel(p));
  for (const auto& p : s.heldout_manifests) heldout.push_back(rel(p));
  return json{
      {"work_dir", "work"},
      {"scenes", {{"train", train}, {"eval", heldout}}},
      {"tables",
       {{"object", "tables/objects.o3et"},
        {"predicate", "tables/predicates.o3et"},
        {"lookup", "tables/lookup.o3et"},
        {"text", json::array({"tables/lookup.o3et", "tables/phrases.o3et"})},
        {"attributes", {{"material", "tables/materials.o3et"}}}}},
      {"frequencies", {{"objects", "frequencies/objects.json"}, {"predicates", "frequencies/predicates.json"}}},
      {"model", {{"d_obj", spec.dim_obj}, {"d_rel", spec.dim_rel}}},
      {"train", {{"seed", spec.seed}}},
      {"checkpoint", "work/model.o3ck"},
      {"fixture", spec.to_json()},
  };
}

}  // namespace

// ---------------------------------------------------------------------------

void FixtureSpec::validate() const {
  if (train_scenes < 1) throw ConfigError("fixture.train_scenes", "must be >= 1");
  if (heldout_scenes < 0) throw ConfigError("fixture.heldout_scenes", "must be >= 0");
  if (!(noise >= 0)) throw ConfigError("fixture.noise", "must be >= 0");
  if (dim_obj < 4) throw ConfigError("fixture.dim_obj", "must be >= 4");
  if (dim_rel < 4) throw ConfigError("fixture.dim_rel", "must be >= 4");
  if (dim_text < 8) throw ConfigError("fixture.dim_text", "must be >= 8");
  if (image_size < 16) throw ConfigError("fixture.image_size", "must be >= 16");
  if (cameras < 1) throw ConfigError("fixture.cameras", "must be >= 1");
}

json FixtureSpec::to_json() const {
  return json{{"seed", seed},         {"train_scenes", train_scenes}, {"heldout_scenes", heldout_scenes},
              {"noise", noise},       {"dim_obj", dim_obj},           {"dim_rel", dim_rel},
              {"dim_text", dim_text}, {"image_size", image_size},     {"cameras", cameras}};
}

FixtureSpec FixtureSpec::from_json(const json& j) {
  FixtureSpec s;
  auto get = [&j](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("fixture.") + key, e.what());
    }
  };
  get("seed", s.seed);
  get("train_scenes", s.train_scenes);
  get("heldout_scenes", s.heldout_scenes);
  get("noise", s.noise);
  get("dim_obj", s.dim_obj);
  get("dim_rel", s.dim_rel);
  get("dim_text", s.dim_text);
  get("image_size", s.image_size);
  get("cameras", s.cameras);
  s.validate();
  return s;
}

std::string geometric_predicate(const Aabb& s, const Aabb& o) {
  const bool overlap_xy = s.min.x < o.max.x && o.min.x < s.max.x && s.min.y < o.max.y && o.min.y < s.max.y;
  if (std::abs(s.min.z - o.max.z) <= kContactTolerance && overlap_xy) return "standing on";
  if (s.center()[2] > o.max.z) return "above";
  return s.center()[0] < o.center()[0] ? "left of" : "right of";
}

const std::vector<std::string>& fixture_object_classes() {
  static const std::vector<std::string> v = {"chair", "crate", "lamp", "table"};
  return v;
}

const std::vector<std::string>& fixture_predicate_classes() {
  static const std::vector<std::string> v = {"above", "left of", "right of", "standing on"};
  return v;
}

FixtureSummary generate_fixture(const FixtureSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const auto protos = make_prototypes(spec);
  write_tables(spec, protos, out_dir / "tables");

  FixtureSummary summary;
  std::map<std::string, double> predicate_counts;
  for (const auto& l : fixture_predicate_classes()) predicate_counts[l] = 0;

  for (int s = 0; s < spec.train_scenes; ++s) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 64) throw DataError("fixture: could not find a layout with unambiguous crops");
      auto rng = stream(spec.seed, 4, std::uint64_t(s) * 1000 + attempt);
      const auto layout = make_layout(rng);
      char name[32];
      std::snprintf(name, sizeof name, "train_%02d", s);
      const auto train = write_scene(spec, protos, layout, out_dir / "scenes" / name, std::uint64_t(s) * 1000 + attempt);
      if (!train.ok) continue;
      bool copies_ok = true;
      std::vector<fs::path> copies;
      for (int h = s; h < spec.heldout_scenes; h += spec.train_scenes) {
        std::snprintf(name, sizeof name, "heldout_%02d", h);
        const auto copy = write_scene(spec, protos, layout, out_dir / "scenes" / name,
                                      1'000'000 + std::uint64_t(h) * 1000 + attempt);
        copies_ok = copies_ok && copy.ok;
        copies.push_back(copy.manifest);
      }
      if (!copies_ok) continue;
      summary.train_manifests.push_back(train.manifest);
      summary.heldout_manifests.insert(summary.heldout_manifests.end(), copies.begin(), copies.end());
      for (std::size_t a = 0; a < layout.size(); ++a)
        for (std::size_t b = a + 1; b < layout.size(); ++b) predicate_counts[geometric_predicate(layout[a].box, layout[b].box)] += 1;
      break;
    }
  }
  std::sort(summary.heldout_manifests.begin(), summary.heldout_manifests.end());

  std::map<std::string, double> object_counts(kObjectFrequencies.begin(), kObjectFrequencies.end());
  write_json(out_dir / "frequencies" / "objects.json", object_counts);
  write_json(out_dir / "frequencies" / "predicates.json", predicate_counts);

  summary.config = out_dir / "pipeline.json";
  write_json(summary.config, pipeline_config(spec, summary, out_dir));
  return summary;
}

}  // namespace o3dsg
