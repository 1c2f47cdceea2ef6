#include "o3dsg/feature_pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "o3dsg/binary_io.hpp"
#include "o3dsg/errors.hpp"

namespace o3dsg {

namespace {
constexpr std::uint32_t kPixelEmbeddingVersion = 1;
constexpr std::uint32_t kCropCacheVersion = 1;
constexpr std::uint32_t kTargetsVersion = 1;
}  // namespace

std::span<const float> EmbeddingGrid::sample(Pixel px, std::uint32_t image_width,
                                             std::uint32_t image_height) const {
  const auto row = static_cast<std::uint32_t>(std::uint64_t(px.y) * height / image_height);
  const auto col = static_cast<std::uint32_t>(std::uint64_t(px.x) * width / image_width);
  return at(std::min(row, height - 1), std::min(col, width - 1));
}

std::string encode_pixel_embeddings(const EmbeddingGrid& grid) {
  if (grid.data.size() != std::size_t(grid.dim) * grid.height * grid.width) {
    throw DataError("pixel embedding payload does not match H'*W'*D");
  }
  io::ByteWriter w;
  w.magic("O3PE");
  w.u32(kPixelEmbeddingVersion);
  w.u32(grid.dim);
  w.u32(grid.height);
  w.u32(grid.width);
  w.f32s(grid.data);
  return w.take();
}

EmbeddingGrid decode_pixel_embeddings(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("O3PE");
  r.expect_version(kPixelEmbeddingVersion);
  EmbeddingGrid g;
  g.dim = r.u32("D");
  g.height = r.u32("H'");
  g.width = r.u32("W'");
  if (g.dim == 0) throw ParseError("D", "must be positive");
  if (g.height == 0) throw ParseError("H'", "must be positive");
  if (g.width == 0) throw ParseError("W'", "must be positive");
  const std::uint64_t n = std::uint64_t(g.dim) * g.height * g.width;
  r.require_records(n, 4, "embeddings");
  g.data.resize(n);
  r.f32s(g.data, "embeddings");
  r.expect_end();
  return g;
}

EmbeddingGrid read_pixel_embeddings(const std::filesystem::path& path) {
  return decode_pixel_embeddings(io::read_file(path));
}

void write_pixel_embeddings(const std::filesystem::path& path, const EmbeddingGrid& grid) {
  io::write_file(path, encode_pixel_embeddings(grid));
}

GridPixelEmbedder::GridPixelEmbedder(std::vector<EmbeddingGrid> grids) : grids_(std::move(grids)) {
  for (std::size_t k = 0; k < grids_.size(); ++k) {
    if (k == 0) dim_ = grids_[k].dim;
    if (grids_[k].dim != dim_) {
      throw DataError("embedding dimension mismatch: frame " + std::to_string(k) + " has D=" +
                      std::to_string(grids_[k].dim) + ", expected " + std::to_string(dim_));
    }
  }
}

GridPixelEmbedder GridPixelEmbedder::from_manifest(const SceneManifest& manifest) {
  std::vector<EmbeddingGrid> grids;
  for (std::size_t k = 0; k < manifest.frames.size(); ++k) {
    const auto& p = manifest.frames[k].pixel_embeddings;
    if (!p) throw DataError("frame " + std::to_string(k) + " has no pixel_embeddings file");
    grids.push_back(read_pixel_embeddings(*p));
  }
  return GridPixelEmbedder(std::move(grids));
}

const EmbeddingGrid& GridPixelEmbedder::grid(std::size_t frame) const {
  if (frame >= grids_.size()) throw DataError("no pixel embeddings for frame " + std::to_string(frame));
  return grids_[frame];
}

Box2D expand_box(const Box2D& box, double scale, std::uint32_t image_width, std::uint32_t image_height) {
  if (!box.valid()) throw DataError("cannot expand an empty box");
  if (!(scale >= 1.0)) throw DataError("crop scale must be >= 1");
  auto expand = [scale](std::int32_t lo, std::int32_t hi, std::uint32_t limit) {
    const double center = 0.5 * (double(lo) + double(hi) + 1.0);
    const double half = 0.5 * (double(hi) - double(lo) + 1.0) * scale;
    auto new_lo = static_cast<std::int64_t>(std::floor(center - half));
    auto new_hi = static_cast<std::int64_t>(std::ceil(center + half)) - 1;
    new_lo = std::clamp<std::int64_t>(new_lo, 0, std::int64_t(limit) - 1);
    new_hi = std::clamp<std::int64_t>(new_hi, 0, std::int64_t(limit) - 1);
    return std::pair<std::int32_t, std::int32_t>(std::int32_t(new_lo), std::int32_t(new_hi));
  };
  const auto [x0, x1] = expand(box.min_x, box.max_x, image_width);
  const auto [y0, y1] = expand(box.min_y, box.max_y, image_height);
  return {x0, y0, x1, y1};
}

// ---------------------------------------------------------------------------
// Crop cache: "O3CE", u32 version, u32 D, u64 count,
// count * (u32 frame, 4 u32 box, f32 scale, D f32).

std::string encode_crop_cache(const CropCache& cache) {
  io::ByteWriter w;
  w.magic("O3CE");
  w.u32(kCropCacheVersion);
  w.u32(cache.dim);
  w.u64(cache.records.size());
  for (const auto& rec : cache.records) {
    if (rec.embedding.size() != cache.dim) throw DataError("crop embedding dimension mismatch");
    if (!rec.box.valid() || rec.box.min_x < 0 || rec.box.min_y < 0) {
      throw DataError("crop record has an invalid box");
    }
    w.u32(rec.frame);
    w.u32(std::uint32_t(rec.box.min_x));
    w.u32(std::uint32_t(rec.box.min_y));
    w.u32(std::uint32_t(rec.box.max_x));
    w.u32(std::uint32_t(rec.box.max_y));
    w.f32(rec.scale);
    w.f32s(rec.embedding);
  }
  return w.take();
}

CropCache decode_crop_cache(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("O3CE");
  r.expect_version(kCropCacheVersion);
  CropCache cache;
  cache.dim = r.u32("D");
  if (cache.dim == 0) throw ParseError("D", "must be positive");
  const auto count = r.u64("count");
  r.require_records(count, 4 * 6 + 4ull * cache.dim, "count");
  cache.records.resize(count);
  for (auto& rec : cache.records) {
    rec.frame = r.u32("frame");
    auto coord = [&r](std::string_view field) {
      const auto v = r.u32(field);
      if (v > std::uint32_t(std::numeric_limits<std::int32_t>::max())) throw ParseError(std::string(field), "out of range");
      return std::int32_t(v);
    };
    rec.box.min_x = coord("box.min_x");
    rec.box.min_y = coord("box.min_y");
    rec.box.max_x = coord("box.max_x");
    rec.box.max_y = coord("box.max_y");
    if (!rec.box.valid()) throw ParseError("box", "max below min");
    rec.scale = r.f32("scale");
    rec.embedding.resize(cache.dim);
    r.f32s(rec.embedding, "embedding");
  }
  r.expect_end();
  return cache;
}

CropCache read_crop_cache(const std::filesystem::path& path) { return decode_crop_cache(io::read_file(path)); }

void write_crop_cache(const std::filesystem::path& path, const CropCache& cache) {
  io::write_file(path, encode_crop_cache(cache));
}

CachedCropEmbedder::CachedCropEmbedder(const CropCache& cache) : dim_(cache.dim) {
  for (const auto& rec : cache.records) {
    Key key{rec.frame, rec.box.min_x, rec.box.min_y, rec.box.max_x, rec.box.max_y,
            std::bit_cast<std::uint32_t>(rec.scale)};
    entries_[key] = rec.embedding;
  }
}

std::vector<float> CachedCropEmbedder::embed(std::size_t frame, const Box2D& box, float scale) const {
  Key key{std::uint32_t(frame), box.min_x, box.min_y, box.max_x, box.max_y, std::bit_cast<std::uint32_t>(scale)};
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw DataError("no cached crop embedding for frame " + std::to_string(frame) + " box (" +
                    std::to_string(box.min_x) + "," + std::to_string(box.min_y) + "," +
                    std::to_string(box.max_x) + "," + std::to_string(box.max_y) + ") scale " +
                    std::to_string(scale));
  }
  return it->second;
}

// ---------------------------------------------------------------------------

std::vector<float> object_feature_in_frame(const PixelEmbedder& embedder, const CameraFrame& frame,
                                           const ProjectedInstance& proj) {
  if (proj.pixels.empty()) {
    throw DataError("instance " + std::to_string(proj.instance) + " has no valid pixels in frame " +
                    std::to_string(proj.frame));
  }
  const auto& grid = embedder.grid(proj.frame);
  std::vector<double> acc(grid.dim, 0.0);
  for (const auto& px : proj.pixels) {
    const auto e = grid.sample(px, frame.width, frame.height);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += e[d];
  }
  std::vector<float> out(acc.size());
  const double n = double(proj.pixels.size());
  for (std::size_t d = 0; d < acc.size(); ++d) out[d] = float(acc[d] / n);
  return out;
}

std::vector<float> relationship_feature_in_frame(const CropEmbedder& embedder, std::size_t frame,
                                                 const Box2D& box_i, const Box2D& box_j,
                                                 std::span<const float> scales) {
  if (scales.empty()) throw DataError("at least one crop scale is required");
  if (!box_i.valid() || !box_j.valid()) throw DataError("relationship crop needs two valid boxes");
  const Box2D crop = box_i.united(box_j);
  if (crop.area() <= 0) throw DataError("degenerate union box");
  std::vector<double> acc(embedder.dim(), 0.0);
  for (float s : scales) {
    const auto e = embedder.embed(frame, crop, s);
    if (e.size() != acc.size()) {
      throw DataError("embedding dimension mismatch: crop embedder returned " +
                      std::to_string(e.size()) + ", expected " + std::to_string(acc.size()));
    }
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += e[d];
  }
  std::vector<float> out(acc.size());
  for (std::size_t d = 0; d < acc.size(); ++d) out[d] = float(acc[d] / double(scales.size()));
  return out;
}

namespace {

TargetEntry mean_entry(std::vector<std::size_t> frames, std::size_t dim,
                       const std::function<std::vector<float>(std::size_t)>& feature_of) {
  TargetEntry entry;
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) return entry;
  std::vector<double> acc(dim, 0.0);
  for (auto k : frames) {
    const auto f = feature_of(k);
    if (f.size() != dim) {
      throw DataError("embedding dimension mismatch in frame " + std::to_string(k) + ": got " +
                      std::to_string(f.size()) + ", expected " + std::to_string(dim));
    }
    for (std::size_t d = 0; d < dim; ++d) acc[d] += f[d];
    entry.frames.push_back(std::uint32_t(k));
  }
  std::vector<float> mean(dim);
  for (std::size_t d = 0; d < dim; ++d) mean[d] = float(acc[d] / double(frames.size()));
  entry.value = std::move(mean);
  return entry;
}

}  // namespace

FusedTargets aggregate_targets(const VisibilityTable& table, const SelectionResult& selection,
                               const PixelEmbedder& pixels, const CropEmbedder& crops,
                               std::span<const float> scales) {
  FusedTargets out;
  out.d_obj = pixels.dim();
  out.d_rel = crops.dim();
  for (const auto& [id, frames] : selection.objects) {
    out.nodes[id] = mean_entry(frames, out.d_obj, [&](std::size_t k) {
      return object_feature_in_frame(pixels, table.frame(k), table.at(id, k));
    });
  }
  for (const auto& [edge, frames] : selection.pairs) {
    out.edges[edge] = mean_entry(frames, out.d_rel, [&](std::size_t k) {
      const auto& bi = table.at(edge.i, k).box2d;
      const auto& bj = table.at(edge.j, k).box2d;
      if (!bi || !bj) throw DataError("selected pair frame lacks a 2D box");
      return relationship_feature_in_frame(crops, k, *bi, *bj, scales);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Targets: "O3FT", u32 version, u32 D_obj, u32 D_rel, u64 nodes, u64 edges,
// node: u32 id, u8 present, u32 n, n u32 frames, [D_obj f32]
// edge: u32 i, u32 j, u8 present, u32 n, n u32 frames, [D_rel f32]

namespace {

void write_entry(io::ByteWriter& w, const TargetEntry& e, std::uint32_t dim) {
  w.u8(e.value ? 1 : 0);
  w.u32(std::uint32_t(e.frames.size()));
  for (auto k : e.frames) w.u32(k);
  if (e.value) {
    if (e.value->size() != dim) throw DataError("target dimension mismatch");
    w.f32s(*e.value);
  }
}

TargetEntry read_entry(io::ByteReader& r, std::uint32_t dim) {
  TargetEntry e;
  const auto present = r.u8("present");
  if (present > 1) throw ParseError("present", "flag must be 0 or 1, got " + std::to_string(present));
  const auto n = r.u32("frame_count");
  r.require_records(n, 4, "frame_count");
  e.frames.resize(n);
  for (auto& k : e.frames) k = r.u32("frames");
  if (present) {
    e.value.emplace(dim);
    r.f32s(*e.value, "value");
  }
  return e;
}

}  // namespace

std::string encode_targets(const FusedTargets& t) {
  io::ByteWriter w;
  w.magic("O3FT");
  w.u32(kTargetsVersion);
  w.u32(t.d_obj);
  w.u32(t.d_rel);
  w.u64(t.nodes.size());
  w.u64(t.edges.size());
  for (const auto& [id, e] : t.nodes) {
    w.u32(id);
    write_entry(w, e, t.d_obj);
  }
  for (const auto& [edge, e] : t.edges) {
    w.u32(edge.i);
    w.u32(edge.j);
    write_entry(w, e, t.d_rel);
  }
  return w.take();
}

FusedTargets decode_targets(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("O3FT");
  r.expect_version(kTargetsVersion);
  FusedTargets t;
  t.d_obj = r.u32("D_obj");
  t.d_rel = r.u32("D_rel");
  if (t.d_obj == 0) throw ParseError("D_obj", "must be positive");
  if (t.d_rel == 0) throw ParseError("D_rel", "must be positive");
  const auto n_nodes = r.u64("node_count");
  const auto n_edges = r.u64("edge_count");
  r.require_records(n_nodes, 9, "node_count");
  for (std::uint64_t n = 0; n < n_nodes; ++n) {
    const auto id = r.u32("node.id");
    auto entry = read_entry(r, t.d_obj);
    if (!t.nodes.emplace(id, std::move(entry)).second) throw ParseError("node.id", "duplicate id");
  }
  r.require_records(n_edges, 13, "edge_count");
  for (std::uint64_t n = 0; n < n_edges; ++n) {
    Edge e{r.u32("edge.i"), 0};
    e.j = r.u32("edge.j");
    auto entry = read_entry(r, t.d_rel);
    if (!t.edges.emplace(e, std::move(entry)).second) throw ParseError("edge", "duplicate pair");
  }
  r.expect_end();
  return t;
}

FusedTargets read_targets(const std::filesystem::path& path) { return decode_targets(io::read_file(path)); }

void write_targets(const std::filesystem::path& path, const FusedTargets& targets) {
  io::write_file(path, encode_targets(targets));
}

}  // namespace o3dsg
