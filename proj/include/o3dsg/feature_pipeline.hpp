#pragma once

// 2D targets: per-frame object/relationship features pooled from embedders and
// averaged across the selected frames.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "o3dsg/frame_selection.hpp"

namespace o3dsg {

/// Dense H' x W' x D grid, row-major with D innermost.
struct EmbeddingGrid {
  std::uint32_t dim = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  std::span<const float> at(std::uint32_t row, std::uint32_t col) const {
    return {data.data() + (std::size_t(row) * width + col) * dim, dim};
  }
  /// Nearest-neighbor lookup of image pixel (x, y) for an image of size W x H.
  std::span<const float> sample(Pixel px, std::uint32_t image_width, std::uint32_t image_height) const;
};

std::string encode_pixel_embeddings(const EmbeddingGrid& grid);
EmbeddingGrid decode_pixel_embeddings(std::string_view bytes);
EmbeddingGrid read_pixel_embeddings(const std::filesystem::path& path);
void write_pixel_embeddings(const std::filesystem::path& path, const EmbeddingGrid& grid);

/// Frame k -> dense pixel embedding grid. Implementations are read-only after
/// construction and safe to call concurrently.
class PixelEmbedder {
 public:
  virtual ~PixelEmbedder() = default;
  virtual const EmbeddingGrid& grid(std::size_t frame) const = 0;
  virtual std::uint32_t dim() const = 0;
};

/// Holds one grid per frame, either in memory or loaded from O3PE files.
class GridPixelEmbedder final : public PixelEmbedder {
 public:
  explicit GridPixelEmbedder(std::vector<EmbeddingGrid> grids);
  static GridPixelEmbedder from_manifest(const SceneManifest& manifest);

  const EmbeddingGrid& grid(std::size_t frame) const override;
  std::uint32_t dim() const override { return dim_; }

 private:
  std::vector<EmbeddingGrid> grids_;
  std::uint32_t dim_ = 0;
};

/// (frame, pixel box, scale) -> embedding. Scale >= 1 expands the box about
/// its center, clamped to the image (see expand_box).
class CropEmbedder {
 public:
  virtual ~CropEmbedder() = default;
  virtual std::vector<float> embed(std::size_t frame, const Box2D& box, float scale) const = 0;
  virtual std::uint32_t dim() const = 0;
};

Box2D expand_box(const Box2D& box, double scale, std::uint32_t image_width, std::uint32_t image_height);

struct CropRecord {
  std::uint32_t frame = 0;
  Box2D box;
  float scale = 1.0f;
  std::vector<float> embedding;
};

struct CropCache {
  std::uint32_t dim = 0;
  std::vector<CropRecord> records;
};

std::string encode_crop_cache(const CropCache& cache);
CropCache decode_crop_cache(std::string_view bytes);
CropCache read_crop_cache(const std::filesystem::path& path);
void write_crop_cache(const std::filesystem::path& path, const CropCache& cache);

/// Serves precomputed crop embeddings keyed by (frame, box, scale).
class CachedCropEmbedder final : public CropEmbedder {
 public:
  explicit CachedCropEmbedder(const CropCache& cache);

  std::vector<float> embed(std::size_t frame, const Box2D& box, float scale) const override;
  std::uint32_t dim() const override { return dim_; }

 private:
  using Key = std::tuple<std::uint32_t, std::int32_t, std::int32_t, std::int32_t, std::int32_t, std::uint32_t>;
  std::map<Key, std::vector<float>> entries_;
  std::uint32_t dim_;
};

/// Wraps a callable; handy for synthetic embedders.
class FunctionCropEmbedder final : public CropEmbedder {
 public:
  using Fn = std::function<std::vector<float>(std::size_t, const Box2D&, float)>;
  FunctionCropEmbedder(std::uint32_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  std::vector<float> embed(std::size_t frame, const Box2D& box, float scale) const override {
    return fn_(frame, box, scale);
  }
  std::uint32_t dim() const override { return dim_; }

 private:
  std::uint32_t dim_;
  Fn fn_;
};

/// Mean of the embeddings at the projected pixels (double accumulation).
std::vector<float> object_feature_in_frame(const PixelEmbedder& embedder, const CameraFrame& frame,
                                           const ProjectedInstance& proj);

/// Mean over scales of the crop embedding of box_i united with box_j.
std::vector<float> relationship_feature_in_frame(const CropEmbedder& embedder, std::size_t frame,
                                                 const Box2D& box_i, const Box2D& box_j,
                                                 std::span<const float> scales);

inline const std::vector<float> kDefaultCropScales = {1.0f, 1.5f, 2.0f};

struct TargetEntry {
  std::optional<std::vector<float>> value;  // nullopt: no selected frame
  std::vector<std::uint32_t> frames;        // contributing frames, ascending
};

struct FusedTargets {
  std::uint32_t d_obj = 0;
  std::uint32_t d_rel = 0;
  std::map<InstanceId, TargetEntry> nodes;
  std::map<Edge, TargetEntry> edges;
};

/// Per-node and per-edge means over the selected frames. Contributions are
/// summed in ascending frame order regardless of selection ranking.
FusedTargets aggregate_targets(const VisibilityTable& table, const SelectionResult& selection,
                               const PixelEmbedder& pixels, const CropEmbedder& crops,
                               std::span<const float> scales = kDefaultCropScales);

std::string encode_targets(const FusedTargets& targets);
FusedTargets decode_targets(std::string_view bytes);
FusedTargets read_targets(const std::filesystem::path& path);
void write_targets(const std::filesystem::path& path, const FusedTargets& targets);

}  // namespace o3dsg
