#pragma once

// Synthetic desk-scale fixture: box-shaped furniture with known classes and
// geometric relationships, rendered from a ring of RGB-D cameras, plus oracle
// embedding files built from fixed class prototypes with Gaussian noise.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "o3dsg/scene_model.hpp"

namespace o3dsg {

struct FixtureSpec {
  std::uint64_t seed = 7;
  int train_scenes = 4;
  /// Held-out copies reuse the training layouts with freshly sampled surface
  /// points and embedding noise.
  int heldout_scenes = 4;
  double noise = 0.01;  // sigma of the per-component embedding noise
  int dim_obj = 16;
  int dim_rel = 16;
  int dim_text = 16;
  int image_size = 64;
  int cameras = 6;

  void validate() const;
  nlohmann::json to_json() const;
  static FixtureSpec from_json(const nlohmann::json& j);
};

struct FixtureObject {
  InstanceId id = 0;
  std::string label;
  Aabb box;
};

/// Relationship implied by box geometry, checked in priority order:
/// "standing on" (bottom face rests on the other's top with overlapping
/// footprints), "above" (center_z(s) > max_z(o)), then "left of" / "right of"
/// by center x.
std::string geometric_predicate(const Aabb& subject, const Aabb& object);

/// Class and predicate vocabularies used by the fixture.
const std::vector<std::string>& fixture_object_classes();     // present in scenes
const std::vector<std::string>& fixture_predicate_classes();  // the four prototypes

struct FixtureSummary {
  std::filesystem::path config;  // ready-to-run pipeline configuration
  std::vector<std::filesystem::path> train_manifests;
  std::vector<std::filesystem::path> heldout_manifests;
};

/// Writes scenes, tables, ground truth, frequency files and a pipeline
/// configuration below `out_dir`. Output is a pure function of `spec`.
FixtureSummary generate_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir);

}  // namespace o3dsg
