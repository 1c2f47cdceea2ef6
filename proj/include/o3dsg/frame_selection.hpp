#pragma once

// Top-k frame selection per object and per ordered object pair.

#include <map>
#include <string>
#include <vector>

#include "o3dsg/projection.hpp"

namespace o3dsg {

struct SelectionParams {
  double t_vis = 0.3;
  double t_box = 0.2;  // fraction of the image area
  double t_occ = kDefaultOcclusionThreshold;
  int k = 5;

  void validate() const;
};

struct FrameCandidate {
  std::size_t frame = 0;
  double vis = 0.0;
  double area_fraction = 0.0;
  bool passes = false;
};

/// passes <=> vis > t_vis or area(box2d) / (W*H) > t_box.
FrameCandidate evaluate_candidate(const ProjectedInstance& proj, const CameraFrame& frame,
                                  const SelectionParams& params);

/// Projections of every instance into every frame, computed once per scene.
class VisibilityTable {
 public:
  VisibilityTable(const ScenePointCloud& cloud, const InstanceSet& inst,
                  const std::vector<CameraFrame>& frames, double t_occ);

  const ProjectedInstance& at(InstanceId id, std::size_t frame) const;
  std::size_t frame_count() const noexcept { return frames_->size(); }
  const CameraFrame& frame(std::size_t k) const { return (*frames_)[k]; }
  bool contains(InstanceId id) const { return table_.count(id) != 0; }
  double t_occ() const noexcept { return t_occ_; }

 private:
  const std::vector<CameraFrame>* frames_;
  std::map<InstanceId, std::vector<ProjectedInstance>> table_;
  double t_occ_;
};

/// Passing frames sorted by vis descending, then frame index ascending; at most k.
std::vector<std::size_t> select_object_frames(const VisibilityTable& table, InstanceId i,
                                              const SelectionParams& params);

/// Frames where both instances pass; scored by min(vis_i, vis_j).
std::vector<std::size_t> select_pair_frames(const VisibilityTable& table, InstanceId i,
                                            InstanceId j, const SelectionParams& params);

struct SelectionResult {
  std::map<InstanceId, std::vector<std::size_t>> objects;
  std::map<Edge, std::vector<std::size_t>> pairs;
};

SelectionResult select_frames(const VisibilityTable& table, const SceneGraphSkeleton& skeleton,
                              const SelectionParams& params);

/// {objects: {"id": [k...]}, pairs: {"i,j": [k...]}}
std::string selection_to_json(const SelectionResult& sel);
SelectionResult selection_from_json(std::string_view text);

}  // namespace o3dsg
