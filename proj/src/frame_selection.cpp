#include "o3dsg/frame_selection.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "o3dsg/errors.hpp"

namespace o3dsg {

using nlohmann::json;

void SelectionParams::validate() const {
  if (!(t_vis > 0 && t_vis < 1)) throw ConfigError("t_vis", "must lie in (0, 1)");
  if (!(t_box > 0 && t_box < 1)) throw ConfigError("t_box", "must lie in (0, 1)");
  if (!(t_occ > 0)) throw ConfigError("t_occ", "must be positive");
  if (k < 1) throw ConfigError("k_frames", "must be >= 1");
}

FrameCandidate evaluate_candidate(const ProjectedInstance& proj, const CameraFrame& frame,
                                  const SelectionParams& params) {
  FrameCandidate c;
  c.frame = proj.frame;
  c.vis = proj.vis;
  const double image_area = double(frame.width) * double(frame.height);
  c.area_fraction = proj.box2d ? double(proj.box2d->area()) / image_area : 0.0;
  c.passes = c.vis > params.t_vis || c.area_fraction > params.t_box;
  return c;
}

VisibilityTable::VisibilityTable(const ScenePointCloud& cloud, const InstanceSet& inst,
                                 const std::vector<CameraFrame>& frames, double t_occ)
    : frames_(&frames), t_occ_(t_occ) {
  for (auto id : inst.ids) {
    auto& row = table_[id];
    row.reserve(frames.size());
    for (std::size_t k = 0; k < frames.size(); ++k) {
      row.push_back(project_instance(frames[k], k, cloud, inst, id, t_occ));
    }
  }
}

const ProjectedInstance& VisibilityTable::at(InstanceId id, std::size_t frame) const {
  auto it = table_.find(id);
  if (it == table_.end()) throw DataError("unknown instance id " + std::to_string(id));
  return it->second.at(frame);
}

namespace {

struct Scored {
  double score;
  std::size_t frame;
};

std::vector<std::size_t> top_k(std::vector<Scored> scored, int k) {
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.frame < b.frame;
  });
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < scored.size() && n < std::size_t(k); ++n) out.push_back(scored[n].frame);
  return out;
}

void check_params(const VisibilityTable& table, const SelectionParams& params) {
  params.validate();
  if (params.t_occ != table.t_occ()) {
    throw DataError("visibility table was computed with a different t_occ");
  }
}

}  // namespace

std::vector<std::size_t> select_object_frames(const VisibilityTable& table, InstanceId i,
                                              const SelectionParams& params) {
  check_params(table, params);
  if (!table.contains(i)) throw DataError("unknown instance id " + std::to_string(i));
  std::vector<Scored> scored;
  for (std::size_t k = 0; k < table.frame_count(); ++k) {
    const auto c = evaluate_candidate(table.at(i, k), table.frame(k), params);
    if (c.passes) scored.push_back({c.vis, k});
  }
  return top_k(std::move(scored), params.k);
}

std::vector<std::size_t> select_pair_frames(const VisibilityTable& table, InstanceId i,
                                            InstanceId j, const SelectionParams& params) {
  check_params(table, params);
  if (i == j) throw DataError("pair selection needs two distinct instances");
  if (!table.contains(i)) throw DataError("unknown instance id " + std::to_string(i));
  if (!table.contains(j)) throw DataError("unknown instance id " + std::to_string(j));
  std::vector<Scored> scored;
  for (std::size_t k = 0; k < table.frame_count(); ++k) {
    const auto ci = evaluate_candidate(table.at(i, k), table.frame(k), params);
    const auto cj = evaluate_candidate(table.at(j, k), table.frame(k), params);
    if (ci.passes && cj.passes) scored.push_back({std::min(ci.vis, cj.vis), k});
  }
  return top_k(std::move(scored), params.k);
}

SelectionResult select_frames(const VisibilityTable& table, const SceneGraphSkeleton& skeleton,
                              const SelectionParams& params) {
  SelectionResult sel;
  for (auto id : skeleton.nodes) sel.objects[id] = select_object_frames(table, id, params);
  for (const auto& e : skeleton.edges) sel.pairs[e] = select_pair_frames(table, e.i, e.j, params);
  return sel;
}

std::string selection_to_json(const SelectionResult& sel) {
  json objects = json::object();
  for (const auto& [id, frames] : sel.objects) objects[std::to_string(id)] = frames;
  json pairs = json::object();
  for (const auto& [e, frames] : sel.pairs) {
    pairs[std::to_string(e.i) + "," + std::to_string(e.j)] = frames;
  }
  return json{{"objects", objects}, {"pairs", pairs}}.dump(2) + "\n";
}

SelectionResult selection_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("selection", e.what());
  }
  SelectionResult sel;
  try {
    for (const auto& [key, frames] : j.at("objects").items()) {
      sel.objects[static_cast<InstanceId>(std::stoul(key))] = frames.get<std::vector<std::size_t>>();
    }
    for (const auto& [key, frames] : j.at("pairs").items()) {
      const auto comma = key.find(',');
      if (comma == std::string::npos) throw ParseError("pairs", "key '" + key + "' is not \"i,j\"");
      Edge e{static_cast<InstanceId>(std::stoul(key.substr(0, comma))),
             static_cast<InstanceId>(std::stoul(key.substr(comma + 1)))};
      sel.pairs[e] = frames.get<std::vector<std::size_t>>();
    }
  } catch (const json::exception& e) {
    throw ParseError("selection", e.what());
  } catch (const std::logic_error& e) {
    throw ParseError("selection", std::string("bad id: ") + e.what());
  }
  return sel;
}

}  // namespace o3dsg
