#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "o3dsg/frame_selection.hpp"
#include "oracles.hpp"

using namespace o3dsg;

namespace {

// Two instances of ten points each: id 0 on the row v = 64, id 1 on v = 89.
ScenePointCloud two_rows() {
  ScenePointCloud c;
  for (InstanceId id : {0u, 1u}) {
    for (int p = 0; p < 10; ++p) {
      c.points.push_back({float(p) * 0.1f, 0.5f * float(id), 2.0f});
      c.colors.push_back({});
      c.instance_ids.push_back(id);
    }
  }
  return c;
}

// Frame in which the first `visible[id]` points of each instance pass.
CameraFrame frame_with(const ScenePointCloud& c, std::array<int, 2> visible) {
  CameraFrame f;
  f.width = f.height = 128;
  f.intrinsics << 100, 0, 64, 0, 100, 64, 0, 0, 1;
  f.extrinsics.setZero();
  f.extrinsics.leftCols<3>().setIdentity();
  f.depth.width = f.depth.height = 128;
  f.depth.meters.assign(128 * 128, 2.0f);
  int seen[2] = {0, 0};
  for (std::size_t p = 0; p < c.size(); ++p) {
    const auto id = c.instance_ids[p];
    if (seen[id]++ < visible[id]) continue;
    const auto uvw = project_point(f, {c.points[p].x, c.points[p].y, c.points[p].z});
    const auto x = std::size_t(std::floor(uvw.x() / uvw.z())), y = std::size_t(std::floor(uvw.y() / uvw.z()));
    f.depth.meters[y * 128 + x] = 0.0f;
  }
  return f;
}

SelectionParams strict_area() {
  SelectionParams p;
  p.t_box = 0.9;  // tiny boxes in these scenes, so only vis matters
  return p;
}

}  // namespace

TEST_CASE("candidate passes on either criterion") {
  CameraFrame f;
  f.width = f.height = 10;
  ProjectedInstance proj;
  proj.vis = 0.5;
  proj.box2d = Box2D{0, 0, 0, 0};
  SelectionParams p;
  CHECK(evaluate_candidate(proj, f, p).passes);

  proj.vis = 0.05;
  proj.box2d = Box2D{0, 0, 9, 5};  // 60 of 100 pixels
  const auto c = evaluate_candidate(proj, f, p);
  CHECK(c.area_fraction == doctest::Approx(0.6));
  CHECK(c.passes);

  proj.box2d = Box2D{0, 0, 1, 1};
  CHECK_FALSE(evaluate_candidate(proj, f, p).passes);
}

TEST_CASE("object frames are ranked by vis with frame-index tie-break") {
  const auto c = two_rows();
  const auto inst = InstanceSet::from_cloud(c);
  const std::vector<CameraFrame> frames{frame_with(c, {4, 0}), frame_with(c, {9, 0}), frame_with(c, {9, 0}),
                                        frame_with(c, {2, 0})};
  const VisibilityTable table(c, inst, frames, 0.1);
  auto p = strict_area();
  p.k = 2;
  CHECK(select_object_frames(table, 0, p) == std::vector<std::size_t>{1, 2});
  p.k = 5;
  CHECK(select_object_frames(table, 0, p) == std::vector<std::size_t>{1, 2, 0});
  CHECK(select_object_frames(table, 1, p).empty());
  CHECK_THROWS_AS(select_object_frames(table, 9, p), DataError);
}

TEST_CASE("pair frames need both instances and rank by the weaker one") {
  const auto c = two_rows();
  const auto inst = InstanceSet::from_cloud(c);
  const std::vector<CameraFrame> frames{frame_with(c, {8, 6}), frame_with(c, {7, 7}), frame_with(c, {10, 0})};
  const VisibilityTable table(c, inst, frames, 0.1);
  const auto p = strict_area();
  CHECK(select_pair_frames(table, 0, 1, p) == std::vector<std::size_t>{1, 0});
  CHECK(select_pair_frames(table, 1, 0, p) == std::vector<std::size_t>{1, 0});
  CHECK(select_object_frames(table, 0, p) == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("parameters are validated") {
  const auto c = two_rows();
  const auto inst = InstanceSet::from_cloud(c);
  const std::vector<CameraFrame> frames{frame_with(c, {5, 5})};
  const VisibilityTable table(c, inst, frames, 0.1);
  SelectionParams p;
  p.t_vis = 1.2;
  CHECK_THROWS_AS(select_object_frames(table, 0, p), ConfigError);
  p = SelectionParams{};
  p.k = 0;
  CHECK_THROWS_AS(select_object_frames(table, 0, p), ConfigError);
  p = SelectionParams{};
  p.t_occ = 0.2;  // table was built with 0.1
  CHECK_THROWS_AS(select_object_frames(table, 0, p), DataError);
}

TEST_CASE("selection equals exhaustive enumeration on random scenes") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto s = oracle::random_projection_scene(seed, 300, 6);
    const VisibilityTable table(s.cloud, s.inst, s.frames, 0.1);
    SelectionParams p;
    p.t_vis = 0.2;
    p.t_box = 0.05;
    p.k = 3;
    const auto sk = build_skeleton(s.inst);
    const auto sel = select_frames(table, sk, p);

    std::map<InstanceId, std::vector<double>> vis;
    std::map<InstanceId, std::vector<bool>> pass;
    for (auto id : s.inst.ids) {
      for (const auto& f : s.frames) {
        const auto r = oracle::reference_projection(f, s.cloud, id, 0.1);
        const double area = r.box ? double(r.box->max_x - r.box->min_x + 1) * (r.box->max_y - r.box->min_y + 1) : 0;
        vis[id].push_back(r.vis);
        pass[id].push_back(r.vis > 0.2 || area / (double(f.width) * f.height) > 0.05);
      }
    }
    auto best = [&](auto score, auto ok) {
      std::vector<std::size_t> idx;
      for (std::size_t k = 0; k < s.frames.size(); ++k)
        if (ok(k)) idx.push_back(k);
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return score(a) > score(b); });
      if (idx.size() > 3) idx.resize(3);
      return idx;
    };
    for (auto id : s.inst.ids) {
      CHECK(sel.objects.at(id) ==
            best([&](std::size_t k) { return vis[id][k]; }, [&](std::size_t k) { return bool(pass[id][k]); }));
    }
    for (const auto& e : sk.edges) {
      CHECK(sel.pairs.at(e) == best([&](std::size_t k) { return std::min(vis[e.i][k], vis[e.j][k]); },
                                    [&](std::size_t k) { return pass[e.i][k] && pass[e.j][k]; }));
    }
  }
}

TEST_CASE("raising thresholds never grows the selection") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = oracle::random_projection_scene(500 + seed, 200, 6);
    const VisibilityTable table(s.cloud, s.inst, s.frames, 0.1);
    for (int trial = 0; trial < 10; ++trial) {
      SelectionParams lo;
      lo.t_vis = u(rng) * 0.5;
      lo.t_box = u(rng) * 0.3;
      lo.k = int(s.frames.size());  // cap not binding: subset relation must hold
      SelectionParams hi = lo;
      hi.t_vis = lo.t_vis + (0.99 - lo.t_vis) * u(rng);
      hi.t_box = lo.t_box + (0.99 - lo.t_box) * u(rng);
      for (auto id : s.inst.ids) {
        auto a = select_object_frames(table, id, lo), b = select_object_frames(table, id, hi);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(std::includes(a.begin(), a.end(), b.begin(), b.end()));
      }
    }
  }
}

TEST_CASE("selection is deterministic and survives its JSON form") {
  const auto s = oracle::random_projection_scene(77, 400, 6);
  const VisibilityTable table(s.cloud, s.inst, s.frames, 0.1);
  SelectionParams p;
  p.t_vis = 0.1;
  const auto sk = build_skeleton(s.inst);
  const auto a = select_frames(table, sk, p), b = select_frames(table, sk, p);
  CHECK(a.objects == b.objects);
  CHECK(a.pairs == b.pairs);
  const auto text = selection_to_json(a);
  const auto c = selection_from_json(text);
  CHECK(c.objects == a.objects);
  CHECK(c.pairs == a.pairs);
  CHECK(selection_to_json(c) == text);
  for (const auto& [id, fs] : a.objects)
    for (auto k : fs) CHECK(k < s.frames.size());
}
