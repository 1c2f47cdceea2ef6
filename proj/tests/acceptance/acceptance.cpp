// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "net_fixtures.hpp"
#include "o3dsg/errors.hpp"
#include "o3dsg/feature_pipeline.hpp"
#include "o3dsg/gradient_check.hpp"
#include "o3dsg/pipeline.hpp"
#include "oracles.hpp"

// httplib after Eigen: its system headers leak macros that break Eigen's products.
#include "mock_decoder.hpp"

using namespace o3dsg;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

// Collects the first few failures of a criterion for the report line.
struct Failures {
  std::size_t count = 0;
  std::string first;
  void add(const std::string& what) {
    if (count++ == 0) first = what;
  }
  bool none() const { return count == 0; }
};

// ---------------------------------------------------------------------------

Outcome projection_matches_reference() {
  const auto t0 = Clock::now();
  Failures f;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1000; seed < 1020; ++seed) {
    const auto s = oracle::random_projection_scene(seed, 500, 6);
    for (std::size_t k = 0; k < s.frames.size(); ++k) {
      for (auto id : s.inst.ids) {
        const auto got = project_instance(s.frames[k], k, s.cloud, s.inst, id, 0.1);
        const auto ref = oracle::reference_projection(s.frames[k], s.cloud, id, 0.1);
        ++checked;
        if (got.pixels != ref.pixels || got.vis != ref.vis || got.box2d != ref.box || got.total_points != ref.total)
          f.add(fmt("seed %llu frame %zu id %u", (unsigned long long)seed, k, id));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {f.none() && secs < 5.0,
          fmt("%zu instance-frames, %zu mismatches%s, %.2f s (limit 5 s)", checked, f.count,
              f.none() ? "" : (" first " + f.first).c_str(), secs)};
}

Outcome threshold_monotonicity() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Failures f;
  std::size_t occ_cases = 0, sel_cases = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = oracle::random_projection_scene(3000 + seed, 300, 6);
    // t_occ: a tighter threshold must not raise vis
    for (int trial = 0; trial < 10; ++trial, ++occ_cases) {
      const double loose = 0.01 + 1.5 * u(rng), tight = loose * (0.05 + 0.95 * u(rng));
      const auto id = s.inst.ids[rng() % s.inst.ids.size()];
      const auto k = rng() % s.frames.size();
      const double a = project_instance(s.frames[k], k, s.cloud, s.inst, id, loose).vis;
      const double b = project_instance(s.frames[k], k, s.cloud, s.inst, id, tight).vis;
      if (b > a) f.add(fmt("t_occ %.3f -> %.3f raised vis %.3f -> %.3f", loose, tight, a, b));
    }
    // t_vis / t_box: raising either must not grow the selection
    const VisibilityTable table(s.cloud, s.inst, s.frames, 0.1);
    const auto sk = build_skeleton(s.inst);
    for (int trial = 0; trial < 10; ++trial, ++sel_cases) {
      SelectionParams lo;
      lo.t_vis = 0.01 + 0.6 * u(rng);
      lo.t_box = 0.005 + 0.3 * u(rng);
      lo.k = 1 + int(rng() % 8);
      SelectionParams hi = lo;
      const int which = int(rng() % 3);
      if (which != 1) hi.t_vis = lo.t_vis + (0.99 - lo.t_vis) * u(rng);
      if (which != 0) hi.t_box = lo.t_box + (0.99 - lo.t_box) * u(rng);
      const auto a = select_frames(table, sk, lo), b = select_frames(table, sk, hi);
      const bool k_free = lo.k >= int(s.frames.size());
      auto check = [&](const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
        if (y.size() > x.size()) f.add("selection grew when raising thresholds");
        if (!k_free) return;
        auto xs = x, ys = y;
        std::sort(xs.begin(), xs.end());
        std::sort(ys.begin(), ys.end());
        if (!std::includes(xs.begin(), xs.end(), ys.begin(), ys.end())) f.add("selection gained a frame");
      };
      for (const auto& [id, fs] : a.objects) check(fs, b.objects.at(id));
      for (const auto& [e, fs] : a.pairs) check(fs, b.pairs.at(e));
    }
  }
  return {f.none() && occ_cases + sel_cases >= 1000,
          fmt("%zu t_occ cases, %zu threshold cases, %zu violations%s", occ_cases, sel_cases, f.count,
              f.none() ? "" : (": " + f.first).c_str())};
}

EmbeddingGrid random_grid(std::mt19937_64& rng, std::uint32_t dim, std::uint32_t h, std::uint32_t w) {
  EmbeddingGrid g{dim, h, w, {}};
  g.data = oracle::random_vector(rng, std::size_t(dim) * h * w);
  return g;
}

Outcome aggregation_permutation_and_hull() {
  std::mt19937_64 rng(77);
  Failures f;
  double worst = 0;
  std::size_t cases = 0;
  auto crop_fn = [](std::size_t k, const Box2D& b, float sc) {
    return std::vector<float>{float(k) * 0.37f + sc, float(b.min_x - b.max_y) * 0.01f, float(b.area()) * 1e-4f * sc,
                              std::sin(float(k) + sc)};
  };
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = oracle::random_projection_scene(5000 + seed, 300, 6);
    const VisibilityTable table(s.cloud, s.inst, s.frames, 0.1);
    std::vector<EmbeddingGrid> grids;
    for (std::size_t k = 0; k < s.frames.size(); ++k) grids.push_back(random_grid(rng, 6, 8, 8));
    const GridPixelEmbedder pixels(grids);
    const FunctionCropEmbedder crops(4, crop_fn);
    SelectionParams p;
    p.t_vis = 0.05;
    p.t_box = 0.01;
    p.k = 4;
    const auto sel = select_frames(table, build_skeleton(s.inst), p);
    const auto base = aggregate_targets(table, sel, pixels, crops);

    // hull: every target lies inside the per-component range of its frame features
    for (const auto& [id, e] : base.nodes) {
      if (!e.value) continue;
      for (std::size_t d = 0; d < e.value->size(); ++d) {
        double lo = 1e300, hi = -1e300;
        for (auto k : e.frames) {
          const double v = object_feature_in_frame(pixels, s.frames[k], table.at(id, k))[d];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const double x = (*e.value)[d];
        if (x < lo - 1e-6 || x > hi + 1e-6) f.add(fmt("node %u component %zu outside its hull", id, d));
      }
    }
    for (const auto& [edge, e] : base.edges) {
      if (!e.value) continue;
      for (std::size_t d = 0; d < e.value->size(); ++d) {
        double lo = 1e300, hi = -1e300;
        for (auto k : e.frames) {
          const double v = relationship_feature_in_frame(crops, k, *table.at(edge.i, k).box2d,
                                                         *table.at(edge.j, k).box2d, kDefaultCropScales)[d];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const double x = (*e.value)[d];
        if (x < lo - 1e-6 || x > hi + 1e-6) f.add(fmt("edge %u,%u component %zu outside its hull", edge.i, edge.j, d));
      }
    }

    for (int trial = 0; trial < 5; ++trial, ++cases) {
      // perm[new] = old
      std::vector<std::size_t> perm(s.frames.size()), inv(s.frames.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t q = 0; q < perm.size(); ++q) inv[perm[q]] = q;
      std::vector<CameraFrame> frames;
      std::vector<EmbeddingGrid> pgrids;
      for (auto old : perm) {
        frames.push_back(s.frames[old]);
        pgrids.push_back(grids[old]);
      }
      const VisibilityTable ptable(s.cloud, s.inst, frames, 0.1);
      SelectionResult psel;
      for (const auto& [id, fs] : sel.objects) {
        auto& out = psel.objects[id];
        for (auto k : fs) out.push_back(inv[k]);
      }
      for (const auto& [e, fs] : sel.pairs) {
        auto& out = psel.pairs[e];
        for (auto k : fs) out.push_back(inv[k]);
      }
      const GridPixelEmbedder ppixels(pgrids);
      const FunctionCropEmbedder pcrops(4, [&](std::size_t q, const Box2D& b, float sc) { return crop_fn(perm[q], b, sc); });
      const auto other = aggregate_targets(ptable, psel, ppixels, pcrops);

      auto compare = [&](const TargetEntry& a, const TargetEntry& b, const std::string& what) {
        if (a.value.has_value() != b.value.has_value()) return f.add(what + " presence changed");
        std::vector<std::uint32_t> mapped;
        for (auto q : b.frames) mapped.push_back(std::uint32_t(perm[q]));
        std::sort(mapped.begin(), mapped.end());
        if (mapped != a.frames) f.add(what + " contributing frames changed");
        if (!a.value) return;
        for (std::size_t d = 0; d < a.value->size(); ++d) {
          const double diff = std::abs(double((*a.value)[d]) - (*b.value)[d]);
          worst = std::max(worst, diff);
          if (diff > 1e-6) f.add(what + fmt(" differs by %.3g", diff));
        }
      };
      for (const auto& [id, e] : base.nodes) compare(e, other.nodes.at(id), fmt("node %u", id));
      for (const auto& [edge, e] : base.edges) compare(e, other.edges.at(edge), fmt("edge %u,%u", edge.i, edge.j));
    }
  }
  return {f.none() && cases >= 500, fmt("%zu permutation cases, max deviation %.3g (limit 1e-6), %zu violations%s",
                                        cases, worst, f.count, f.none() ? "" : (": " + f.first).c_str())};
}

Outcome gradient_check_desk_model() {
  const auto t0 = Clock::now();
  const GraphNet net(GraphNetConfig{});
  double worst = 0;
  std::size_t coords = 0, kinks = 0;
  std::string worst_group;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto params = net.init_params(seed);
    const auto ri = random_instance(net.config(), 100 + seed);
    GradientCheckOptions opt;
    opt.max_coords = 3;
    opt.sample_seed = seed;
    const auto report = gradient_check(net, params, ri.inputs, ri.targets, opt);
    for (const auto& g : report.groups) {
      coords += g.checked;
      kinks += g.skipped_kinks;
      if (g.rel_error > worst) {
        worst = g.rel_error;
        worst_group = g.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("%zu parameter groups x 10 seeds, %zu coordinates (%zu kinks skipped), max rel error %.3g in %s "
              "(limit 1e-4), %.1f s (limit 60 s)",
              net.param_specs().size(), coords, kinks, worst, worst_group.c_str(), secs)};
}

// Shared between criteria 5 and 6.
struct FixtureRun {
  std::unique_ptr<oracle::TempDir> dir;
  std::filesystem::path config;
  std::optional<PipelineConfig> cfg;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome fixture_training(FixtureRun& run) {
  run.dir = std::make_unique<oracle::TempDir>("acceptance-fixture");
  const auto summary = generate_fixture(FixtureSpec{}, run.dir->path());
  run.config = summary.config;
  std::ostringstream log;
  std::string ckpt[2];
  double secs[2] = {0, 0}, final_loss[2] = {0, 0};
  int epochs[2] = {0, 0};
  for (int r = 0; r < 2; ++r) {
    const std::string work = r == 0 ? "work" : "work_rerun";
    auto cfg = load_config(run.config, {"work_dir=" + work, "checkpoint=" + work + "/model.o3ck"});
    const auto t0 = Clock::now();
    cmd_select_frames(cfg, log);
    cmd_extract(cfg, log);
    const auto history = cmd_train(cfg, log);
    secs[r] = seconds_since(t0);
    final_loss[r] = history.back().mean_loss;
    epochs[r] = int(history.back().epoch);
    ckpt[r] = slurp(cfg.checkpoint);
    if (r == 0) run.cfg = cfg;
  }
  const bool identical = !ckpt[0].empty() && ckpt[0] == ckpt[1];
  const bool pass = identical && epochs[0] == 200 && final_loss[0] < 0.05 && secs[0] < 120 && secs[1] < 120;
  return {pass, fmt("%d epochs, final loss %.5f (limit 0.05), checkpoints %s (%zu bytes), %.1f s and %.1f s "
                    "(limit 120 s each)",
                    epochs[0], final_loss[0], identical ? "bit-identical" : "DIFFER", ckpt[0].size(), secs[0], secs[1])};
}

Outcome heldout_inference(FixtureRun& run) {
  if (!run.cfg) return {false, "no trained model (criterion 5 did not complete)"};
  std::ostringstream log;
  cmd_infer(*run.cfg, log);
  const auto report = cmd_eval(*run.cfg, log);
  const double obj = report["objects"]["R@1"], pred = report["predicates"]["R@1"], trip = report["triplets"]["R@1"];
  return {obj == 1.0 && pred >= 0.9 && trip >= 0.9,
          fmt("%zu held-out scenes: object R@1 %.4f (need 1.0), predicate R@1 %.4f (need 0.9), triplet R@1 %.4f "
              "(need 0.9)",
              run.cfg->eval_scenes.size(), obj, pred, trip)};
}

Outcome metrics_match_oracles() {
  Failures f;
  std::size_t graphs = 0, comparisons = 0;
  for (std::uint64_t seed = 9000; graphs < 100; ++seed) {
    const auto g = oracle::random_graph(seed);
    if (g.predicates.empty()) continue;
    ++graphs;
    auto same = [&](double a, double b, const char* what, std::size_t k) {
      ++comparisons;
      if (a != b) f.add(fmt("%s@%zu seed %llu: %.17g vs %.17g", what, k, (unsigned long long)seed, a, b));
    };
    for (std::size_t k : {1u, 2u, 3u, 5u, 10u}) {
      same(recall_at_k(g.objects, k), oracle::reference_recall(g.objects, k), "object R", k);
      same(recall_at_k(g.predicates, k), oracle::reference_recall(g.predicates, k), "predicate R", k);
      const auto opc = per_class_recall(g.objects, k), ppc = per_class_recall(g.predicates, k);
      const auto ropc = oracle::reference_per_class(g.objects, k), rppc = oracle::reference_per_class(g.predicates, k);
      ++comparisons;
      if (opc != ropc || ppc != rppc) f.add(fmt("per-class recall seed %llu", (unsigned long long)seed));
      same(mean_recall_at_k(opc), oracle::reference_mean(ropc), "object mR", k);
      same(mean_recall_at_k(ppc), oracle::reference_mean(rppc), "predicate mR", k);

      const auto rep = split_report(opc, split_from_frequencies(g.object_counts));
      const auto ref = oracle::reference_split_report(ropc, oracle::reference_terciles(g.object_counts));
      ++comparisons;
      if (rep.head != ref.bucket[0] || rep.body != ref.bucket[1] || rep.tail != ref.bucket[2])
        f.add(fmt("split_report seed %llu", (unsigned long long)seed));
    }
    for (std::size_t k : {1u, 10u, 50u, 100u})
      same(triplet_recall_at_k(g.triplets, k), oracle::reference_triplet_recall(g.triplets, k), "triplet R", k);
  }
  return {f.none(), fmt("%zu graphs, %zu exact comparisons, %zu mismatches%s", graphs, comparisons, f.count,
                        f.none() ? "" : (": " + f.first).c_str())};
}

Outcome invariance_suite() {
  using namespace support;
  Failures f;
  const GraphNet net(GraphNetConfig{});
  std::mt19937_64 rng(31);
  std::size_t checks = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto params = net.init_params(seed + 40);
    const std::vector<InstanceId> ids{0, 1, 2, 3}, relabeled{42, 7, 19, 3};
    const auto cloud = blob_cloud(seed, ids);
    const auto in = inputs_for(cloud, net.config());
    const auto base = predict(net, params, in);

    // point permutation
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    ScenePointCloud shuffled, twice = cloud;
    for (auto p : order) {
      shuffled.points.push_back(cloud.points[p]);
      shuffled.colors.push_back(cloud.colors[p]);
      shuffled.instance_ids.push_back(cloud.instance_ids[p]);
    }
    twice.points.insert(twice.points.end(), cloud.points.begin(), cloud.points.end());
    twice.colors.insert(twice.colors.end(), cloud.colors.begin(), cloud.colors.end());
    twice.instance_ids.insert(twice.instance_ids.end(), cloud.instance_ids.begin(), cloud.instance_ids.end());
    for (const auto* variant : {&shuffled, &twice}) {
      const auto out = predict(net, params, inputs_for(*variant, net.config()));
      const char* what = variant == &shuffled ? "point permutation" : "point duplication";
      for (int r = 0; r < base.nodes.rows; ++r, ++checks)
        if (!close_rows(out.nodes.row(r), base.nodes.row(r), 1e-6)) f.add(what + std::string(" changed a node"));
      for (int r = 0; r < base.edges.rows; ++r, ++checks)
        if (!close_rows(out.edges.row(r), base.edges.row(r), 1e-6)) f.add(what + std::string(" changed an edge"));
    }

    // node relabeling
    const auto rin = inputs_for(blob_cloud(seed, relabeled), net.config());
    const auto rel = predict(net, params, rin);
    for (std::size_t k = 0; k < ids.size(); ++k, ++checks) {
      const auto ra = std::find(in.nodes.begin(), in.nodes.end(), ids[k]) - in.nodes.begin();
      const auto rb = std::find(rin.nodes.begin(), rin.nodes.end(), relabeled[k]) - rin.nodes.begin();
      if (!close_rows(base.nodes.row(int(ra)), rel.nodes.row(int(rb)), 1e-6)) f.add("relabeling changed a node");
    }
    for (std::size_t e = 0; e < in.edges.size(); ++e, ++checks) {
      const Edge mapped{relabeled[in.edges[e].i], relabeled[in.edges[e].j]};
      const auto eb = std::find(rin.edges.begin(), rin.edges.end(), mapped) - rin.edges.begin();
      if (eb == std::ptrdiff_t(rin.edges.size()) || !close_rows(base.edges.row(int(e)), rel.edges.row(int(eb)), 1e-6))
        f.add("relabeling changed an edge");
    }
  }

  // cosine scale invariance of the loss and of label ranking
  std::uniform_real_distribution<float> scale(0.01f, 100.0f);
  for (int trial = 0; trial < 100; ++trial, ++checks) {
    Tensor<float> np(3, 8), ep(2, 8), nt(3, 8), et(2, 8);
    for (auto* t : {&np, &ep, &nt, &et}) t->data = oracle::random_vector(rng, t->size());
    const double before = loss_of(np, ep, targets_of(nt, et));
    EmbeddingTable table{"object-text", 8, {}, {}};
    for (int c = 0; c < 6; ++c) table.add("c" + std::to_string(c), oracle::random_vector(rng, 8));
    std::vector<std::string> rank_before;
    for (const auto& s : rank_by_cosine(np.row(0), table)) rank_before.push_back(s.label);
    for (auto* t : {&np, &ep, &nt, &et}) {
      const float s = scale(rng);
      for (auto& v : t->data) v *= s;
    }
    if (std::abs(loss_of(np, ep, targets_of(nt, et)) - before) > 1e-6) f.add("rescaling changed the loss");
    std::vector<std::string> rank_after;
    for (const auto& s : rank_by_cosine(np.row(0), table)) rank_after.push_back(s.label);
    if (rank_after != rank_before) f.add("rescaling changed a ranking");
  }
  return {f.none(), fmt("%zu checks over permutation, duplication, relabeling and rescaling, %zu violations%s", checks,
                        f.count, f.none() ? "" : (": " + f.first).c_str())};
}

Outcome http_decoder_behaviour() {
  using oracle::MockDecoderServer;
  Failures f;
  const DecodeRequest req{{0.1f, 0.2f}, "lamp", "table", render_prompt("lamp", "table")};
  {
    MockDecoderServer ok([](const nlohmann::json& r, httplib::Response& res) {
      MockDecoderServer::reply_phrase(res, "mounted on", r);
    });
    const auto phrase = HttpDecoder({ok.endpoint(), 2.0, 1}).decode(req);
    if (phrase != "mounted on") f.add("200 reply returned \"" + phrase + "\"");
  }
  auto kind_of = [&](const MockDecoderServer& srv, double timeout) -> std::string {
    try {
      HttpDecoder({srv.endpoint(), timeout, 1}).decode(req);
      return "none";
    } catch (const DecoderTimeoutError&) {
      return "timeout";
    } catch (const DecoderMalformedResponseError&) {
      return "malformed";
    } catch (const DecoderError&) {
      return "other";
    }
  };
  {
    MockDecoderServer slow([](const nlohmann::json& r, httplib::Response& res) {
      MockDecoderServer::sleep_for(1.0);
      MockDecoderServer::reply_phrase(res, "late", r);
    });
    if (const auto k = kind_of(slow, 0.2); k != "timeout") f.add("slow server raised " + k);
  }
  {
    MockDecoderServer bad([](const nlohmann::json&, httplib::Response& res) { res.set_content("<html>", "text/html"); });
    if (const auto k = kind_of(bad, 2.0); k != "malformed") f.add("malformed body raised " + k);
  }
  int peak = 0;
  const int bound = 3;
  {
    MockDecoderServer busy([](const nlohmann::json& r, httplib::Response& res) {
      MockDecoderServer::sleep_for(0.05);
      MockDecoderServer::reply_phrase(res, "beside", r);
    });
    const std::vector<DecodeRequest> batch(16, req);
    const auto out = HttpDecoder({busy.endpoint(), 5.0, bound}).decode_batch(batch);
    for (const auto& o : out)
      if (o.phrase != "beside") f.add("batch item failed: " + o.error);
    peak = busy.max_in_flight();
    if (peak > bound) f.add(fmt("observed %d concurrent requests", peak));
  }
  return {f.none(), fmt("verbatim phrase, timeout and malformed types distinct, peak %d in flight (bound %d)%s", peak,
                        bound, f.none() ? "" : ("; " + f.first).c_str())};
}

// ---------------------------------------------------------------------------

void put_u32(std::string& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + std::size_t(i)] = char((v >> (8 * i)) & 0xFF);
}
void put_u64(std::string& b, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[at + std::size_t(i)] = char((v >> (8 * i)) & 0xFF);
}

struct Format {
  std::string name;
  std::function<std::string(std::mt19937_64&)> make;      // random valid bytes
  std::function<std::string(const std::string&)> cycle;  // decode then encode
  std::function<void(const std::string&)> parse;
  // header corruptions: (mutator, expected field)
  std::vector<std::pair<std::function<void(std::string&)>, std::string>> corruptions;
};

std::vector<Format> formats() {
  std::vector<Format> out;
  out.push_back({"O3PC",
                 [](std::mt19937_64& rng) {
                   ScenePointCloud c;
                   const auto n = 1 + rng() % 50;
                   for (std::size_t p = 0; p < n; ++p) {
                     const auto v = oracle::random_vector(rng, 3);
                     c.points.push_back({v[0], v[1], v[2]});
                     c.colors.push_back({std::uint8_t(rng()), std::uint8_t(rng()), std::uint8_t(rng())});
                     c.instance_ids.push_back(std::uint32_t(rng() % 7));
                   }
                   return encode_cloud(c);
                 },
                 [](const std::string& b) { return encode_cloud(decode_cloud(b)); },
                 [](const std::string& b) { decode_cloud(b); },
                 {{[](std::string& b) { put_u64(b, 8, 0); }, "count"},
                  {[](std::string& b) { put_u64(b, 8, 1ull << 40); }, "count"}}});
  out.push_back({"O3DP",
                 [](std::mt19937_64& rng) {
                   DepthMap d;
                   d.height = 1 + std::uint32_t(rng() % 9);
                   d.width = 1 + std::uint32_t(rng() % 9);
                   d.meters = oracle::random_vector(rng, std::size_t(d.height) * d.width);
                   return encode_depth(d);
                 },
                 [](const std::string& b) { return encode_depth(decode_depth(b)); },
                 [](const std::string& b) { decode_depth(b); },
                 {{[](std::string& b) { put_u32(b, 8, 0); }, "H"},
                  {[](std::string& b) { put_u32(b, 12, 0); }, "W"}}});
  out.push_back({"O3PE",
                 [](std::mt19937_64& rng) {
                   EmbeddingGrid g{1 + std::uint32_t(rng() % 5), 1 + std::uint32_t(rng() % 5),
                                   1 + std::uint32_t(rng() % 5), {}};
                   g.data = oracle::random_vector(rng, std::size_t(g.dim) * g.height * g.width);
                   return encode_pixel_embeddings(g);
                 },
                 [](const std::string& b) { return encode_pixel_embeddings(decode_pixel_embeddings(b)); },
                 [](const std::string& b) { decode_pixel_embeddings(b); },
                 {{[](std::string& b) { put_u32(b, 8, 0); }, "D"},
                  {[](std::string& b) { put_u32(b, 12, 0); }, "H'"},
                  {[](std::string& b) { put_u32(b, 16, 0); }, "W'"}}});
  out.push_back({"O3CE",
                 [](std::mt19937_64& rng) {
                   CropCache c{1 + std::uint32_t(rng() % 4), {}};
                   const auto n = rng() % 6;
                   for (std::size_t r = 0; r < n; ++r) {
                     const int x = int(rng() % 20), y = int(rng() % 20);
                     c.records.push_back({std::uint32_t(rng() % 6), Box2D{x, y, x + int(rng() % 9), y + int(rng() % 9)},
                                          1.0f + 0.5f * float(r), oracle::random_vector(rng, c.dim)});
                   }
                   return encode_crop_cache(c);
                 },
                 [](const std::string& b) { return encode_crop_cache(decode_crop_cache(b)); },
                 [](const std::string& b) { decode_crop_cache(b); },
                 {{[](std::string& b) { put_u32(b, 8, 0); }, "D"},
                  {[](std::string& b) { put_u64(b, 12, 1ull << 40); }, "count"}}});
  out.push_back({"O3FT",
                 [](std::mt19937_64& rng) {
                   FusedTargets t;
                   t.d_obj = 1 + std::uint32_t(rng() % 4);
                   t.d_rel = 1 + std::uint32_t(rng() % 4);
                   for (InstanceId id = 0; id < 4; ++id) {
                     TargetEntry e;
                     if (rng() % 3) {
                       e.value = oracle::random_vector(rng, t.d_obj);
                       e.frames = {0, std::uint32_t(1 + rng() % 5)};
                     }
                     t.nodes[id * 5 + 1] = e;
                   }
                   for (int k = 0; k < 3; ++k) {
                     TargetEntry e;
                     if (rng() % 3) {
                       e.value = oracle::random_vector(rng, t.d_rel);
                       e.frames = {std::uint32_t(k)};
                     }
                     t.edges[{1, std::uint32_t(6 + 5 * k)}] = e;
                   }
                   return encode_targets(t);
                 },
                 [](const std::string& b) { return encode_targets(decode_targets(b)); },
                 [](const std::string& b) { decode_targets(b); },
                 {{[](std::string& b) { put_u32(b, 8, 0); }, "D_obj"},
                  {[](std::string& b) { put_u32(b, 12, 0); }, "D_rel"},
                  {[](std::string& b) { b[36] = 7; }, "present"}}});
  out.push_back({"O3ET",
                 [](std::mt19937_64& rng) {
                   EmbeddingTable t{"object-text", 1 + std::uint32_t(rng() % 6), {}, {}};
                   const auto n = 1 + rng() % 8;
                   for (std::size_t k = 0; k < n; ++k) t.add("label " + std::to_string(k), oracle::random_vector(rng, t.dim));
                   return encode_table(t);
                 },
                 [](const std::string& b) { return encode_table(decode_table(b)); },
                 [](const std::string& b) { decode_table(b); },
                 {{[](std::string& b) { b[8] = char(0xFF), b[9] = char(0xFF); }, "space"},
                  {[](std::string& b) { put_u64(b, 8 + 2 + 11 + 4, 0); }, "count"}}});
  out.push_back({"O3CK",
                 [](std::mt19937_64& rng) {
                   GraphNetConfig m;
                   m.feature_width = 8;
                   m.hidden = 8;
                   m.encoder_widths = {4};
                   m.gnn_layers = 1 + int(rng() % 2);
                   m.node_head_layers = 1;
                   m.node_head_width = 8;
                   m.edge_tokens = 2;
                   m.edge_token_width = 4;
                   m.edge_head_blocks = 1;
                   m.d_obj = 4;
                   m.d_rel = 4;
                   TrainConfig tc;
                   tc.seed = rng();
                   auto s = init_train_state(m, tc);
                   for (auto& t : s.first_moment)
                     for (auto& v : t.data) v = float(oracle::random_vector(rng, 1)[0]);
                   s.step = rng() % 1000;
                   s.epoch = std::uint32_t(rng() % 100);
                   return encode_checkpoint(s);
                 },
                 [](const std::string& b) { return encode_checkpoint(decode_checkpoint(b)); },
                 [](const std::string& b) { decode_checkpoint(b); },
                 {{[](std::string& b) { put_u32(b, 8, 0xFFFFFFF0u); }, "config"},
                  {[](std::string& b) { b[12] = '#'; }, "config"}}});
  return out;
}

Outcome binary_formats() {
  std::mt19937_64 rng(10);
  Failures f;
  std::size_t roundtrips = 0, corruptions = 0;
  auto expect_field = [&](const Format& fmt_, const std::string& bytes, const std::string& field, const char* what) {
    ++corruptions;
    try {
      fmt_.parse(bytes);
      f.add(fmt_.name + " accepted " + what);
    } catch (const ParseError& e) {
      if (e.field() != field) f.add(fmt_.name + " " + what + " blamed '" + e.field() + "', expected '" + field + "'");
    } catch (const std::exception& e) {
      f.add(fmt_.name + " " + what + " threw a non-parse error: " + e.what());
    }
  };
  for (const auto& fm : formats()) {
    for (int trial = 0; trial < 25; ++trial) {
      const auto bytes = fm.make(rng);
      ++roundtrips;
      if (fm.cycle(bytes) != bytes) f.add(fm.name + " round-trip changed bytes");
      auto b = bytes;
      b[rng() % 4] ^= 0x20;
      expect_field(fm, b, "magic", "a bad magic");
      b = bytes;
      put_u32(b, 4, 2 + std::uint32_t(rng() % 100));
      expect_field(fm, b, "version", "a bad version");
      expect_field(fm, bytes.substr(0, 4 + rng() % 4), "version", "a cut version");
      for (const auto& [mutate, field] : fm.corruptions) {
        b = bytes;
        mutate(b);
        expect_field(fm, b, field, ("a corrupt " + field).c_str());
      }
      b = bytes + "x";
      expect_field(fm, b, "trailing", "trailing bytes");
    }
  }
  return {f.none(), fmt("7 formats, %zu byte-identical round-trips, %zu corrupted inputs, %zu failures%s", roundtrips,
                        corruptions, f.count, f.none() ? "" : (": " + f.first).c_str())};
}

}  // namespace

int main() {
  FixtureRun run;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"project_instance equals brute force", projection_matches_reference},
      {"threshold monotonicity properties", threshold_monotonicity},
      {"aggregation permutation invariance and hull bound", aggregation_permutation_and_hull},
      {"gradient check of the desk-scale model", gradient_check_desk_model},
      {"fixture training and reproducible checkpoints", [&] { return fixture_training(run); }},
      {"held-out inference and evaluation", [&] { return heldout_inference(run); }},
      {"metrics equal brute-force oracles", metrics_match_oracles},
      {"invariance suite", invariance_suite},
      {"HTTP decoder behaviour against a mock", http_decoder_behaviour},
      {"binary formats round-trip and report corrupt fields", binary_formats},
  };
  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (c + 1) << ": " << criteria[c].first << " ("
              << o.detail << ")" << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
