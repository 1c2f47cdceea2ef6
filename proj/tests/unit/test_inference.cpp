#include <doctest.h>

#include <algorithm>
#include <random>

#include "o3dsg/fixture.hpp"
#include "o3dsg/inference.hpp"
#include "oracles.hpp"

using namespace o3dsg;

namespace {

EmbeddingTable random_table(std::mt19937_64& rng, std::size_t n, std::uint32_t dim, const std::string& prefix = "c") {
  EmbeddingTable t{"object-text", dim, {}, {}};
  for (std::size_t k = 0; k < n; ++k) t.add(prefix + std::to_string(k), oracle::random_vector(rng, dim));
  return t;
}

std::vector<ScoredLabel> reference_ranking(const std::vector<float>& f, const EmbeddingTable& t) {
  std::vector<ScoredLabel> r;
  for (std::size_t k = 0; k < t.size(); ++k) r.push_back({t.labels[k], oracle::reference_cosine(f, t.vectors[k])});
  std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.label < b.label;
  });
  return r;
}

void check_same_ranking(const std::vector<ScoredLabel>& got, const std::vector<ScoredLabel>& ref) {
  REQUIRE(got.size() == ref.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    CHECK(got[k].label == ref[k].label);
    CHECK(got[k].score == doctest::Approx(ref[k].score).epsilon(1e-12));
  }
}

EmbeddingTable unit_table(const std::vector<std::string>& labels, std::string space = "object-text") {
  EmbeddingTable t{std::move(space), std::uint32_t(labels.size()), {}, {}};
  for (std::size_t k = 0; k < labels.size(); ++k) {
    std::vector<float> v(labels.size(), 0.0f);
    v[k] = 1.0f;
    t.add(labels[k], v);
  }
  return t;
}

class FailingDecoder final : public RelationshipDecoder {
 public:
  std::string decode(const DecodeRequest& r) const override {
    if (r.subject == "b") throw DecoderTimeoutError("slow");
    return "x";
  }
};

}  // namespace

TEST_CASE("fusion averages or passes the 3D feature through") {
  const std::vector<float> v{1, -2, 3}, w{3, 0, -1};
  CHECK(fuse(v, v) == v);
  CHECK(fuse(std::nullopt, w) == w);
  CHECK(fuse(v, w) == std::vector<float>{2, -1, 1});
  CHECK_THROWS_AS(fuse(std::vector<float>{1, 2}, w), DataError);
}

TEST_CASE("classification of an exact table entry") {
  std::mt19937_64 rng(1);
  auto t = random_table(rng, 6, 16);
  t.labels[2] = "chair";
  const auto r = classify_node(t.vectors[2], t);
  CHECK(r.front().label == "chair");
  CHECK(r.front().score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.size() == 6);
  CHECK(classify_node(t.vectors[2], t, 2).size() == 2);
}

TEST_CASE("ranking is invariant to positive scaling of feature and entries") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = random_table(rng, 10, 16);
    auto f = oracle::random_vector(rng, 16);
    auto labels = [](const std::vector<ScoredLabel>& r) {
      std::vector<std::string> out;
      for (const auto& s : r) out.push_back(s.label);
      return out;
    };
    const auto base = labels(rank_by_cosine(f, t));
    for (auto& x : f) x *= 5.0f;
    for (auto& v : t.vectors) {
      const float s = std::uniform_real_distribution<float>(0.1f, 10.0f)(rng);
      for (auto& x : v) x *= s;
    }
    CHECK(labels(rank_by_cosine(f, t)) == base);
  }
}

TEST_CASE("ranking equals a brute-force cosine sort") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_table(rng, 10, 16);
    const auto f = oracle::random_vector(rng, 16);
    check_same_ranking(rank_by_cosine(f, t), reference_ranking(f, t));
    const auto top3 = rank_by_cosine(f, t, 3);
    CHECK(top3.size() == 3);
    CHECK(top3[0] == rank_by_cosine(f, t)[0]);
  }
}

TEST_CASE("ties break by label and degenerate features are unclassifiable") {
  EmbeddingTable t{"s", 2, {}, {}};
  t.add("zeta", {1, 0});
  t.add("alpha", {2, 0});
  t.add("mid", {0, 1});
  const auto r = rank_by_cosine(std::vector<float>{1, 0}, t);
  CHECK(r[0].label == "alpha");
  CHECK(r[1].label == "zeta");
  CHECK_THROWS_AS(rank_by_cosine(std::vector<float>{0, 0}, t), UnclassifiableError);
  CHECK_THROWS_AS(rank_by_cosine(std::vector<float>{1, 0, 0}, t), DataError);
}

TEST_CASE("attribute queries mirror classification") {
  std::mt19937_64 rng(4);
  auto materials = random_table(rng, 5, 8, "m");
  materials.space = "attribute-text";
  materials.labels[0] = "wood";
  CHECK(query_attribute(materials.vectors[0], materials).front().label == "wood");
  auto f = materials.vectors[0];
  for (auto& x : f) x *= 5;
  CHECK(query_attribute(f, materials).front().label == "wood");
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = oracle::random_vector(rng, 8);
    check_same_ranking(query_attribute(g, materials), reference_ranking(g, materials));
  }
}

TEST_CASE("nearest-neighbor decoder returns the closest predicate label") {
  std::mt19937_64 rng(5);
  auto preds = random_table(rng, 8, 16, "p");
  preds.labels[3] = "standing on";
  const NearestNeighborDecoder dec(preds);
  CHECK(dec.decode({preds.vectors[3], "lamp", "table", ""}) == "standing on");
  for (int trial = 0; trial < 50; ++trial) {
    const auto f = oracle::random_vector(rng, 16);
    CHECK(dec.decode({f, "a", "b", ""}) == reference_ranking(f, preds).front().label);
  }
}

TEST_CASE("decoding then mapping with an identity lookup is idempotent on labels") {
  const auto preds = unit_table({"above", "left of", "right of", "standing on"}, "predicate-text");
  const NearestNeighborDecoder dec(preds);
  const TableTextEmbedder text({preds});
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const auto phrase = dec.decode({preds.vectors[k], "a", "b", ""});
    CHECK(phrase == preds.labels[k]);
    CHECK(map_to_label_set(phrase, preds, text, 1).front().label == phrase);
  }
}

TEST_CASE("label mapping ranks the lookup set for a phrase") {
  const auto lookup = unit_table({"above", "below", "on"}, "lookup-text");
  const TableTextEmbedder text({lookup});
  CHECK(map_to_label_set("below", lookup, text, 1).front().label == "below");
  const auto all = map_to_label_set("on", lookup, text, lookup.size());
  std::vector<std::string> seen;
  for (const auto& s : all) seen.push_back(s.label);
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<std::string>{"above", "below", "on"});
  CHECK_THROWS_AS(map_to_label_set("mounted on", lookup, text), EmbedderError);
}

TEST_CASE("fixture text tables map a synonym to its predicate") {
  oracle::TempDir dir("tables");
  FixtureSpec spec;
  spec.train_scenes = 1;
  spec.heldout_scenes = 1;
  generate_fixture(spec, dir.path());
  const auto lookup = read_table(dir / "tables/lookup.o3et");
  const TableTextEmbedder text({lookup, read_table(dir / "tables/phrases.o3et")});
  CHECK(lookup.size() == 27);
  const auto r = map_to_label_set("resting on", lookup, text);
  CHECK(r.front().label == "standing on");
  // oracle re-rank from raw vectors
  const auto phrase = text.encode("resting on");
  CHECK(reference_ranking(phrase, lookup).front().label == "standing on");
}

TEST_CASE("prompt template substitution") {
  CHECK(render_prompt("lamp", "table") == "Describe the relationship between lamp and table?");
  CHECK(render_prompt("a", "b", "[object2] vs [object1]") == "b vs a");
}

TEST_CASE("failed decodes leave an explicit marker and keep other edges") {
  const auto objects = unit_table({"a", "b"});
  const auto lookup = unit_table({"x"}, "lookup-text");
  const TableTextEmbedder text({lookup});
  FeatureSet fs;
  fs.nodes[0] = {1, 0};
  fs.nodes[1] = {0, 1};
  fs.edges[{0, 1}] = {1};
  fs.edges[{1, 0}] = {1};
  const FailingDecoder dec;
  const auto g = build_scene_graph(fs, objects, dec, lookup, text, {});
  REQUIRE(g.edges.size() == 2);
  CHECK(g.find_edge(0, 1)->phrase == "x");
  CHECK(g.find_edge(0, 1)->mapped.front().label == "x");
  CHECK_FALSE(g.find_edge(1, 0)->phrase.has_value());
  CHECK(g.find_edge(1, 0)->error.find("timeout") != std::string::npos);
  CHECK(g.find_edge(1, 0)->mapped.empty());
  const auto back = PredictedSceneGraph::from_json(g.to_json());
  CHECK(back.to_json() == g.to_json());

  GraphBuildOptions gt;
  gt.gt_labels = std::map<InstanceId, std::string>{{0, "b"}, {1, "a"}};
  const auto flipped = build_scene_graph(fs, objects, dec, lookup, text, gt);
  CHECK_FALSE(flipped.find_edge(0, 1)->phrase.has_value());
  CHECK(flipped.find_edge(1, 0)->phrase == "x");
}

TEST_CASE("zero-norm node features are marked, not classified") {
  const auto objects = unit_table({"a", "b"});
  const auto lookup = unit_table({"x"}, "lookup-text");
  const TableTextEmbedder text({lookup});
  FeatureSet fs;
  fs.nodes[3] = {0, 0};
  const NearestNeighborDecoder dec(lookup);
  const auto g = build_scene_graph(fs, objects, dec, lookup, text, {});
  CHECK(g.node(3).labels.empty());
  CHECK_FALSE(g.node(3).error.empty());
  CHECK_THROWS_AS(g.node(4), DataError);
}

TEST_CASE("triplet localization") {
  const auto objects = unit_table({"chair", "lamp", "table"});
  const auto lookup = unit_table({"above", "near", "standing on"}, "lookup-text");
  const TableTextEmbedder obj_text({objects}), rel_text({lookup});

  SUBCASE("single edge graph returns that edge") {
    PredictedSceneGraph g;
    g.nodes = {{4, {1, 0, 0}, {}, {}}, {8, {0, 1, 0}, {}, {}}};
    g.edges = {{4, 8, {0, 0, 1}, "near", {}, {}}};
    const auto hit = localize_triplet(g, {"table", "above", "lamp"}, obj_text, rel_text);
    CHECK(hit.i == 4);
    CHECK(hit.j == 8);
  }
  SUBCASE("exact match scores 1") {
    PredictedSceneGraph g;
    g.nodes = {{1, {0, 1, 0}, {}, {}}, {2, {0, 0, 1}, {}, {}}, {3, {1, 0, 0}, {}, {}}};
    g.edges = {{1, 2, {}, "standing on", {}, {}}, {2, 1, {}, "near", {}, {}}, {3, 1, {}, "above", {}, {}},
               {3, 2, {}, std::nullopt, "timeout: x", {}}};
    const auto hit = localize_triplet(g, {"lamp", "standing on", "table"}, obj_text, rel_text);
    CHECK(hit.i == 1);
    CHECK(hit.j == 2);
    CHECK(hit.score == doctest::Approx(1.0));
  }
  SUBCASE("random graphs agree with exhaustive scoring") {
    std::mt19937_64 rng(6);
    const auto obj = random_table(rng, 6, 8, "o");
    const auto rel = random_table(rng, 6, 8, "r");
    const TableTextEmbedder ot({obj}), rt({rel});
    for (int trial = 0; trial < 30; ++trial) {
      PredictedSceneGraph g;
      for (InstanceId n = 0; n < 5; ++n) g.nodes.push_back({n, oracle::random_vector(rng, 8), {}, {}});
      for (InstanceId i = 0; i < 5; ++i)
        for (InstanceId j = 0; j < 5; ++j)
          if (i != j) g.edges.push_back({i, j, {}, rel.labels[rng() % rel.size()], {}, {}});
      const TripletQuery q{obj.labels[rng() % 6], rel.labels[rng() % 6], obj.labels[rng() % 6]};
      double best = -10;
      Edge arg{};
      for (const auto& e : g.edges) {
        const double s = (oracle::reference_cosine(ot.encode(q.subject), g.node(e.i).feature) +
                          oracle::reference_cosine(rt.encode(q.predicate), rt.encode(*e.phrase)) +
                          oracle::reference_cosine(ot.encode(q.object), g.node(e.j).feature)) /
                         3.0;
        if (s > best + 1e-12) {
          best = s;
          arg = {e.i, e.j};
        }
      }
      const auto hit = localize_triplet(g, q, ot, rt);
      CHECK(Edge{hit.i, hit.j} == arg);
      CHECK(hit.score == doctest::Approx(best).epsilon(1e-9));
    }
  }
}

TEST_CASE("node queries rank by cosine to the encoded text") {
  const auto objects = unit_table({"chair", "lamp"});
  const TableTextEmbedder text({objects});
  PredictedSceneGraph g;
  g.nodes = {{1, {0.2f, 1}, {}, {}}, {2, {1, 0.1f}, {}, {}}, {3, {1, 0.5f}, {}, {}}};
  const auto r = query_nodes(g, "chair", text);
  REQUIRE(r.size() == 3);
  CHECK(r[0].id == 2);
  CHECK(r[1].id == 3);
  CHECK(query_nodes(g, "lamp", text, 1).front().id == 1);
  CHECK_THROWS_AS(query_nodes(g, "sofa", text), EmbedderError);
}

TEST_CASE("embedding tables validate and round-trip") {
  std::mt19937_64 rng(7);
  const auto t = random_table(rng, 5, 4);
  const auto bytes = encode_table(t);
  const auto back = decode_table(bytes);
  CHECK(back.labels == t.labels);
  CHECK(back.space == t.space);
  CHECK(encode_table(back) == bytes);

  auto dup = t;
  dup.labels[1] = dup.labels[0];
  CHECK_THROWS_AS(dup.validate(), DataError);
  auto ragged = t;
  ragged.vectors[2].pop_back();
  CHECK_THROWS_AS(ragged.validate(), DataError);
  CHECK_THROWS_AS((EmbeddingTable{"s", 2, {}, {}}).validate(), DataError);
  CHECK_THROWS_AS(read_table("/nonexistent/table.o3et"), DataError);
}
