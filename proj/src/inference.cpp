#include "o3dsg/inference.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <set>
#include <thread>

#include "o3dsg/binary_io.hpp"
#include "o3dsg/errors.hpp"

namespace o3dsg {

using nlohmann::json;

namespace {

constexpr std::uint32_t kTableVersion = 1;

double norm(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += double(x) * x;
  return std::sqrt(s);
}

void sort_ranking(std::vector<ScoredLabel>& r) {
  std::sort(r.begin(), r.end(), [](const ScoredLabel& a, const ScoredLabel& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
  });
}

json ranking_json(const std::vector<ScoredLabel>& r) {
  json out = json::array();
  for (const auto& s : r) out.push_back(json::array({s.label, s.score}));
  return out;
}

std::vector<ScoredLabel> ranking_from_json(const json& j, const std::string& field) {
  std::vector<ScoredLabel> out;
  try {
    for (const auto& e : j) out.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
  } catch (const json::exception& e) {
    throw ParseError(field, e.what());
  }
  return out;
}

DecodeOutcome outcome_from(const std::exception_ptr& ep) {
  DecodeOutcome o;
  try {
    std::rethrow_exception(ep);
  } catch (const DecoderTimeoutError& e) {
    o.error = e.what();
    o.error_kind = "timeout";
  } catch (const DecoderMalformedResponseError& e) {
    o.error = e.what();
    o.error_kind = "malformed";
  } catch (const DecoderStatusError& e) {
    o.error = e.what();
    o.error_kind = "status";
  } catch (const DecoderTransportError& e) {
    o.error = e.what();
    o.error_kind = "transport";
  } catch (const std::exception& e) {
    o.error = e.what();
    o.error_kind = "error";
  }
  return o;
}

}  // namespace

// ---------------------------------------------------------------------------

void EmbeddingTable::validate() const {
  if (labels.empty()) throw DataError("embedding table '" + space + "' has no entries");
  if (labels.size() != vectors.size()) throw DataError("embedding table '" + space + "': label/vector count mismatch");
  std::set<std::string_view> seen;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (!seen.insert(labels[k]).second) {
      throw DataError("embedding table '" + space + "' repeats label \"" + labels[k] + "\"");
    }
    if (vectors[k].size() != dim) {
      throw DataError("embedding table '" + space + "' entry \"" + labels[k] + "\" has dimension " +
                      std::to_string(vectors[k].size()) + ", expected " + std::to_string(dim));
    }
  }
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view label) const {
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == label) return k;
  return std::nullopt;
}

void EmbeddingTable::add(std::string label, std::vector<float> vector) {
  labels.push_back(std::move(label));
  vectors.push_back(std::move(vector));
}

std::string encode_table(const EmbeddingTable& t) {
  t.validate();
  io::ByteWriter w;
  w.magic("O3ET");
  w.u32(kTableVersion);
  w.str16(t.space, "space");
  w.u32(t.dim);
  w.u64(t.labels.size());
  for (std::size_t k = 0; k < t.labels.size(); ++k) {
    w.str16(t.labels[k], "label");
    w.f32s(t.vectors[k]);
  }
  return w.take();
}

EmbeddingTable decode_table(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("O3ET");
  r.expect_version(kTableVersion);
  EmbeddingTable t;
  t.space = r.str16("space");
  t.dim = r.u32("dim");
  const auto count = r.u64("count");
  if (count == 0) throw ParseError("count", "table must have at least one entry");
  r.require_records(count, 2 + std::uint64_t(t.dim) * 4, "count");
  std::set<std::string> seen;
  for (std::uint64_t k = 0; k < count; ++k) {
    auto label = r.str16("label");
    if (!seen.insert(label).second) throw ParseError("label", "duplicate label \"" + label + "\"");
    std::vector<float> v(t.dim);
    r.f32s(v, "vector");
    t.add(std::move(label), std::move(v));
  }
  r.expect_end();
  return t;
}

EmbeddingTable read_table(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("embedding table not found: " + path.string());
  return decode_table(io::read_file(path));
}

void write_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  io::write_file(path, encode_table(table));
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DataError("cosine of vectors with different dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += double(a[k]) * b[k];
    na += double(a[k]) * a[k];
    nb += double(b[k]) * b[k];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<float> fuse(const std::optional<std::vector<float>>& f2d, std::span<const float> f3d) {
  if (!f2d) return {f3d.begin(), f3d.end()};
  if (f2d->size() != f3d.size()) {
    throw DataError("cannot fuse features of dimension " + std::to_string(f2d->size()) + " and " +
                    std::to_string(f3d.size()));
  }
  std::vector<float> out(f3d.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = float((double((*f2d)[k]) + f3d[k]) / 2.0);
  return out;
}

std::vector<ScoredLabel> rank_by_cosine(std::span<const float> feature, const EmbeddingTable& table,
                                        std::size_t top_k) {
  if (feature.size() != table.dim) {
    throw DataError("feature dimension " + std::to_string(feature.size()) + " does not match table '" +
                    table.space + "' dimension " + std::to_string(table.dim));
  }
  if (norm(feature) == 0) throw UnclassifiableError("feature has zero norm");
  std::vector<ScoredLabel> r;
  r.reserve(table.size());
  for (std::size_t k = 0; k < table.size(); ++k) r.push_back({table.labels[k], cosine(feature, table.vectors[k])});
  sort_ranking(r);
  if (top_k > 0 && top_k < r.size()) r.resize(top_k);
  return r;
}

// ---------------------------------------------------------------------------

std::string render_prompt(std::string_view subject, std::string_view object, std::string_view templ) {
  std::string out(templ);
  auto replace = [&out](std::string_view token, std::string_view value) {
    const auto at = out.find(token);
    if (at != std::string::npos) out.replace(at, token.size(), value);
  };
  replace("[object1]", subject);
  replace("[object2]", object);
  return out;
}

std::vector<DecodeOutcome> RelationshipDecoder::decode_batch(std::span<const DecodeRequest> requests) const {
  std::vector<DecodeOutcome> out;
  out.reserve(requests.size());
  for (const auto& req : requests) {
    try {
      out.push_back({decode(req), {}, {}});
    } catch (...) {
      out.push_back(outcome_from(std::current_exception()));
    }
  }
  return out;
}

NearestNeighborDecoder::NearestNeighborDecoder(EmbeddingTable predicates) : table_(std::move(predicates)) {
  table_.validate();
}

std::string NearestNeighborDecoder::decode(const DecodeRequest& request) const {
  return rank_by_cosine(request.edge_feature, table_, 1).front().label;
}

HttpDecoder::HttpDecoder(HttpDecoderOptions options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ConfigError("decoder.endpoint", "required for the http decoder");
  if (!(options_.timeout_s > 0)) throw ConfigError("decoder.timeout_s", "must be positive");
  if (options_.max_in_flight < 1) throw ConfigError("decoder.max_in_flight", "must be >= 1");
}

std::string HttpDecoder::post(const DecodeRequest& request, std::size_t request_id) const {
  httplib::Client client(options_.endpoint);
  if (!client.is_valid()) throw DecoderTransportError("invalid decoder endpoint: " + options_.endpoint);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(options_.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const json body{{"edge_feature", request.edge_feature},
                  {"subject", request.subject},
                  {"object", request.object},
                  {"prompt", request.prompt},
                  {"request_id", request_id}};
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post("/decode", body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (err == httplib::Error::ConnectionTimeout || (err == httplib::Error::Read && elapsed >= options_.timeout_s)) {
      throw DecoderTimeoutError("decoder did not answer within " + std::to_string(options_.timeout_s) + " s");
    }
    throw DecoderTransportError("decoder request failed: " + httplib::to_string(err));
  }
  if (res->status != 200) throw DecoderStatusError(res->status, res->body.substr(0, 200));
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw DecoderMalformedResponseError(std::string("response is not JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("phrase") || !reply["phrase"].is_string()) {
    throw DecoderMalformedResponseError("response lacks a string 'phrase' field");
  }
  if (reply.contains("request_id") && reply["request_id"] != json(request_id)) {
    throw DecoderMalformedResponseError("response carries request_id " + reply["request_id"].dump() +
                                        ", expected " + std::to_string(request_id));
  }
  auto phrase = reply["phrase"].get<std::string>();
  if (phrase.empty()) throw DecoderMalformedResponseError("response phrase is empty");
  return phrase;
}

std::string HttpDecoder::decode(const DecodeRequest& request) const { return post(request, 0); }

std::vector<DecodeOutcome> HttpDecoder::decode_batch(std::span<const DecodeRequest> requests) const {
  std::vector<DecodeOutcome> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < requests.size();) {
      try {
        out[k] = {post(requests[k], k), {}, {}};
      } catch (...) {
        out[k] = outcome_from(std::current_exception());
      }
    }
  };
  const auto workers = std::min<std::size_t>(std::size_t(options_.max_in_flight), requests.size());
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins
  return out;
}

FallbackDecoder::FallbackDecoder(std::shared_ptr<const RelationshipDecoder> primary,
                                 std::shared_ptr<const RelationshipDecoder> fallback)
    : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

std::string FallbackDecoder::decode(const DecodeRequest& request) const {
  try {
    return primary_->decode(request);
  } catch (const DecoderError&) {
    return fallback_->decode(request);
  }
}

std::vector<DecodeOutcome> FallbackDecoder::decode_batch(std::span<const DecodeRequest> requests) const {
  auto out = primary_->decode_batch(requests);
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].phrase) continue;
    try {
      out[k] = {fallback_->decode(requests[k]), {}, {}};
    } catch (...) {
      out[k] = outcome_from(std::current_exception());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TableTextEmbedder::TableTextEmbedder(std::vector<EmbeddingTable> tables) {
  for (const auto& t : tables) {
    t.validate();
    if (dim_ == 0) dim_ = t.dim;
    if (t.dim != dim_) throw DataError("text tables disagree on dimension");
    for (std::size_t k = 0; k < t.size(); ++k) entries_.try_emplace(t.labels[k], t.vectors[k]);
  }
}

std::vector<float> TableTextEmbedder::encode(std::string_view text) const {
  auto it = entries_.find(text);
  if (it == entries_.end()) throw EmbedderError("no text embedding for \"" + std::string(text) + "\"");
  return it->second;
}

bool TableTextEmbedder::knows(std::string_view text) const { return entries_.contains(text); }

std::vector<ScoredLabel> map_to_label_set(std::string_view phrase, const EmbeddingTable& lookup,
                                          const TextEmbedder& embedder, std::size_t top_k) {
  return rank_by_cosine(embedder.encode(phrase), lookup, top_k);
}

// ---------------------------------------------------------------------------

const NodePrediction* PredictedSceneGraph::find_node(InstanceId id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const NodePrediction& n, InstanceId v) { return n.id < v; });
  return it != nodes.end() && it->id == id ? &*it : nullptr;
}

const NodePrediction& PredictedSceneGraph::node(InstanceId id) const {
  if (const auto* n = find_node(id)) return *n;
  throw DataError("unknown node id " + std::to_string(id));
}

const EdgePrediction* PredictedSceneGraph::find_edge(InstanceId i, InstanceId j) const {
  auto it = std::lower_bound(edges.begin(), edges.end(), Edge{i, j},
                             [](const EdgePrediction& e, const Edge& v) { return Edge{e.i, e.j} < v; });
  return it != edges.end() && it->i == i && it->j == j ? &*it : nullptr;
}

json PredictedSceneGraph::to_json() const {
  json jn = json::array(), je = json::array();
  for (const auto& n : nodes) {
    json o{{"id", n.id}, {"labels", ranking_json(n.labels)}, {"feature", n.feature}};
    if (!n.error.empty()) o["error"] = n.error;
    jn.push_back(std::move(o));
  }
  for (const auto& e : edges) {
    json o{{"i", e.i}, {"j", e.j}};
    if (e.phrase) o["phrase"] = *e.phrase;
    else o["error"] = e.error;
    o["mapped"] = ranking_json(e.mapped);
    o["feature"] = e.feature;
    je.push_back(std::move(o));
  }
  return json{{"nodes", jn}, {"edges", je}};
}

PredictedSceneGraph PredictedSceneGraph::from_json(const json& j) {
  PredictedSceneGraph g;
  try {
    for (std::size_t k = 0; k < j.at("nodes").size(); ++k) {
      const auto& o = j["nodes"][k];
      const auto field = "nodes[" + std::to_string(k) + "]";
      NodePrediction n;
      n.id = o.at("id").get<InstanceId>();
      n.labels = ranking_from_json(o.at("labels"), field + ".labels");
      if (o.contains("feature")) n.feature = o["feature"].get<std::vector<float>>();
      if (o.contains("error")) n.error = o["error"].get<std::string>();
      g.nodes.push_back(std::move(n));
    }
    for (std::size_t k = 0; k < j.at("edges").size(); ++k) {
      const auto& o = j["edges"][k];
      const auto field = "edges[" + std::to_string(k) + "]";
      EdgePrediction e;
      e.i = o.at("i").get<InstanceId>();
      e.j = o.at("j").get<InstanceId>();
      if (o.contains("phrase")) e.phrase = o["phrase"].get<std::string>();
      if (o.contains("error")) e.error = o["error"].get<std::string>();
      e.mapped = ranking_from_json(o.at("mapped"), field + ".mapped");
      if (o.contains("feature")) e.feature = o["feature"].get<std::vector<float>>();
      g.edges.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError("graph", e.what());
  }
  std::sort(g.nodes.begin(), g.nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(g.edges.begin(), g.edges.end(),
            [](const auto& a, const auto& b) { return Edge{a.i, a.j} < Edge{b.i, b.j}; });
  return g;
}

PredictedSceneGraph build_scene_graph(const FeatureSet& fused, const EmbeddingTable& objects,
                                      const RelationshipDecoder& decoder, const EmbeddingTable& lookup,
                                      const TextEmbedder& lookup_embedder, const GraphBuildOptions& options) {
  PredictedSceneGraph g;
  for (const auto& [id, feature] : fused.nodes) {
    NodePrediction n;
    n.id = id;
    n.feature = feature;
    try {
      n.labels = classify_node(feature, objects, options.top_k);
    } catch (const UnclassifiableError& e) {
      n.error = e.what();
    }
    g.nodes.push_back(std::move(n));
  }

  auto label_of = [&](InstanceId id) -> std::string {
    if (options.gt_labels) {
      auto it = options.gt_labels->find(id);
      if (it == options.gt_labels->end()) throw DataError("no ground-truth label for node " + std::to_string(id));
      return it->second;
    }
    const auto& n = g.node(id);
    return n.labels.empty() ? std::string("object") : n.labels.front().label;
  };

  std::vector<DecodeRequest> requests;
  for (const auto& [edge, feature] : fused.edges) {
    DecodeRequest req;
    req.edge_feature = feature;
    req.subject = label_of(edge.i);
    req.object = label_of(edge.j);
    req.prompt = render_prompt(req.subject, req.object, options.prompt_template);
    requests.push_back(std::move(req));
  }
  const auto outcomes = decoder.decode_batch(requests);

  std::size_t k = 0;
  for (const auto& [edge, feature] : fused.edges) {
    EdgePrediction e;
    e.i = edge.i;
    e.j = edge.j;
    e.feature = feature;
    const auto& o = outcomes[k++];
    if (o.phrase) {
      e.phrase = o.phrase;
      e.mapped = map_to_label_set(*o.phrase, lookup, lookup_embedder, options.top_k);
    } else {
      e.error = o.error_kind + ": " + o.error;
    }
    g.edges.push_back(std::move(e));
  }
  return g;
}

LocalizedEdge localize_triplet(const PredictedSceneGraph& graph, const TripletQuery& query,
                               const TextEmbedder& object_embedder, const TextEmbedder& lookup_embedder) {
  const auto s = object_embedder.encode(query.subject);
  const auto p = lookup_embedder.encode(query.predicate);
  const auto o = object_embedder.encode(query.object);
  std::optional<LocalizedEdge> best;
  for (const auto& e : graph.edges) {  // ascending (i, j), so strict > keeps the lowest on ties
    if (!e.phrase) continue;
    const double score = (cosine(s, graph.node(e.i).feature) + cosine(p, lookup_embedder.encode(*e.phrase)) +
                          cosine(o, graph.node(e.j).feature)) /
                         3.0;
    if (!best || score > best->score) best = LocalizedEdge{e.i, e.j, score};
  }
  if (!best) throw DataError("graph has no decoded edge to localize");
  return *best;
}

std::vector<ScoredNode> query_nodes(const PredictedSceneGraph& graph, std::string_view text,
                                    const TextEmbedder& object_embedder, std::size_t top_k) {
  const auto q = object_embedder.encode(text);
  std::vector<ScoredNode> out;
  for (const auto& n : graph.nodes) out.push_back({n.id, cosine(q, n.feature)});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (top_k > 0 && top_k < out.size()) out.resize(top_k);
  return out;
}

}  // namespace o3dsg
