#pragma once

// Open-vocabulary graph construction: 2D/3D feature fusion, cosine ranking
// against text-embedding tables, relationship decoding and label mapping.

#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "o3dsg/scene_model.hpp"

namespace o3dsg {

struct EmbeddingTable {
  std::string space;  // e.g. "object-text", "predicate-text", "lookup-text"
  std::uint32_t dim = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<float>> vectors;

  /// Unique labels, uniform dimension, at least one entry.
  void validate() const;
  std::size_t size() const noexcept { return labels.size(); }
  std::optional<std::size_t> find(std::string_view label) const;
  void add(std::string label, std::vector<float> vector);
};

// "O3ET", u32 version, u16 space tag, u32 D, u64 count,
// then count records of (u16 len, utf8 label, D f32).
std::string encode_table(const EmbeddingTable& table);
EmbeddingTable decode_table(std::string_view bytes);
EmbeddingTable read_table(const std::filesystem::path& path);
void write_table(const std::filesystem::path& path, const EmbeddingTable& table);

/// cos(a, b) in double; 0 when either vector has zero norm.
double cosine(std::span<const float> a, std::span<const float> b);

/// Mean of the two features, or f3d alone when the 2D feature is missing.
std::vector<float> fuse(const std::optional<std::vector<float>>& f2d, std::span<const float> f3d);

struct ScoredLabel {
  std::string label;
  double score = 0;
  friend bool operator==(const ScoredLabel&, const ScoredLabel&) = default;
};

/// Table labels ranked by cosine to `feature`, descending, ties by label.
/// top_k == 0 returns the full ranking. Throws UnclassifiableError on a
/// zero-norm feature and DataError on a dimension mismatch.
std::vector<ScoredLabel> rank_by_cosine(std::span<const float> feature, const EmbeddingTable& table,
                                        std::size_t top_k = 0);

inline std::vector<ScoredLabel> classify_node(std::span<const float> fused, const EmbeddingTable& table,
                                              std::size_t top_k = 0) {
  return rank_by_cosine(fused, table, top_k);
}

inline std::vector<ScoredLabel> query_attribute(std::span<const float> fused, const EmbeddingTable& table,
                                                std::size_t top_k = 0) {
  return rank_by_cosine(fused, table, top_k);
}

// ---------------------------------------------------------------------------
// Relationship decoding

inline constexpr std::string_view kPromptTemplate = "Describe the relationship between [object1] and [object2]?";

/// Substitutes the subject and object labels into the template.
std::string render_prompt(std::string_view subject, std::string_view object,
                          std::string_view templ = kPromptTemplate);

struct DecodeRequest {
  std::vector<float> edge_feature;
  std::string subject;
  std::string object;
  std::string prompt;
};

/// Outcome of one decode inside a batch. Exactly one of phrase/error is set.
struct DecodeOutcome {
  std::optional<std::string> phrase;
  std::string error;
  std::string error_kind;  // "timeout", "malformed", "status", "transport", ...
};

class RelationshipDecoder {
 public:
  virtual ~RelationshipDecoder() = default;
  /// Non-empty phrase, or a typed DecoderError.
  virtual std::string decode(const DecodeRequest& request) const = 0;
  /// Decodes independent requests; failures are reported per request.
  virtual std::vector<DecodeOutcome> decode_batch(std::span<const DecodeRequest> requests) const;
};

/// Returns the predicate-table label closest to the edge feature.
class NearestNeighborDecoder final : public RelationshipDecoder {
 public:
  explicit NearestNeighborDecoder(EmbeddingTable predicates);
  std::string decode(const DecodeRequest& request) const override;
  const EmbeddingTable& table() const noexcept { return table_; }

 private:
  EmbeddingTable table_;
};

struct HttpDecoderOptions {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080"
  double timeout_s = 30.0;
  int max_in_flight = 4;
};

/// POST {endpoint}/decode with {edge_feature, subject, object, prompt,
/// request_id}; expects 200 and {"phrase": "..."}.
class HttpDecoder final : public RelationshipDecoder {
 public:
  explicit HttpDecoder(HttpDecoderOptions options);
  std::string decode(const DecodeRequest& request) const override;
  std::vector<DecodeOutcome> decode_batch(std::span<const DecodeRequest> requests) const override;

 private:
  std::string post(const DecodeRequest& request, std::size_t request_id) const;
  HttpDecoderOptions options_;
};

/// Retries failed external decodes with a nearest-neighbor decoder.
class FallbackDecoder final : public RelationshipDecoder {
 public:
  FallbackDecoder(std::shared_ptr<const RelationshipDecoder> primary,
                  std::shared_ptr<const RelationshipDecoder> fallback);
  std::string decode(const DecodeRequest& request) const override;
  std::vector<DecodeOutcome> decode_batch(std::span<const DecodeRequest> requests) const override;

 private:
  std::shared_ptr<const RelationshipDecoder> primary_, fallback_;
};

// ---------------------------------------------------------------------------
// Text side

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  /// Throws EmbedderError when the text cannot be encoded.
  virtual std::vector<float> encode(std::string_view text) const = 0;
  virtual std::uint32_t dim() const = 0;
};

/// Exact-match phrase lookup in one or more tables of the same space.
class TableTextEmbedder final : public TextEmbedder {
 public:
  explicit TableTextEmbedder(std::vector<EmbeddingTable> tables);
  std::vector<float> encode(std::string_view text) const override;
  std::uint32_t dim() const override { return dim_; }
  bool knows(std::string_view text) const;

 private:
  std::map<std::string, std::vector<float>, std::less<>> entries_;
  std::uint32_t dim_ = 0;
};

/// Encodes the phrase and ranks the closed-set lookup labels by cosine.
std::vector<ScoredLabel> map_to_label_set(std::string_view phrase, const EmbeddingTable& lookup,
                                          const TextEmbedder& embedder, std::size_t top_k = 0);

// ---------------------------------------------------------------------------
// Predicted graph

struct NodePrediction {
  InstanceId id = 0;
  std::vector<float> feature;  // fused
  std::vector<ScoredLabel> labels;
  std::string error;  // set when the node could not be classified
};

struct EdgePrediction {
  InstanceId i = 0, j = 0;
  std::vector<float> feature;  // fused
  std::optional<std::string> phrase;
  std::string error;  // decoder failure marker when phrase is empty
  std::vector<ScoredLabel> mapped;
};

struct PredictedSceneGraph {
  std::vector<NodePrediction> nodes;  // ascending id
  std::vector<EdgePrediction> edges;  // ascending (i, j)

  const NodePrediction& node(InstanceId id) const;
  const NodePrediction* find_node(InstanceId id) const;
  const EdgePrediction* find_edge(InstanceId i, InstanceId j) const;

  nlohmann::json to_json() const;
  static PredictedSceneGraph from_json(const nlohmann::json& j);
};

struct GraphBuildOptions {
  std::size_t top_k = 0;  // 0: full rankings
  std::string prompt_template{kPromptTemplate};
  /// Condition relationship decoding on these labels instead of predictions.
  std::optional<std::map<InstanceId, std::string>> gt_labels;
};

struct FeatureSet {
  std::map<InstanceId, std::vector<float>> nodes;
  std::map<Edge, std::vector<float>> edges;
};

/// Classifies nodes, decodes every edge conditioned on the subject/object
/// labels, then maps phrases to the lookup label set.
PredictedSceneGraph build_scene_graph(const FeatureSet& fused, const EmbeddingTable& objects,
                                      const RelationshipDecoder& decoder, const EmbeddingTable& lookup,
                                      const TextEmbedder& lookup_embedder, const GraphBuildOptions& options);

struct TripletQuery {
  std::string subject, predicate, object;
};

struct LocalizedEdge {
  InstanceId i = 0, j = 0;
  double score = 0;
};

/// Mean of cos(subject, node_i), cos(predicate, edge phrase) and
/// cos(object, node_j); the best edge wins, lowest (i, j) on ties. Edges
/// without a phrase are skipped.
LocalizedEdge localize_triplet(const PredictedSceneGraph& graph, const TripletQuery& query,
                               const TextEmbedder& object_embedder, const TextEmbedder& lookup_embedder);

/// Nodes ranked by cosine between the encoded query and their fused feature.
struct ScoredNode {
  InstanceId id = 0;
  double score = 0;
};
std::vector<ScoredNode> query_nodes(const PredictedSceneGraph& graph, std::string_view text,
                                    const TextEmbedder& object_embedder, std::size_t top_k = 0);

}  // namespace o3dsg
