#pragma once

// Closed-set benchmark harness: R@k, mR@k, triplet R@k, frequency splits and
// attribute accuracy.

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "o3dsg/inference.hpp"

namespace o3dsg {

struct GroundTruthGraph {
  std::map<InstanceId, std::string> objects;
  std::map<Edge, std::vector<std::string>> predicates;  // multi-label
  std::vector<std::string> object_classes;
  std::vector<std::string> predicate_classes;
  /// attribute name -> (node -> label), e.g. "material"
  std::map<std::string, std::map<InstanceId, std::string>> attributes;

  /// Labels come from the declared class lists and edge endpoints exist.
  void validate() const;
  nlohmann::json to_json() const;
  static GroundTruthGraph from_json(const nlohmann::json& j);
};

GroundTruthGraph read_ground_truth(const std::filesystem::path& path);

using Ranking = std::vector<ScoredLabel>;

struct RecallItem {
  Ranking ranking;
  std::vector<std::string> truth;  // hit when any of these is in the top k
};

/// Fraction of items with a true label among the first k ranked labels.
/// Throws DataError on an empty item list or k == 0.
double recall_at_k(std::span<const RecallItem> items, std::size_t k);

/// Per-class R@k: an item is an instance of every class in its truth set and
/// counts as a hit for class c when c is in its top k.
std::map<std::string, double> per_class_recall(std::span<const RecallItem> items, std::size_t k);

/// Unweighted mean over classes. Throws DataError when empty.
double mean_recall_at_k(const std::map<std::string, double>& per_class);

struct TripletItem {
  Ranking subject, predicate, object;
  std::string gt_subject, gt_predicate, gt_object;
};

/// Candidates for an edge are all (s, p, o) label combinations from the three
/// rankings, scored by the product of (1 + score) / 2 per component, ordered
/// by score descending then by the lexical order of the triple. A GT triplet
/// is a hit when it is among the first k candidates of its edge.
double triplet_recall_at_k(std::span<const TripletItem> items, std::size_t k);

/// 0-based position of the GT triple among its edge's candidates, or nullopt
/// when one of its labels is absent from the rankings.
std::optional<std::size_t> triplet_rank(const TripletItem& item);

enum class Bucket { kHead, kBody, kTail };
std::string_view bucket_name(Bucket b);

using FrequencySplit = std::map<std::string, Bucket>;

/// Sorts classes by count descending (ties by label) and cuts the list into
/// three equal groups; the remainder goes to the earlier groups.
FrequencySplit split_from_frequencies(const std::map<std::string, double>& counts);
std::map<std::string, double> read_frequencies(const std::filesystem::path& path);

struct SplitReport {
  std::optional<double> head, body, tail;  // nullopt: empty bucket ("n/a")
  nlohmann::json to_json() const;
};

/// Bucket-wise unweighted means of the per-class recalls. Every class must be
/// assigned a bucket.
SplitReport split_report(const std::map<std::string, double>& per_class, const FrequencySplit& split);

struct AttributeItem {
  Ranking ranking;
  std::string truth;
};

struct AttributeAccuracy {
  std::map<std::string, double> per_class;
  double mean = 0;      // unweighted over classes
  double overall = 0;   // over instances
};
AttributeAccuracy attribute_top1(std::span<const AttributeItem> items);

// ---------------------------------------------------------------------------

struct EvalConfig {
  std::vector<std::size_t> object_k = {1, 3, 5, 10};
  std::vector<std::size_t> predicate_k = {1, 3, 5};
  std::vector<std::size_t> triplet_k = {1, 50, 100};
  std::optional<std::map<std::string, double>> object_frequencies;
  std::optional<std::map<std::string, double>> predicate_frequencies;
};

struct SceneEval {
  std::string name;
  PredictedSceneGraph graph;
  GroundTruthGraph gt;
};

struct EvalItems {
  std::vector<RecallItem> objects;
  std::vector<RecallItem> predicates;
  std::vector<TripletItem> triplets;
};

/// Pools GT items across scenes in the order given. Nodes or edges missing
/// from a prediction get an empty ranking (always a miss).
EvalItems collect_items(std::span<const SceneEval> scenes);

/// Full report; attribute tables are matched to GT attributes by name.
nlohmann::json evaluate(std::span<const SceneEval> scenes, const EvalConfig& config,
                        const std::map<std::string, EmbeddingTable>& attribute_tables = {});

/// Flat "section,metric,value" CSV of a report.
std::string report_csv(const nlohmann::json& report);

}  // namespace o3dsg
