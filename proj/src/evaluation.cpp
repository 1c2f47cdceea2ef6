#include "o3dsg/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "o3dsg/errors.hpp"

namespace o3dsg {

using nlohmann::json;

namespace {

bool in_top_k(const Ranking& r, std::string_view label, std::size_t k) {
  const auto n = std::min(k, r.size());
  for (std::size_t q = 0; q < n; ++q)
    if (r[q].label == label) return true;
  return false;
}

Edge parse_edge_key(const std::string& key) {
  const auto comma = key.find(',');
  if (comma == std::string::npos) throw ParseError("predicates", "edge key \"" + key + "\" is not \"i,j\"");
  try {
    std::size_t used = 0;
    const auto i = std::stoul(key.substr(0, comma), &used);
    if (used != comma) throw std::invalid_argument(key);
    const auto rest = key.substr(comma + 1);
    const auto j = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(key);
    return {InstanceId(i), InstanceId(j)};
  } catch (const std::logic_error&) {
    throw ParseError("predicates", "edge key \"" + key + "\" is not \"i,j\"");
  }
}

InstanceId parse_id(const std::string& key, const std::string& field) {
  try {
    std::size_t used = 0;
    const auto v = std::stoul(key, &used);
    if (used != key.size()) throw std::invalid_argument(key);
    return InstanceId(v);
  } catch (const std::logic_error&) {
    throw ParseError(field, "\"" + key + "\" is not an instance id");
  }
}

double component(double s) { return (1.0 + s) / 2.0; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json("n/a"); }

}  // namespace

// ---------------------------------------------------------------------------

void GroundTruthGraph::validate() const {
  const std::set<std::string> oc(object_classes.begin(), object_classes.end());
  const std::set<std::string> pc(predicate_classes.begin(), predicate_classes.end());
  for (const auto& [id, label] : objects) {
    if (!oc.contains(label)) throw DataError("object " + std::to_string(id) + " has undeclared class \"" + label + "\"");
  }
  for (const auto& [e, labels] : predicates) {
    if (!objects.contains(e.i) || !objects.contains(e.j)) {
      throw DataError("predicate edge " + std::to_string(e.i) + "," + std::to_string(e.j) + " has a missing endpoint");
    }
    for (const auto& l : labels)
      if (!pc.contains(l)) throw DataError("edge has undeclared predicate \"" + l + "\"");
  }
  for (const auto& [name, values] : attributes)
    for (const auto& [id, label] : values)
      if (!objects.contains(id)) throw DataError("attribute '" + name + "' names unknown object " + std::to_string(id));
}

json GroundTruthGraph::to_json() const {
  json objs = json::object(), preds = json::object();
  for (const auto& [id, label] : objects) objs[std::to_string(id)] = label;
  for (const auto& [e, labels] : predicates) preds[std::to_string(e.i) + "," + std::to_string(e.j)] = labels;
  json j{{"objects", objs},
         {"predicates", preds},
         {"object_classes", object_classes},
         {"predicate_classes", predicate_classes}};
  if (!attributes.empty()) {
    json attrs = json::object();
    for (const auto& [name, values] : attributes) {
      json m = json::object();
      for (const auto& [id, label] : values) m[std::to_string(id)] = label;
      attrs[name] = m;
    }
    j["attributes"] = attrs;
  }
  return j;
}

GroundTruthGraph GroundTruthGraph::from_json(const json& j) {
  GroundTruthGraph g;
  try {
    for (const auto& [key, label] : j.at("objects").items()) g.objects[parse_id(key, "objects")] = label.get<std::string>();
    for (const auto& [key, labels] : j.at("predicates").items()) {
      g.predicates[parse_edge_key(key)] = labels.get<std::vector<std::string>>();
    }
    g.object_classes = j.at("object_classes").get<std::vector<std::string>>();
    g.predicate_classes = j.at("predicate_classes").get<std::vector<std::string>>();
    if (j.contains("attributes")) {
      for (const auto& [name, values] : j["attributes"].items()) {
        for (const auto& [key, label] : values.items()) {
          g.attributes[name][parse_id(key, "attributes." + name)] = label.get<std::string>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw ParseError("ground_truth", e.what());
  }
  g.validate();
  return g;
}

GroundTruthGraph read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("ground truth not found: " + path.string());
  try {
    return GroundTruthGraph::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError("ground_truth", e.what());
  }
}

// ---------------------------------------------------------------------------

double recall_at_k(std::span<const RecallItem> items, std::size_t k) {
  if (k == 0) throw DataError("k must be >= 1");
  if (items.empty()) throw DataError("recall is undefined without ground-truth items");
  std::size_t hits = 0;
  for (const auto& it : items) {
    if (std::any_of(it.truth.begin(), it.truth.end(), [&](const auto& l) { return in_top_k(it.ranking, l, k); })) ++hits;
  }
  return double(hits) / double(items.size());
}

std::map<std::string, double> per_class_recall(std::span<const RecallItem> items, std::size_t k) {
  if (k == 0) throw DataError("k must be >= 1");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // hits, total
  for (const auto& it : items) {
    for (const auto& l : std::set<std::string>(it.truth.begin(), it.truth.end())) {
      auto& c = counts[l];
      ++c.second;
      if (in_top_k(it.ranking, l, k)) ++c.first;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [l, c] : counts) out[l] = double(c.first) / double(c.second);
  return out;
}

double mean_recall_at_k(const std::map<std::string, double>& per_class) {
  if (per_class.empty()) throw DataError("mean recall is undefined without classes");
  double s = 0;
  for (const auto& [l, r] : per_class) s += r;
  return s / double(per_class.size());
}

std::optional<std::size_t> triplet_rank(const TripletItem& item) {
  auto score_of = [](const Ranking& r, std::string_view l) -> std::optional<double> {
    for (const auto& s : r)
      if (s.label == l) return s.score;
    return std::nullopt;
  };
  const auto gs = score_of(item.subject, item.gt_subject);
  const auto gp = score_of(item.predicate, item.gt_predicate);
  const auto go = score_of(item.object, item.gt_object);
  if (!gs || !gp || !go) return std::nullopt;
  const double gt_score = component(*gs) * component(*gp) * component(*go);
  const auto gt_key = std::tie(item.gt_subject, item.gt_predicate, item.gt_object);
  std::size_t ahead = 0;
  for (const auto& s : item.subject) {
    for (const auto& p : item.predicate) {
      for (const auto& o : item.object) {
        const double score = component(s.score) * component(p.score) * component(o.score);
        if (score > gt_score || (score == gt_score && std::tie(s.label, p.label, o.label) < gt_key)) ++ahead;
      }
    }
  }
  return ahead;
}

double triplet_recall_at_k(std::span<const TripletItem> items, std::size_t k) {
  if (k == 0) throw DataError("k must be >= 1");
  if (items.empty()) throw DataError("triplet recall is undefined without ground-truth triplets");
  std::size_t hits = 0;
  for (const auto& it : items) {
    const auto r = triplet_rank(it);
    if (r && *r < k) ++hits;
  }
  return double(hits) / double(items.size());
}

std::string_view bucket_name(Bucket b) {
  switch (b) {
    case Bucket::kHead: return "head";
    case Bucket::kBody: return "body";
    case Bucket::kTail: return "tail";
  }
  return "?";
}

FrequencySplit split_from_frequencies(const std::map<std::string, double>& counts) {
  std::vector<std::pair<std::string, double>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t n = sorted.size(), base = n / 3, rem = n % 3;
  FrequencySplit split;
  std::size_t pos = 0;
  for (int g = 0; g < 3; ++g) {
    const std::size_t size = base + (std::size_t(g) < rem ? 1 : 0);
    for (std::size_t q = 0; q < size; ++q) split[sorted[pos++].first] = Bucket(g);
  }
  return split;
}

std::map<std::string, double> read_frequencies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("frequency file not found: " + path.string());
  try {
    return json::parse(in).get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw ParseError("frequencies", e.what());
  }
}

json SplitReport::to_json() const {
  return json{{"head", optional_json(head)}, {"body", optional_json(body)}, {"tail", optional_json(tail)}};
}

SplitReport split_report(const std::map<std::string, double>& per_class, const FrequencySplit& split) {
  std::map<Bucket, std::map<std::string, double>> buckets;
  for (const auto& [label, r] : per_class) {
    auto it = split.find(label);
    if (it == split.end()) throw DataError("class \"" + label + "\" has no frequency bucket");
    buckets[it->second][label] = r;
  }
  auto mean_of = [&](Bucket b) -> std::optional<double> {
    auto it = buckets.find(b);
    if (it == buckets.end()) return std::nullopt;
    return mean_recall_at_k(it->second);
  };
  return {mean_of(Bucket::kHead), mean_of(Bucket::kBody), mean_of(Bucket::kTail)};
}

AttributeAccuracy attribute_top1(std::span<const AttributeItem> items) {
  if (items.empty()) throw DataError("attribute accuracy is undefined without ground truth");
  std::vector<RecallItem> as_recall;
  for (const auto& it : items) as_recall.push_back({it.ranking, {it.truth}});
  AttributeAccuracy acc;
  acc.per_class = per_class_recall(as_recall, 1);
  acc.mean = mean_recall_at_k(acc.per_class);
  acc.overall = recall_at_k(as_recall, 1);
  return acc;
}

// ---------------------------------------------------------------------------

EvalItems collect_items(std::span<const SceneEval> scenes) {
  EvalItems items;
  static const Ranking kEmpty;
  for (const auto& s : scenes) {
    auto node_ranking = [&](InstanceId id) -> const Ranking& {
      const auto* n = s.graph.find_node(id);
      return n ? n->labels : kEmpty;
    };
    for (const auto& [id, label] : s.gt.objects) items.objects.push_back({node_ranking(id), {label}});
    for (const auto& [e, labels] : s.gt.predicates) {
      if (labels.empty()) continue;
      const auto* pe = s.graph.find_edge(e.i, e.j);
      const Ranking& pr = pe ? pe->mapped : kEmpty;
      items.predicates.push_back({pr, labels});
      for (const auto& l : labels) {
        items.triplets.push_back({node_ranking(e.i), pr, node_ranking(e.j), s.gt.objects.at(e.i), l,
                                  s.gt.objects.at(e.j)});
      }
    }
  }
  return items;
}

json evaluate(std::span<const SceneEval> scenes, const EvalConfig& config,
              const std::map<std::string, EmbeddingTable>& attribute_tables) {
  const auto items = collect_items(scenes);
  json report;

  auto recall_section = [](const std::vector<RecallItem>& its, const std::vector<std::size_t>& ks,
                           const std::optional<std::map<std::string, double>>& freqs) {
    json sec = json::object();
    json splits = json::object();
    for (auto k : ks) {
      const auto key = std::to_string(k);
      sec["R@" + key] = recall_at_k(its, k);
      const auto pc = per_class_recall(its, k);
      sec["mR@" + key] = mean_recall_at_k(pc);
      if (freqs) splits["mR@" + key] = split_report(pc, split_from_frequencies(*freqs)).to_json();
    }
    if (freqs) sec["splits"] = splits;
    sec["count"] = its.size();
    return sec;
  };
  report["objects"] = recall_section(items.objects, config.object_k, config.object_frequencies);
  if (!items.predicates.empty()) {
    report["predicates"] = recall_section(items.predicates, config.predicate_k, config.predicate_frequencies);
    json trip = json::object();
    for (auto k : config.triplet_k) {
      const auto key = std::to_string(k);
      trip["R@" + key] = triplet_recall_at_k(items.triplets, k);
      // class-wise triplet recall grouped by GT predicate
      std::map<std::string, std::pair<std::size_t, std::size_t>> by_pred;
      for (const auto& t : items.triplets) {
        auto& c = by_pred[t.gt_predicate];
        ++c.second;
        const auto r = triplet_rank(t);
        if (r && *r < k) ++c.first;
      }
      std::map<std::string, double> pc;
      for (const auto& [l, c] : by_pred) pc[l] = double(c.first) / double(c.second);
      trip["mR@" + key] = mean_recall_at_k(pc);
    }
    trip["count"] = items.triplets.size();
    report["triplets"] = trip;
  }

  json attrs = json::object();
  for (const auto& [name, table] : attribute_tables) {
    std::vector<AttributeItem> ai;
    for (const auto& s : scenes) {
      auto it = s.gt.attributes.find(name);
      if (it == s.gt.attributes.end()) continue;
      for (const auto& [id, label] : it->second) {
        const auto* n = s.graph.find_node(id);
        Ranking r;
        if (n && !n->feature.empty()) {
          try {
            r = query_attribute(n->feature, table, 1);
          } catch (const UnclassifiableError&) {
          }
        }
        ai.push_back({std::move(r), label});
      }
    }
    if (ai.empty()) continue;
    const auto acc = attribute_top1(ai);
    attrs[name] = json{{"per_class", acc.per_class}, {"mean", acc.mean}, {"overall", acc.overall}, {"count", ai.size()}};
  }
  if (!attrs.empty()) report["attributes"] = attrs;

  json names = json::array();
  for (const auto& s : scenes) names.push_back(s.name);
  report["scenes"] = names;
  return report;
}

std::string report_csv(const json& report) {
  std::ostringstream out;
  out << "section,metric,value\n";
  for (const char* section : {"objects", "predicates", "triplets"}) {
    if (!report.contains(section)) continue;
    for (const auto& [metric, value] : report[section].items()) {
      if (metric == "splits") {
        for (const auto& [k, buckets] : value.items())
          for (const auto& [b, v] : buckets.items())
            out << section << ',' << k << '.' << b << ',' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
      } else {
        out << section << ',' << metric << ',' << value.dump() << '\n';
      }
    }
  }
  if (report.contains("attributes")) {
    for (const auto& [name, a] : report["attributes"].items()) {
      out << "attributes," << name << ".mean," << a["mean"].dump() << '\n';
      out << "attributes," << name << ".overall," << a["overall"].dump() << '\n';
      for (const auto& [cls, v] : a["per_class"].items()) out << "attributes," << name << '.' << cls << ',' << v.dump() << '\n';
    }
  }
  return out.str();
}

}  // namespace o3dsg
