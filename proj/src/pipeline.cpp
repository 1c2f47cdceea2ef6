#include "o3dsg/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "o3dsg/binary_io.hpp"
#include "o3dsg/errors.hpp"
#include "o3dsg/projection.hpp"

namespace o3dsg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Typed accessor for a dotted config key with a default.
class ConfigReader {
 public:
  ConfigReader(const json& root, fs::path base) : root_(root), base_(std::move(base)) {}

  const json* find(std::string_view dotted) const {
    const json* node = &root_;
    std::size_t start = 0;
    while (start <= dotted.size()) {
      const auto dot = dotted.find('.', start);
      const auto key = std::string(dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start));
      if (!node->is_object() || !node->contains(key)) return nullptr;
      node = &(*node)[key];
      if (dot == std::string_view::npos) break;
      start = dot + 1;
    }
    return node->is_null() ? nullptr : node;
  }

  template <typename T>
  T get(std::string_view key, T fallback) const {
    const json* v = find(key);
    if (!v) return fallback;
    try {
      return v->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string(key), e.what());
    }
  }

  fs::path path(std::string_view key, const fs::path& fallback = {}) const {
    const json* v = find(key);
    if (!v) return fallback.empty() ? fallback : resolve(fallback);
    if (!v->is_string()) throw ConfigError(std::string(key), "expected a path string");
    return resolve(v->get<std::string>());
  }

  std::optional<fs::path> optional_path(std::string_view key) const {
    if (!find(key)) return std::nullopt;
    return path(key);
  }

  std::vector<fs::path> paths(std::string_view key) const {
    std::vector<fs::path> out;
    const json* v = find(key);
    if (!v) return out;
    if (v->is_string()) return {resolve(v->get<std::string>())};
    if (!v->is_array()) throw ConfigError(std::string(key), "expected a path or a list of paths");
    for (const auto& e : *v) {
      if (!e.is_string()) throw ConfigError(std::string(key), "expected path strings");
      out.push_back(resolve(e.get<std::string>()));
    }
    return out;
  }

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : (base_ / p).lexically_normal(); }

 private:
  const json& root_;
  fs::path base_;
};

template <typename Fn>
auto with_prefix(const std::string& prefix, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + "." + e.field(), e.detail());
  }
}

void write_text(const fs::path& path, const std::string& text) { io::write_file(path, text); }

json read_json_file(const fs::path& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(field, e.what());
  }
}

fs::path require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw DataError(what + " not found: " + p.string() + " (run the upstream command first)");
  return p;
}

std::vector<fs::path> all_scenes(const PipelineConfig& cfg) {
  std::vector<fs::path> out;
  std::set<fs::path> seen;
  for (const auto* list : {&cfg.train_scenes, &cfg.eval_scenes})
    for (const auto& p : *list)
      if (seen.insert(p).second) out.push_back(p);
  return out;
}

SceneGraphSkeleton skeleton_for(const PipelineConfig& cfg, const Scene& scene) {
  return build_skeleton(scene.instances, cfg.max_edge_distance);
}

std::map<InstanceId, std::string> gt_labels_of(const Scene& scene) {
  if (!scene.manifest.ground_truth) throw DataError("scene " + scene.name + " has no ground_truth entry");
  return read_ground_truth(*scene.manifest.ground_truth).objects;
}

std::vector<EmbeddingTable> read_tables(const std::vector<fs::path>& paths) {
  std::vector<EmbeddingTable> out;
  for (const auto& p : paths) out.push_back(read_table(p));
  return out;
}

/// Runs the trained model on one scene and builds its predicted graph.
PredictedSceneGraph infer_scene(const PipelineConfig& cfg, const TrainState& state, const Scene& scene,
                                const RelationshipDecoder& decoder, const EmbeddingTable& objects,
                                const EmbeddingTable& lookup, const TextEmbedder& lookup_text) {
  const auto skeleton = skeleton_for(cfg, scene);
  const auto inputs = prepare_inputs(scene.cloud, scene.instances, skeleton, state.model);
  const GraphNet net(state.model);
  const auto pred = predict(net, state.params, inputs);

  const auto targets_path = require_file(scene_work_dir(cfg, scene) / "targets.o3ft", "2D targets");
  const auto targets = read_targets(targets_path);
  if (int(targets.d_obj) != state.model.d_obj || int(targets.d_rel) != state.model.d_rel) {
    throw DataError("targets in " + targets_path.string() + " do not match the checkpoint's output dimensions");
  }

  FeatureSet fused;
  for (std::size_t n = 0; n < inputs.nodes.size(); ++n) {
    const auto id = inputs.nodes[n];
    auto it = targets.nodes.find(id);
    std::optional<std::vector<float>> f2d = it == targets.nodes.end() ? std::nullopt : it->second.value;
    fused.nodes[id] = fuse(f2d, pred.nodes.row(int(n)));
  }
  for (std::size_t e = 0; e < inputs.edges.size(); ++e) {
    const auto& edge = inputs.edges[e];
    auto it = targets.edges.find(edge);
    std::optional<std::vector<float>> f2d = it == targets.edges.end() ? std::nullopt : it->second.value;
    fused.edges[edge] = fuse(f2d, pred.edges.row(int(e)));
  }

  GraphBuildOptions options;
  options.top_k = cfg.top_k;
  if (cfg.use_gt_labels) options.gt_labels = gt_labels_of(scene);
  return build_scene_graph(fused, objects, decoder, lookup, lookup_text, options);
}

Scene find_scene(const PipelineConfig& cfg, const std::string& name) {
  for (const auto& p : all_scenes(cfg)) {
    if (p.parent_path().filename() == name || p == fs::path(name)) return load_scene(p);
  }
  if (fs::exists(name)) return load_scene(name);
  throw ConfigError("repl.scene", "unknown scene \"" + name + "\"");
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << std::fixed << v;
  return s.str();
}

void print_ranking(std::ostream& out, const std::vector<ScoredLabel>& r) {
  for (const auto& s : r) out << s.label << '\t' << fmt(s.score) << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  PipelineConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  const ConfigReader r(j, base_dir);

  c.work_dir = r.path("work_dir", "work");
  c.train_scenes = r.paths("scenes.train");
  c.eval_scenes = r.paths("scenes.eval");
  if (c.eval_scenes.empty()) c.eval_scenes = c.train_scenes;

  c.object_table = r.path("tables.object");
  c.predicate_table = r.path("tables.predicate");
  c.lookup_table = r.path("tables.lookup");
  c.text_tables = r.paths("tables.text");
  c.object_text_tables = r.paths("tables.object_text");
  if (const json* attrs = r.find("tables.attributes")) {
    if (!attrs->is_object()) throw ConfigError("tables.attributes", "expected {name: path}");
    for (const auto& [name, v] : attrs->items()) c.attribute_tables[name] = r.path("tables.attributes." + name);
  }
  c.object_frequencies = r.optional_path("frequencies.objects");
  c.predicate_frequencies = r.optional_path("frequencies.predicates");

  c.selection.t_vis = r.get("selection.t_vis", c.selection.t_vis);
  c.selection.t_box = r.get("selection.t_box", c.selection.t_box);
  c.selection.t_occ = r.get("selection.t_occ", c.selection.t_occ);
  c.selection.k = r.get("selection.k_frames", c.selection.k);
  with_prefix("selection", [&] { c.selection.validate(); });

  c.scales = r.get("features.scales", kDefaultCropScales);
  if (c.scales.empty()) throw ConfigError("features.scales", "needs at least one scale");
  for (float s : c.scales)
    if (!(s >= 1.0f)) throw ConfigError("features.scales", "scales must be >= 1");
  if (const json* d = r.find("graph.max_edge_distance")) {
    if (!d->is_number() || d->get<double>() <= 0) throw ConfigError("graph.max_edge_distance", "must be a positive number");
    c.max_edge_distance = d->get<double>();
  }

  c.model = with_prefix("model", [&] { return GraphNetConfig::from_json(j.value("model", json::object())); });
  c.train = with_prefix("train", [&] { return TrainConfig::from_json(j.value("train", json::object())); });
  c.checkpoint = r.path("checkpoint", c.work_dir / "model.o3ck");
  c.log_every = r.get("train.log_every", c.log_every);
  if (c.log_every < 1) throw ConfigError("train.log_every", "must be >= 1");

  const int top_k = r.get("inference.top_k", 0);
  if (top_k < 0) throw ConfigError("inference.top_k", "must be >= 0 (0 keeps full rankings)");
  c.top_k = std::size_t(top_k);
  c.use_gt_labels = r.get("inference.use_gt_labels", false);
  c.decoder.type = r.get("inference.decoder.type", c.decoder.type);
  if (c.decoder.type != "nearest" && c.decoder.type != "http") {
    throw ConfigError("inference.decoder.type", "must be \"nearest\" or \"http\"");
  }
  c.decoder.endpoint = r.get("inference.decoder.endpoint", c.decoder.endpoint);
  c.decoder.timeout_s = r.get("inference.decoder.timeout_s", c.decoder.timeout_s);
  c.decoder.max_in_flight = r.get("inference.decoder.max_in_flight", c.decoder.max_in_flight);
  c.decoder.fallback = r.get("inference.decoder.fallback", c.decoder.fallback);
  if (!(c.decoder.timeout_s > 0)) throw ConfigError("inference.decoder.timeout_s", "must be positive");
  if (c.decoder.max_in_flight < 1) throw ConfigError("inference.decoder.max_in_flight", "must be >= 1");
  if (c.decoder.type == "http" && c.decoder.endpoint.empty()) {
    throw ConfigError("inference.decoder.endpoint", "required when the decoder type is http");
  }

  auto ks = [&](const char* key, std::vector<std::size_t> fallback) {
    auto v = r.get(key, fallback);
    for (auto k : v)
      if (k == 0) throw ConfigError(key, "k values must be >= 1");
    return v;
  };
  c.eval.object_k = ks("eval.object_k", c.eval.object_k);
  c.eval.predicate_k = ks("eval.predicate_k", c.eval.predicate_k);
  c.eval.triplet_k = ks("eval.triplet_k", c.eval.triplet_k);
  c.report = r.path("eval.report", c.work_dir / "report.json");

  c.fixture = FixtureSpec::from_json(j.value("fixture", json::object()));
  c.fixture_out = r.path("fixture.out_dir", ".");
  c.repl_scene = r.get<std::string>("repl.scene", "");
  return c;
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError(std::string(assignment), "override must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty key segment");
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object value");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return PipelineConfig::from_json(j, fs::absolute(path).parent_path());
}

fs::path scene_work_dir(const PipelineConfig& cfg, const Scene& scene) { return cfg.work_dir / "scenes" / scene.name; }

std::shared_ptr<const RelationshipDecoder> make_decoder(const PipelineConfig& cfg) {
  auto nearest = [&] { return std::make_shared<NearestNeighborDecoder>(read_table(cfg.predicate_table)); };
  if (cfg.decoder.type == "nearest") return nearest();
  auto http = std::make_shared<HttpDecoder>(
      HttpDecoderOptions{cfg.decoder.endpoint, cfg.decoder.timeout_s, cfg.decoder.max_in_flight});
  if (cfg.decoder.fallback) return std::make_shared<FallbackDecoder>(http, nearest());
  return http;
}

// ---------------------------------------------------------------------------

FixtureSummary cmd_gen_fixture(const PipelineConfig& cfg, std::ostream& log) {
  const auto summary = generate_fixture(cfg.fixture, cfg.fixture_out);
  log << "fixture: " << summary.train_manifests.size() << " training scenes, " << summary.heldout_manifests.size()
      << " held-out copies\nconfig: " << summary.config.string() << '\n';
  return summary;
}

void cmd_select_frames(const PipelineConfig& cfg, std::ostream& log) {
  for (const auto& path : all_scenes(cfg)) {
    const auto scene = load_scene(path);
    const auto frames = load_frames(scene.manifest);
    const VisibilityTable table(scene.cloud, scene.instances, frames, cfg.selection.t_occ);
    const auto sel = select_frames(table, skeleton_for(cfg, scene), cfg.selection);
    const auto out = scene_work_dir(cfg, scene) / "selection.json";
    write_text(out, selection_to_json(sel));
    std::size_t empty = 0;
    for (const auto& [id, f] : sel.objects) empty += f.empty();
    log << scene.name << ": " << sel.objects.size() << " objects (" << empty << " without frames), "
        << sel.pairs.size() << " pairs -> " << out.string() << '\n';
  }
}

void cmd_extract(const PipelineConfig& cfg, std::ostream& log) {
  for (const auto& path : all_scenes(cfg)) {
    const auto scene = load_scene(path);
    const auto dir = scene_work_dir(cfg, scene);
    const auto sel_path = require_file(dir / "selection.json", "frame selection");
    const auto sel = selection_from_json(io::read_file(sel_path));
    const auto frames = load_frames(scene.manifest);
    const VisibilityTable table(scene.cloud, scene.instances, frames, cfg.selection.t_occ);
    const auto pixels = GridPixelEmbedder::from_manifest(scene.manifest);
    if (!scene.manifest.crop_embeddings) throw DataError("scene " + scene.name + " has no crop_embeddings entry");
    const CachedCropEmbedder crops(read_crop_cache(*scene.manifest.crop_embeddings));
    const auto targets = aggregate_targets(table, sel, pixels, crops, cfg.scales);
    write_targets(dir / "targets.o3ft", targets);
    std::size_t missing = 0;
    for (const auto& [id, t] : targets.nodes) missing += !t.value;
    for (const auto& [e, t] : targets.edges) missing += !t.value;
    log << scene.name << ": targets for " << targets.nodes.size() << " nodes and " << targets.edges.size()
        << " edges (" << missing << " missing)\n";
  }
}

std::vector<EpochRecord> cmd_train(const PipelineConfig& cfg, std::ostream& log) {
  if (cfg.train_scenes.empty()) throw ConfigError("scenes.train", "no training scenes configured");
  std::vector<TrainSample> samples;
  for (const auto& path : cfg.train_scenes) {
    const auto scene = load_scene(path);
    const auto skeleton = skeleton_for(cfg, scene);
    TrainSample s;
    s.name = scene.name;
    s.inputs = prepare_inputs(scene.cloud, scene.instances, skeleton, cfg.model);
    const auto targets = read_targets(require_file(scene_work_dir(cfg, scene) / "targets.o3ft", "2D targets"));
    s.targets = make_targets(targets, s.inputs, cfg.model);
    samples.push_back(std::move(s));
  }
  auto state = init_train_state(cfg.model, cfg.train);
  const auto history = train(state, samples, std::uint32_t(cfg.train.epochs), [&](const TrainState&, const EpochRecord& r) {
    if (r.epoch == 1 || r.epoch % std::uint32_t(cfg.log_every) == 0 || int(r.epoch) == cfg.train.epochs) {
      log << "epoch " << r.epoch << "  lr " << r.lr << "  loss " << fmt(r.mean_loss) << '\n';
    }
  });
  write_checkpoint(cfg.checkpoint, state);

  const GraphNet net(state.model);
  double final_loss = 0;
  for (const auto& s : samples) final_loss += evaluate_loss(net, state.params, s);
  final_loss /= double(samples.size());
  json hist = json::array();
  for (const auto& r : history) hist.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"loss", r.mean_loss}});
  write_text(cfg.work_dir / "train_log.json",
             json{{"config", cfg.raw}, {"history", hist}, {"final_loss", final_loss}}.dump(2) + "\n");
  log << "final loss " << fmt(final_loss) << "  checkpoint " << cfg.checkpoint.string() << '\n';
  return history;
}

void cmd_infer(const PipelineConfig& cfg, std::ostream& log) {
  const auto state = read_checkpoint(cfg.checkpoint);
  const auto decoder = make_decoder(cfg);
  const auto objects = read_table(cfg.object_table);
  const auto lookup = read_table(cfg.lookup_table);
  auto text_tables = read_tables(cfg.text_tables);
  if (text_tables.empty()) text_tables.push_back(lookup);
  const TableTextEmbedder lookup_text(std::move(text_tables));
  std::size_t total_failed = 0;
  for (const auto& path : cfg.eval_scenes) {
    const auto scene = load_scene(path);
    const auto graph = infer_scene(cfg, state, scene, *decoder, objects, lookup, lookup_text);
    auto j = graph.to_json();
    j["scene"] = scene.name;
    j["config"] = cfg.raw;
    const auto out = scene_work_dir(cfg, scene) / "graph.json";
    write_text(out, j.dump() + "\n");
    std::size_t failed = 0;
    for (const auto& e : graph.edges) failed += !e.phrase;
    log << scene.name << ": " << graph.nodes.size() << " nodes, " << graph.edges.size() << " edges";
    if (failed) log << " (" << failed << " failed decodes)";
    log << " -> " << out.string() << '\n';
    total_failed += failed;
  }
  // Graphs are written with explicit failure markers; the exit status still
  // reports that the external service misbehaved.
  if (total_failed) throw DecoderError(std::to_string(total_failed) + " relationship decodes failed");
}

json cmd_eval(const PipelineConfig& cfg, std::ostream& log) {
  std::vector<SceneEval> scenes;
  for (const auto& path : cfg.eval_scenes) {
    const auto scene = load_scene(path);
    if (!scene.manifest.ground_truth) throw DataError("scene " + scene.name + " has no ground_truth entry");
    SceneEval s;
    s.name = scene.name;
    s.gt = read_ground_truth(*scene.manifest.ground_truth);
    const auto graph_path = require_file(scene_work_dir(cfg, scene) / "graph.json", "predicted graph");
    s.graph = PredictedSceneGraph::from_json(read_json_file(graph_path, "graph"));
    scenes.push_back(std::move(s));
  }
  EvalConfig ec = cfg.eval;
  if (cfg.object_frequencies) ec.object_frequencies = read_frequencies(*cfg.object_frequencies);
  if (cfg.predicate_frequencies) ec.predicate_frequencies = read_frequencies(*cfg.predicate_frequencies);
  std::map<std::string, EmbeddingTable> attrs;
  for (const auto& [name, p] : cfg.attribute_tables) attrs[name] = read_table(p);
  auto report = evaluate(scenes, ec, attrs);
  report["config"] = cfg.raw;
  write_text(cfg.report, report.dump(2) + "\n");
  auto csv_path = cfg.report;
  csv_path.replace_extension(".csv");
  write_text(csv_path, report_csv(report));
  for (const char* section : {"objects", "predicates", "triplets"}) {
    if (!report.contains(section)) continue;
    log << section << ':';
    for (const auto& [k, v] : report[section].items())
      if (v.is_number() && k != "count") log << "  " << k << ' ' << fmt(v.get<double>());
    log << '\n';
  }
  log << "report: " << cfg.report.string() << '\n';
  return report;
}

// ---------------------------------------------------------------------------

QuerySession::QuerySession(const PipelineConfig& cfg, const std::string& scene_name) : cfg_(cfg) {
  const auto state = read_checkpoint(cfg.checkpoint);
  decoder_ = make_decoder(cfg);
  objects_ = read_table(cfg.object_table);
  lookup_ = read_table(cfg.lookup_table);
  for (const auto& [name, p] : cfg.attribute_tables) attributes_[name] = read_table(p);
  auto text_tables = read_tables(cfg.text_tables);
  if (text_tables.empty()) text_tables.push_back(lookup_);
  lookup_text_ = std::make_unique<TableTextEmbedder>(std::move(text_tables));
  auto object_tables = read_tables(cfg.object_text_tables);
  object_tables.insert(object_tables.begin(), objects_);
  object_text_ = std::make_unique<TableTextEmbedder>(std::move(object_tables));
  const auto scene = find_scene(cfg, scene_name);
  graph_ = infer_scene(cfg, state, scene, *decoder_, objects_, lookup_, *lookup_text_);
}

std::vector<std::string> split_command(std::string_view line) {
  std::vector<std::string> words;
  std::string cur;
  bool quoted = false, have = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      have = true;
    } else if (!quoted && std::isspace(static_cast<unsigned char>(ch))) {
      if (have) words.push_back(std::move(cur));
      cur.clear();
      have = false;
    } else {
      cur.push_back(ch);
      have = true;
    }
  }
  if (quoted) throw DataError("unterminated quote");
  if (have) words.push_back(std::move(cur));
  return words;
}

bool QuerySession::execute(std::string_view line, std::ostream& out) const {
  auto parse_id = [](const std::string& s) -> InstanceId {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw DataError("not a node id: " + s);
    return InstanceId(v);
  };
  auto parse_k = [](const std::vector<std::string>& w, std::size_t at) -> std::size_t {
    if (w.size() <= at) return 0;
    try {
      const long k = std::stol(w[at]);
      if (k < 1) throw std::out_of_range("k");
      return std::size_t(k);
    } catch (const std::logic_error&) {
      throw DataError("k must be a positive integer");
    }
  };

  try {
    const auto w = split_command(line);
    if (w.empty()) return true;
    const auto& cmd = w[0];
    if (cmd == "quit" || cmd == "exit") return false;
    if (cmd == "help") {
      out << "classify <node-id> [k]\nquery \"<text>\" [k]\nrelate <i> <j>\n"
             "localize \"<subject>\" \"<predicate>\" \"<object>\"\nattr <node-id> <table>\nnodes\nquit\n";
    } else if (cmd == "nodes") {
      for (const auto& n : graph_.nodes) out << n.id << '\t' << (n.labels.empty() ? "?" : n.labels.front().label) << '\n';
    } else if (cmd == "classify" && (w.size() == 2 || w.size() == 3)) {
      const auto& n = graph_.node(parse_id(w[1]));
      const auto k = parse_k(w, 2);
      print_ranking(out, classify_node(n.feature, objects_, k));
    } else if (cmd == "query" && (w.size() == 2 || w.size() == 3)) {
      if (!object_text_->knows(w[1])) {
        out << "error\tquery disabled for \"" << w[1]
            << "\": not in the object table or tables.object_text (no text encoder is bundled)\n";
        return true;
      }
      for (const auto& s : query_nodes(graph_, w[1], *object_text_, parse_k(w, 2))) out << s.id << '\t' << fmt(s.score) << '\n';
    } else if (cmd == "relate" && w.size() == 3) {
      const auto i = parse_id(w[1]), j = parse_id(w[2]);
      const auto* e = graph_.find_edge(i, j);
      if (!e) throw DataError("no edge " + w[1] + " -> " + w[2]);
      DecodeRequest req;
      req.edge_feature = e->feature;
      req.subject = graph_.node(i).labels.empty() ? "object" : graph_.node(i).labels.front().label;
      req.object = graph_.node(j).labels.empty() ? "object" : graph_.node(j).labels.front().label;
      req.prompt = render_prompt(req.subject, req.object);
      const auto phrase = decoder_->decode(req);
      out << "phrase\t" << phrase << '\n';
      print_ranking(out, map_to_label_set(phrase, lookup_, *lookup_text_, cfg_.top_k ? cfg_.top_k : 5));
    } else if (cmd == "localize" && w.size() == 4) {
      const auto best = localize_triplet(graph_, {w[1], w[2], w[3]}, *object_text_, *lookup_text_);
      out << best.i << '\t' << best.j << '\t' << fmt(best.score) << '\n';
    } else if (cmd == "attr" && w.size() == 3) {
      const auto& n = graph_.node(parse_id(w[1]));
      auto it = attributes_.find(w[2]);
      if (it == attributes_.end()) throw DataError("unknown attribute table \"" + w[2] + "\"");
      print_ranking(out, query_attribute(n.feature, it->second));
    } else {
      out << "error\tunknown command or wrong arguments: " << line << " (try help)\n";
    }
  } catch (const std::exception& e) {
    out << "error\t" << e.what() << '\n';
  }
  return true;
}

void cmd_repl(const PipelineConfig& cfg, std::istream& in, std::ostream& out, std::ostream& log) {
  std::string scene = cfg.repl_scene;
  if (scene.empty()) {
    if (cfg.eval_scenes.empty()) throw ConfigError("repl.scene", "no scene configured");
    scene = cfg.eval_scenes.front().parent_path().filename().string();
  }
  const QuerySession session(cfg, scene);
  log << "scene " << scene << ": " << session.graph().nodes.size() << " nodes, " << session.graph().edges.size()
      << " edges. Type help for commands.\n";
  for (std::string line; std::getline(in, line);) {
    if (!session.execute(line, out)) break;
    out.flush();
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const DecoderError*>(&e)) return 3;
  return 2;
}

}  // namespace o3dsg
