#include "o3dsg/graph_net.hpp"

#include <cmath>
#include <random>

#include "o3dsg/errors.hpp"

namespace o3dsg {

using nlohmann::json;

void GraphNetConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v < 1) throw ConfigError(field, "must be >= 1");
  };
  positive(feature_width, "feature_width");
  positive(hidden, "hidden");
  for (int w : encoder_widths) positive(w, "encoder_widths");
  if (gnn_layers < 0) throw ConfigError("gnn_layers", "must be >= 0");
  positive(node_head_layers, "node_head_layers");
  positive(node_head_width, "node_head_width");
  positive(edge_tokens, "edge_tokens");
  positive(edge_token_width, "edge_token_width");
  if (edge_head_blocks < 0) throw ConfigError("edge_head_blocks", "must be >= 0");
  positive(d_obj, "d_obj");
  positive(d_rel, "d_rel");
  positive(node_point_budget, "node_point_budget");
  positive(edge_point_budget, "edge_point_budget");
}

json GraphNetConfig::to_json() const {
  return json{{"feature_width", feature_width},   {"hidden", hidden},
              {"encoder_widths", encoder_widths}, {"gnn_layers", gnn_layers},
              {"node_head_layers", node_head_layers}, {"node_head_width", node_head_width},
              {"edge_tokens", edge_tokens},       {"edge_token_width", edge_token_width},
              {"edge_head_blocks", edge_head_blocks}, {"d_obj", d_obj},
              {"d_rel", d_rel},                   {"linear_heads", linear_heads},
              {"node_point_budget", node_point_budget}, {"edge_point_budget", edge_point_budget}};
}

GraphNetConfig GraphNetConfig::from_json(const json& j) {
  GraphNetConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw ConfigError(key, e.what());
    }
  };
  get("feature_width", c.feature_width);
  get("hidden", c.hidden);
  get("encoder_widths", c.encoder_widths);
  get("gnn_layers", c.gnn_layers);
  get("node_head_layers", c.node_head_layers);
  get("node_head_width", c.node_head_width);
  get("edge_tokens", c.edge_tokens);
  get("edge_token_width", c.edge_token_width);
  get("edge_head_blocks", c.edge_head_blocks);
  get("d_obj", c.d_obj);
  get("d_rel", c.d_rel);
  get("linear_heads", c.linear_heads);
  get("node_point_budget", c.node_point_budget);
  get("edge_point_budget", c.edge_point_budget);
  c.validate();
  return c;
}

GraphNetConfig GraphNetConfig::full_scale() {
  GraphNetConfig c;
  c.feature_width = 1024;
  c.hidden = 2048;
  c.encoder_widths = {64, 128, 256};
  c.gnn_layers = 5;
  c.node_head_layers = 5;
  c.node_head_width = 768;
  c.edge_tokens = 8;
  c.edge_token_width = 176;
  c.edge_head_blocks = 5;
  c.d_obj = 768;
  c.d_rel = 1408;
  return c;
}

Parameter& ParamStore::at(std::string_view name) {
  for (auto& p : items)
    if (p.name == name) return p;
  throw DataError("no parameter named " + std::string(name));
}

const Parameter& ParamStore::at(std::string_view name) const {
  for (const auto& p : items)
    if (p.name == name) return p;
  throw DataError("no parameter named " + std::string(name));
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : items) n += p.value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Inputs

std::vector<std::size_t> farthest_point_subsample(const std::vector<Point3>& points, std::size_t budget) {
  const std::size_t n = points.size();
  std::vector<std::size_t> out;
  if (n == 0 || budget == 0) return out;
  if (n <= budget) {
    out.resize(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = k;
    return out;
  }
  double cx = 0, cy = 0, cz = 0;
  for (const auto& p : points) {
    cx += p.x;
    cy += p.y;
    cz += p.z;
  }
  cx /= double(n);
  cy /= double(n);
  cz /= double(n);
  auto dist2 = [](const Point3& a, double x, double y, double z) {
    return (a.x - x) * (a.x - x) + (a.y - y) * (a.y - y) + (a.z - z) * (a.z - z);
  };
  std::size_t start = 0;
  double best = -1;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = dist2(points[k], cx, cy, cz);
    if (d > best) {
      best = d;
      start = k;
    }
  }
  std::vector<double> nearest(n, INFINITY);
  std::size_t current = start;
  out.reserve(budget);
  for (std::size_t picked = 0; picked < budget; ++picked) {
    out.push_back(current);
    const auto& c = points[current];
    std::size_t next = 0;
    double far = -1;
    for (std::size_t k = 0; k < n; ++k) {
      nearest[k] = std::min(nearest[k], dist2(points[k], c.x, c.y, c.z));
      if (nearest[k] > far) {
        far = nearest[k];
        next = k;
      }
    }
    current = next;
  }
  return out;
}

SceneInputs prepare_inputs(const ScenePointCloud& cloud, const InstanceSet& inst,
                           const SceneGraphSkeleton& skeleton, const GraphNetConfig& config) {
  SceneInputs in;
  in.nodes = skeleton.nodes;
  in.edges = skeleton.edges;

  std::vector<float> node_rows;
  in.node_offsets.push_back(0);
  for (auto id : skeleton.nodes) {
    const auto& idx = inst.points_of(id);
    std::vector<Point3> pts;
    pts.reserve(idx.size());
    for (auto p : idx) pts.push_back(cloud.points[p]);
    double c[3] = {0, 0, 0};
    for (const auto& p : pts)
      for (int a = 0; a < 3; ++a) c[a] += p[a];
    for (double& v : c) v /= double(pts.size());
    const auto keep = farthest_point_subsample(pts, std::size_t(config.node_point_budget));
    double max_norm = 0;
    for (auto k : keep) {
      double n2 = 0;
      for (int a = 0; a < 3; ++a) n2 += (pts[k][a] - c[a]) * (pts[k][a] - c[a]);
      max_norm = std::max(max_norm, std::sqrt(n2));
    }
    const double s = max_norm > 0 ? 1.0 / max_norm : 1.0;
    for (auto k : keep)
      for (int a = 0; a < 3; ++a) node_rows.push_back(float((pts[k][a] - c[a]) * s));
    in.node_offsets.push_back(in.node_offsets.back() + int(keep.size()));
  }
  in.node_points = Tensor<float>(in.node_offsets.back(), 3);
  in.node_points.data = std::move(node_rows);

  std::vector<float> edge_rows;
  in.edge_offsets.push_back(0);
  for (const auto& e : skeleton.edges) {
    const auto pair = build_pair_set(cloud, inst, e.i, e.j);
    const auto center = pair.union_box.center();
    const auto keep = farthest_point_subsample(pair.points, std::size_t(config.edge_point_budget));
    for (auto k : keep) {
      for (int a = 0; a < 3; ++a) edge_rows.push_back(float(pair.points[k][a] - center[a]));
      edge_rows.push_back(float(pair.mask_channel[k]));
    }
    in.edge_offsets.push_back(in.edge_offsets.back() + int(keep.size()));
    in.edge_src.push_back(int(*skeleton.node_index(e.i)));
    in.edge_dst.push_back(int(*skeleton.node_index(e.j)));
  }
  in.edge_points = Tensor<float>(in.edge_offsets.back(), 4);
  in.edge_points.data = std::move(edge_rows);
  return in;
}

SceneTargets make_targets(const FusedTargets& targets, const SceneInputs& inputs, const GraphNetConfig& config) {
  if (int(targets.d_obj) != config.d_obj) {
    throw DataError("target D_obj " + std::to_string(targets.d_obj) + " does not match model d_obj " +
                    std::to_string(config.d_obj));
  }
  if (int(targets.d_rel) != config.d_rel) {
    throw DataError("target D_rel " + std::to_string(targets.d_rel) + " does not match model d_rel " +
                    std::to_string(config.d_rel));
  }
  SceneTargets st;
  st.node_targets = Tensor<float>(int(inputs.nodes.size()), config.d_obj);
  st.node_present.assign(inputs.nodes.size(), 0);
  for (std::size_t n = 0; n < inputs.nodes.size(); ++n) {
    auto it = targets.nodes.find(inputs.nodes[n]);
    if (it == targets.nodes.end() || !it->second.value) continue;
    std::copy(it->second.value->begin(), it->second.value->end(), st.node_targets.row(int(n)).begin());
    st.node_present[n] = 1;
  }
  st.edge_targets = Tensor<float>(int(inputs.edges.size()), config.d_rel);
  st.edge_present.assign(inputs.edges.size(), 0);
  for (std::size_t e = 0; e < inputs.edges.size(); ++e) {
    auto it = targets.edges.find(inputs.edges[e]);
    if (it == targets.edges.end() || !it->second.value) continue;
    std::copy(it->second.value->begin(), it->second.value->end(), st.edge_targets.row(int(e)).begin());
    st.edge_present[e] = 1;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Architecture

GraphNet::GraphNet(GraphNetConfig config) : config_(std::move(config)) {
  config_.validate();
  using Init = ParamSpec::Init;
  const int F = config_.feature_width;

  for (const char* enc : {"node_encoder", "edge_encoder"}) {
    int in = std::string(enc) == "node_encoder" ? 3 : 4;
    int layer = 0;
    for (int w : config_.encoder_widths) {
      add_linear(std::string(enc) + ".l" + std::to_string(layer++), in, w, Init::kHe);
      in = w;
    }
    add_linear(std::string(enc) + ".l" + std::to_string(layer), in, F, Init::kXavier);
  }
  for (int k = 0; k < config_.gnn_layers; ++k) {
    const std::string prefix = "gnn." + std::to_string(k);
    add_linear(prefix + ".fc1", 3 * F, config_.hidden, Init::kHe);
    add_linear(prefix + ".fc2", config_.hidden, 3 * F, Init::kXavier);
  }
  int in = F;
  for (int l = 0; l + 1 < config_.node_head_layers; ++l) {
    const std::string prefix = "node_head.l" + std::to_string(l);
    add_linear(prefix, in, config_.node_head_width, Init::kHe);
    if (!config_.linear_heads) {
      add(prefix + ".ln_gain", 1, config_.node_head_width, 1, Init::kOne);
      add(prefix + ".ln_bias", 1, config_.node_head_width, 1, Init::kZero);
    }
    in = config_.node_head_width;
  }
  add_linear("node_head.l" + std::to_string(config_.node_head_layers - 1), in, config_.d_obj, Init::kXavier);

  const int T = config_.edge_tokens, d = config_.edge_token_width;
  add_linear("edge_head.expand", F, T * d, Init::kXavier);
  for (int b = 0; b < config_.edge_head_blocks; ++b) {
    const std::string prefix = "edge_head.block" + std::to_string(b);
    for (const char* m : {".wq", ".wk", ".wv", ".wo"}) add(prefix + m, d, d, 2, Init::kXavier);
    add(prefix + ".ln1_gain", 1, d, 1, Init::kOne);
    add(prefix + ".ln1_bias", 1, d, 1, Init::kZero);
    add_linear(prefix + ".ffn1", d, 2 * d, Init::kHe);
    add_linear(prefix + ".ffn2", 2 * d, d, Init::kXavier);
    add(prefix + ".ln2_gain", 1, d, 1, Init::kOne);
    add(prefix + ".ln2_bias", 1, d, 1, Init::kZero);
  }
  add_linear("edge_head.out", d, config_.d_rel, Init::kXavier);
}

void GraphNet::add(std::string name, int rows, int cols, int rank, ParamSpec::Init init) {
  index_[name] = int(specs_.size());
  specs_.push_back({std::move(name), rows, cols, rank, init});
}

void GraphNet::add_linear(const std::string& prefix, int in, int out, ParamSpec::Init init) {
  add(prefix + ".weight", in, out, 2, init);
  add(prefix + ".bias", 1, out, 1, ParamSpec::Init::kZero);
}

int GraphNet::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("no parameter named " + std::string(name));
  return it->second;
}

namespace {
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace

ParamStore GraphNet::init_params(std::uint64_t seed) const {
  ParamStore store;
  for (const auto& s : specs_) {
    Parameter p{s.name, s.rank, Tensor<float>(s.rows, s.cols)};
    std::mt19937_64 rng(seed ^ fnv1a(s.name));
    double stddev = 0;
    switch (s.init) {
      case ParamSpec::Init::kHe: stddev = std::sqrt(2.0 / s.rows); break;
      case ParamSpec::Init::kXavier: stddev = std::sqrt(2.0 / (s.rows + s.cols)); break;
      case ParamSpec::Init::kZero: break;
      case ParamSpec::Init::kOne: std::fill(p.value.data.begin(), p.value.data.end(), 1.0f); break;
    }
    if (stddev > 0) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (auto& v : p.value.data) v = float(dist(rng));
    }
    store.items.push_back(std::move(p));
  }
  return store;
}

void GraphNet::check_params(const ParamStore& params) const {
  if (params.items.size() != specs_.size()) {
    throw ParseError("parameters", "expected " + std::to_string(specs_.size()) + " tensors, found " +
                                       std::to_string(params.items.size()));
  }
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    const auto& s = specs_[k];
    const auto& p = params.items[k];
    if (p.name != s.name) throw ParseError("parameters[" + std::to_string(k) + "].name", "expected " + s.name + ", found " + p.name);
    if (p.value.rows != s.rows || p.value.cols != s.cols || p.rank != s.rank) {
      throw ParseError(s.name + ".shape", "expected " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                                              ", found " + std::to_string(p.value.rows) + "x" +
                                              std::to_string(p.value.cols));
    }
  }
}

template <typename T>
BoundParams<T> GraphNet::bind(Tape<T>& tape, const ParamStore& params) const {
  check_params(params);
  BoundParams<T> out;
  out.reserve(params.items.size());
  for (const auto& p : params.items) out.push_back(tape.leaf(p.value.template cast<T>()));
  return out;
}

template <typename T>
std::pair<typename Tape<T>::Var, typename Tape<T>::Var> GraphNet::encode(Tape<T>& tape, const BoundParams<T>& p,
                                                                         const SceneInputs& in) const {
  auto run = [&](const std::string& enc, const Tensor<float>& points, const std::vector<int>& offsets) {
    auto x = tape.leaf(points.template cast<T>());
    const int layers = int(config_.encoder_widths.size());
    for (int l = 0; l <= layers; ++l) {
      const std::string prefix = enc + ".l" + std::to_string(l);
      x = tape.linear(x, p[index_of(prefix + ".weight")], p[index_of(prefix + ".bias")]);
      if (l < layers) x = tape.relu(x);
    }
    return tape.segment_max(x, offsets);
  };
  return {run("node_encoder", in.node_points, in.node_offsets), run("edge_encoder", in.edge_points, in.edge_offsets)};
}

template <typename T>
std::pair<typename Tape<T>::Var, typename Tape<T>::Var> GraphNet::propagate(Tape<T>& tape, const BoundParams<T>& p,
                                                                            typename Tape<T>::Var nodes,
                                                                            typename Tape<T>::Var edges,
                                                                            const SceneInputs& in, int layers) const {
  const int K = layers >= 0 ? layers : config_.gnn_layers;
  const int F = config_.feature_width;
  std::vector<int> targets = in.edge_src;
  targets.insert(targets.end(), in.edge_dst.begin(), in.edge_dst.end());
  for (int k = 0; k < K; ++k) {
    const std::string prefix = "gnn." + std::to_string(k);
    auto triplet = tape.concat_cols({tape.gather_rows(nodes, in.edge_src), edges, tape.gather_rows(nodes, in.edge_dst)});
    auto h = tape.relu(tape.linear(triplet, p[index_of(prefix + ".fc1.weight")], p[index_of(prefix + ".fc1.bias")]));
    auto out = tape.linear(h, p[index_of(prefix + ".fc2.weight")], p[index_of(prefix + ".fc2.bias")]);
    auto subject = tape.slice_cols(out, 0, F);
    auto relation = tape.slice_cols(out, F, F);
    auto object = tape.slice_cols(out, 2 * F, F);
    nodes = tape.scatter_mean(tape.concat_rows({subject, object}), targets, nodes);
    edges = relation;
  }
  return {nodes, edges};
}

template <typename T>
typename Tape<T>::Var GraphNet::node_head(Tape<T>& tape, const BoundParams<T>& p, typename Tape<T>::Var x) const {
  for (int l = 0; l < config_.node_head_layers; ++l) {
    const std::string prefix = "node_head.l" + std::to_string(l);
    x = tape.linear(x, p[index_of(prefix + ".weight")], p[index_of(prefix + ".bias")]);
    if (l + 1 < config_.node_head_layers && !config_.linear_heads) {
      x = tape.layer_norm(x, p[index_of(prefix + ".ln_gain")], p[index_of(prefix + ".ln_bias")]);
      x = tape.relu(x);
    }
  }
  return x;
}

template <typename T>
typename Tape<T>::Var GraphNet::edge_head(Tape<T>& tape, const BoundParams<T>& p, typename Tape<T>::Var x) const {
  const int T_ = config_.edge_tokens, d = config_.edge_token_width;
  const int E = tape.value(x).rows;
  x = tape.linear(x, p[index_of("edge_head.expand.weight")], p[index_of("edge_head.expand.bias")]);
  x = tape.reshape(x, E * T_, d);
  const auto tags = positional_tags(T_, d);
  Tensor<T> tiled(E * T_, d);
  for (int e = 0; e < E; ++e)
    for (int t = 0; t < T_; ++t)
      for (int c = 0; c < d; ++c) tiled(e * T_ + t, c) = static_cast<T>(tags(t, c));
  x = tape.add(x, tape.leaf(std::move(tiled)));
  for (int b = 0; b < config_.edge_head_blocks; ++b) {
    const std::string prefix = "edge_head.block" + std::to_string(b);
    auto w = [&](const char* m) { return p[index_of(prefix + m)]; };
    auto attn = tape.block_attention(tape.matmul(x, w(".wq")), tape.matmul(x, w(".wk")), tape.matmul(x, w(".wv")), T_);
    x = tape.layer_norm(tape.add(x, tape.matmul(attn, w(".wo"))), w(".ln1_gain"), w(".ln1_bias"));
    auto f = tape.relu(tape.linear(x, w(".ffn1.weight"), w(".ffn1.bias")));
    f = tape.linear(f, w(".ffn2.weight"), w(".ffn2.bias"));
    x = tape.layer_norm(tape.add(x, f), w(".ln2_gain"), w(".ln2_bias"));
  }
  std::vector<int> offsets(std::size_t(E) + 1);
  for (int e = 0; e <= E; ++e) offsets[e] = e * T_;
  x = tape.segment_mean(x, std::move(offsets));
  return tape.linear(x, p[index_of("edge_head.out.weight")], p[index_of("edge_head.out.bias")]);
}

template <typename T>
ForwardVars<T> GraphNet::forward(Tape<T>& tape, const BoundParams<T>& p, const SceneInputs& in) const {
  ForwardVars<T> f;
  std::tie(f.node_initial, f.edge_initial) = encode(tape, p, in);
  std::tie(f.node_refined, f.edge_refined) = propagate(tape, p, f.node_initial, f.edge_initial, in);
  f.node_pred = node_head(tape, p, f.node_refined);
  f.edge_pred = edge_head(tape, p, f.edge_refined);
  return f;
}

Tensor<float> positional_tags(int tokens, int width) {
  Tensor<float> tags(tokens, width);
  for (int t = 0; t < tokens; ++t) {
    for (int c = 0; c < width; ++c) {
      const double freq = std::pow(10000.0, -double(c - c % 2) / width);
      tags(t, c) = float(c % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq));
    }
  }
  return tags;
}

template <typename T>
typename Tape<T>::Var distill_loss(Tape<T>& tape, const ForwardVars<T>& fwd, const SceneTargets& targets) {
  const bool any_node = std::any_of(targets.node_present.begin(), targets.node_present.end(), [](auto v) { return v != 0; });
  const bool any_edge = std::any_of(targets.edge_present.begin(), targets.edge_present.end(), [](auto v) { return v != 0; });
  if (!any_node && !any_edge) throw DataError("distillation loss needs at least one present target");
  std::optional<typename Tape<T>::Var> loss;
  if (any_node) {
    loss = tape.cosine_distill(fwd.node_pred, targets.node_targets.template cast<T>(), targets.node_present);
  }
  if (any_edge) {
    auto e = tape.cosine_distill(fwd.edge_pred, targets.edge_targets.template cast<T>(), targets.edge_present);
    loss = loss ? tape.add(*loss, e) : e;
  }
  return *loss;
}

Predictions predict(const GraphNet& net, const ParamStore& params, const SceneInputs& inputs) {
  Tape<float> tape;
  const auto p = net.bind(tape, params);
  const auto f = net.forward(tape, p, inputs);
  return {tape.value(f.node_pred), tape.value(f.edge_pred)};
}

#define O3DSG_INSTANTIATE(T)                                                                                  \
  template BoundParams<T> GraphNet::bind(Tape<T>&, const ParamStore&) const;                                  \
  template std::pair<Tape<T>::Var, Tape<T>::Var> GraphNet::encode(Tape<T>&, const BoundParams<T>&,            \
                                                                  const SceneInputs&) const;                  \
  template std::pair<Tape<T>::Var, Tape<T>::Var> GraphNet::propagate(                                         \
      Tape<T>&, const BoundParams<T>&, Tape<T>::Var, Tape<T>::Var, const SceneInputs&, int) const;            \
  template Tape<T>::Var GraphNet::node_head(Tape<T>&, const BoundParams<T>&, Tape<T>::Var) const;             \
  template Tape<T>::Var GraphNet::edge_head(Tape<T>&, const BoundParams<T>&, Tape<T>::Var) const;             \
  template ForwardVars<T> GraphNet::forward(Tape<T>&, const BoundParams<T>&, const SceneInputs&) const;       \
  template Tape<T>::Var distill_loss(Tape<T>&, const ForwardVars<T>&, const SceneTargets&);

O3DSG_INSTANTIATE(float)
O3DSG_INSTANTIATE(double)

#undef O3DSG_INSTANTIATE

}  // namespace o3dsg
