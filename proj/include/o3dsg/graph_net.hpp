#pragma once

// Trainable 3D side: point-set encoders, triplet message passing, projection
// heads into the object and relationship embedding spaces, distillation loss.

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "o3dsg/autodiff.hpp"
#include "o3dsg/feature_pipeline.hpp"
#include "o3dsg/scene_model.hpp"

namespace o3dsg {

struct GraphNetConfig {
  int feature_width = 64;                    // F: encoder output, triplet feature width
  int hidden = 128;                          // H: hidden width of the message MLP
  std::vector<int> encoder_widths = {16, 32};
  int gnn_layers = 5;                        // K
  int node_head_layers = 3;
  int node_head_width = 128;
  int edge_tokens = 4;
  int edge_token_width = 32;
  int edge_head_blocks = 2;
  int d_obj = 16;
  int d_rel = 16;
  bool linear_heads = false;  // drops ReLU and LayerNorm from the node head
  int node_point_budget = 256;
  int edge_point_budget = 512;

  void validate() const;
  nlohmann::json to_json() const;
  static GraphNetConfig from_json(const nlohmann::json& j);
  /// Widths of the published model (1024/2048 features, 768/1408 outputs, 5-layer heads).
  static GraphNetConfig full_scale();
};

struct Parameter {
  std::string name;
  int rank = 2;  // 1 for bias/gain vectors stored as 1 x C
  Tensor<float> value;
};

class ParamStore {
 public:
  std::vector<Parameter> items;

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  std::size_t element_count() const;
};

/// Node/edge point sets after normalization and subsampling, stacked into
/// single matrices with segment offsets.
struct SceneInputs {
  std::vector<InstanceId> nodes;
  std::vector<Edge> edges;
  Tensor<float> node_points;  // rows: points, cols: x y z
  std::vector<int> node_offsets;
  Tensor<float> edge_points;  // rows: points, cols: x y z mask
  std::vector<int> edge_offsets;
  std::vector<int> edge_src;  // node index of subject
  std::vector<int> edge_dst;  // node index of object
};

/// Deterministic farthest-point subsampling; returns indices into `points`
/// in selection order. Starts at the point farthest from the centroid.
std::vector<std::size_t> farthest_point_subsample(const std::vector<Point3>& points, std::size_t budget);

/// Node sets: centered at the centroid, scaled by the max norm.
/// Edge sets: box-union points centered at the union-box center, plus mask channel.
SceneInputs prepare_inputs(const ScenePointCloud& cloud, const InstanceSet& inst,
                           const SceneGraphSkeleton& skeleton, const GraphNetConfig& config);

struct SceneTargets {
  Tensor<float> node_targets;
  std::vector<std::uint8_t> node_present;
  Tensor<float> edge_targets;
  std::vector<std::uint8_t> edge_present;
};

SceneTargets make_targets(const FusedTargets& targets, const SceneInputs& inputs,
                          const GraphNetConfig& config);

template <typename T>
struct ForwardVars {
  using Var = typename Tape<T>::Var;
  Var node_initial, edge_initial;
  Var node_refined, edge_refined;
  Var node_pred, edge_pred;
};

template <typename T>
using BoundParams = std::vector<typename Tape<T>::Var>;

class GraphNet {
 public:
  struct ParamSpec {
    std::string name;
    int rows, cols, rank;
    enum class Init { kHe, kXavier, kZero, kOne } init;
  };

  explicit GraphNet(GraphNetConfig config);

  const GraphNetConfig& config() const noexcept { return config_; }
  const std::vector<ParamSpec>& param_specs() const noexcept { return specs_; }

  ParamStore init_params(std::uint64_t seed) const;
  /// Throws ParseError when names or shapes disagree with this architecture.
  void check_params(const ParamStore& params) const;

  template <typename T>
  BoundParams<T> bind(Tape<T>& tape, const ParamStore& params) const;

  /// Initial per-node and per-edge features (shared point MLP + max pool).
  template <typename T>
  std::pair<typename Tape<T>::Var, typename Tape<T>::Var> encode(Tape<T>& tape, const BoundParams<T>& p,
                                                                 const SceneInputs& in) const;

  /// K rounds of triplet message passing; `layers` overrides K when >= 0.
  template <typename T>
  std::pair<typename Tape<T>::Var, typename Tape<T>::Var> propagate(Tape<T>& tape, const BoundParams<T>& p,
                                                                    typename Tape<T>::Var nodes,
                                                                    typename Tape<T>::Var edges,
                                                                    const SceneInputs& in, int layers = -1) const;

  template <typename T>
  typename Tape<T>::Var node_head(Tape<T>& tape, const BoundParams<T>& p, typename Tape<T>::Var x) const;

  template <typename T>
  typename Tape<T>::Var edge_head(Tape<T>& tape, const BoundParams<T>& p, typename Tape<T>::Var x) const;

  template <typename T>
  ForwardVars<T> forward(Tape<T>& tape, const BoundParams<T>& p, const SceneInputs& in) const;

  int index_of(std::string_view name) const;

 private:
  void add(std::string name, int rows, int cols, int rank, ParamSpec::Init init);
  void add_linear(const std::string& prefix, int in, int out, ParamSpec::Init init);

  GraphNetConfig config_;
  std::vector<ParamSpec> specs_;
  std::map<std::string, int, std::less<>> index_;
};

/// Sinusoidal tag for token positions, tokens x width.
Tensor<float> positional_tags(int tokens, int width);

/// mean(1 - cos) over present nodes + mean(1 - cos) over present edges.
/// Either term is dropped when it has no present row; both empty is an error.
template <typename T>
typename Tape<T>::Var distill_loss(Tape<T>& tape, const ForwardVars<T>& fwd, const SceneTargets& targets);

/// Forward pass in float32 returning per-node and per-edge predictions.
struct Predictions {
  Tensor<float> nodes;
  Tensor<float> edges;
};
Predictions predict(const GraphNet& net, const ParamStore& params, const SceneInputs& inputs);

}  // namespace o3dsg
