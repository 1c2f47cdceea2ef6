#pragma once

// Central finite-difference verification of the analytic gradients, run in
// float64 over the same computation graph used for training.

#include <functional>
#include <string>
#include <vector>

#include "o3dsg/graph_net.hpp"

namespace o3dsg {

struct GroupError {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // perturbation crossed a ReLU/max-pool switch
  double max_abs_analytic = 0;
  double max_abs_numeric = 0;
  double rel_error = 0;  // ||a - n||_inf / max(||a||_inf, ||n||_inf, 1e-8)
};

struct GradientCheckReport {
  std::vector<GroupError> groups;
  double max_rel_error = 0;
};

/// Builds a scalar loss from bound parameters on a double tape.
using LossBuilder = std::function<Tape<double>::Var(Tape<double>&, const BoundParams<double>&)>;

struct GradientCheckOptions {
  double step = 1e-4;
  std::vector<std::string> groups;  // tensors to check; all when empty
  /// Coordinates probed per tensor; 0 probes every coordinate. A sample always
  /// includes the coordinate with the largest analytic gradient, the rest are
  /// drawn uniformly without replacement.
  std::size_t max_coords = 0;
  std::uint64_t sample_seed = 0;
};

GradientCheckReport check_gradients(const GraphNet& net, const ParamStore& params, const LossBuilder& loss,
                                    const GradientCheckOptions& options = {});

/// Full forward + distillation loss on one scene.
GradientCheckReport gradient_check(const GraphNet& net, const ParamStore& params, const SceneInputs& inputs,
                                   const SceneTargets& targets, const GradientCheckOptions& options = {});

/// Random small scene (nodes with a handful of points each, all ordered-pair
/// edges) and random targets matching the network's output dimensions.
struct RandomInstance {
  SceneInputs inputs;
  SceneTargets targets;
};
RandomInstance random_instance(const GraphNetConfig& config, std::uint64_t seed, int nodes = 3, int points = 12);

}  // namespace o3dsg
