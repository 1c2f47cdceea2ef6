#pragma once

// Deterministic distillation training: AdamW with decoupled weight decay,
// cyclic cosine-annealed learning rate, one step per scene, checkpoints.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "o3dsg/graph_net.hpp"

namespace o3dsg {

struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 200;
  int cycle_epochs = 0;        // cosine cycle length; 0 means one cycle over all epochs
  double min_lr_ratio = 0.01;  // floor of each cycle relative to lr
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Learning rate used for every step of `epoch` (0-based).
double learning_rate(const TrainConfig& config, int epoch);

struct TrainState {
  GraphNetConfig model;
  TrainConfig train;
  ParamStore params;
  std::vector<Tensor<float>> first_moment;
  std::vector<Tensor<float>> second_moment;
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;  // completed epochs
};

TrainState init_train_state(const GraphNetConfig& model, const TrainConfig& train);

struct TrainSample {
  std::string name;
  SceneInputs inputs;
  SceneTargets targets;
};

/// Loss and gradients for one scene, in parameter order.
struct LossAndGrad {
  double loss = 0;
  std::vector<Tensor<float>> grads;
};
LossAndGrad loss_and_grad(const GraphNet& net, const ParamStore& params, const TrainSample& sample);

double evaluate_loss(const GraphNet& net, const ParamStore& params, const TrainSample& sample);

/// One AdamW update with the given learning rate.
void adamw_step(TrainState& state, const std::vector<Tensor<float>>& grads, double lr);

struct EpochRecord {
  std::uint32_t epoch = 0;  // 1-based count of completed epochs
  double lr = 0;
  double mean_loss = 0;
};

using EpochCallback = std::function<void(const TrainState&, const EpochRecord&)>;

/// Runs epochs until state.epoch == until_epoch. Each epoch visits samples in
/// the given order with one step per scene. Throws DivergenceError when a loss
/// turns non-finite.
std::vector<EpochRecord> train(TrainState& state, std::span<const TrainSample> samples, std::uint32_t until_epoch,
                               const EpochCallback& on_epoch = {});

// Checkpoint: "O3CK", u32 version, u32 config length + JSON config echo,
// u32 tensor count, tensors (u16 name, u32 rank, rank u32 dims, f32 data),
// u64 step, u32 epoch, first and second moments per tensor in the same order.
std::string encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState read_checkpoint(const std::filesystem::path& path);

}  // namespace o3dsg
