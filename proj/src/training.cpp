#include "o3dsg/training.hpp"

#include <cmath>
#include <numbers>

#include "o3dsg/binary_io.hpp"
#include "o3dsg/errors.hpp"

namespace o3dsg {

using nlohmann::json;

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void TrainConfig::validate() const {
  if (!(lr >= 0)) throw ConfigError("lr", "must be >= 0");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay", "must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps", "must be positive");
  if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
  if (cycle_epochs < 0) throw ConfigError("cycle_epochs", "must be >= 0");
  if (!(min_lr_ratio >= 0 && min_lr_ratio <= 1)) throw ConfigError("min_lr_ratio", "must lie in [0, 1]");
}

json TrainConfig::to_json() const {
  return json{{"lr", lr},         {"weight_decay", weight_decay}, {"beta1", beta1},
              {"beta2", beta2},   {"adam_eps", adam_eps},         {"epochs", epochs},
              {"cycle_epochs", cycle_epochs}, {"min_lr_ratio", min_lr_ratio}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw ConfigError(key, e.what());
    }
  };
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_eps", c.adam_eps);
  get("epochs", c.epochs);
  get("cycle_epochs", c.cycle_epochs);
  get("min_lr_ratio", c.min_lr_ratio);
  get("seed", c.seed);
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& c, int epoch) {
  const int cycle = c.cycle_epochs > 0 ? c.cycle_epochs : std::max(c.epochs, 1);
  const double floor = c.lr * c.min_lr_ratio;
  const double phase = double(epoch % cycle) / double(cycle);
  return floor + 0.5 * (c.lr - floor) * (1.0 + std::cos(std::numbers::pi * phase));
}

TrainState init_train_state(const GraphNetConfig& model, const TrainConfig& train) {
  train.validate();
  TrainState s;
  s.model = model;
  s.train = train;
  s.params = GraphNet(model).init_params(train.seed);
  for (const auto& p : s.params.items) {
    s.first_moment.emplace_back(p.value.rows, p.value.cols);
    s.second_moment.emplace_back(p.value.rows, p.value.cols);
  }
  return s;
}

LossAndGrad loss_and_grad(const GraphNet& net, const ParamStore& params, const TrainSample& sample) {
  Tape<float> tape;
  const auto p = net.bind(tape, params);
  const auto fwd = net.forward(tape, p, sample.inputs);
  const auto loss = distill_loss(tape, fwd, sample.targets);
  tape.backward(loss);
  LossAndGrad out;
  out.loss = tape.value(loss)(0, 0);
  out.grads.reserve(p.size());
  for (auto v : p) out.grads.push_back(tape.grad(v));
  return out;
}

double evaluate_loss(const GraphNet& net, const ParamStore& params, const TrainSample& sample) {
  Tape<float> tape;
  const auto p = net.bind(tape, params);
  const auto fwd = net.forward(tape, p, sample.inputs);
  return tape.value(distill_loss(tape, fwd, sample.targets))(0, 0);
}

void adamw_step(TrainState& s, const std::vector<Tensor<float>>& grads, double lr) {
  ++s.step;
  const auto& c = s.train;
  const double bc1 = 1.0 - std::pow(c.beta1, double(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, double(s.step));
  for (std::size_t k = 0; k < s.params.items.size(); ++k) {
    auto& w = s.params.items[k].value.data;
    auto& m = s.first_moment[k].data;
    auto& v = s.second_moment[k].data;
    const auto& g = grads[k].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = float(c.beta1 * m[i] + (1.0 - c.beta1) * gi);
      v[i] = float(c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      const double update = mhat / (std::sqrt(vhat) + c.adam_eps) + c.weight_decay * w[i];
      w[i] = float(w[i] - lr * update);
    }
  }
}

std::vector<EpochRecord> train(TrainState& state, std::span<const TrainSample> samples, std::uint32_t until_epoch,
                               const EpochCallback& on_epoch) {
  if (samples.empty()) throw DataError("training needs at least one scene");
  const GraphNet net(state.model);
  std::vector<EpochRecord> history;
  while (state.epoch < until_epoch) {
    const double lr = learning_rate(state.train, int(state.epoch));
    double total = 0;
    for (const auto& sample : samples) {
      auto lg = loss_and_grad(net, state.params, sample);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("loss became non-finite at epoch " + std::to_string(state.epoch + 1) + " on scene " +
                              sample.name);
      }
      total += lg.loss;
      adamw_step(state, lg.grads, lr);
    }
    ++state.epoch;
    EpochRecord rec{state.epoch, lr, total / double(samples.size())};
    history.push_back(rec);
    if (on_epoch) on_epoch(state, rec);
  }
  return history;
}

// ---------------------------------------------------------------------------

std::string encode_checkpoint(const TrainState& s) {
  io::ByteWriter w;
  w.magic("O3CK");
  w.u32(kCheckpointVersion);
  const json echo{{"model", s.model.to_json()}, {"train", s.train.to_json()}};
  w.str32(echo.dump());
  w.u32(std::uint32_t(s.params.items.size()));
  for (const auto& p : s.params.items) {
    w.str16(p.name, "tensor name");
    w.u32(std::uint32_t(p.rank));
    if (p.rank == 1) {
      w.u32(std::uint32_t(p.value.cols));
    } else {
      w.u32(std::uint32_t(p.value.rows));
      w.u32(std::uint32_t(p.value.cols));
    }
    w.f32s(p.value.data);
  }
  w.u64(s.step);
  w.u32(s.epoch);
  for (const auto* moments : {&s.first_moment, &s.second_moment}) {
    for (const auto& m : *moments) w.f32s(m.data);
  }
  return w.take();
}

TrainState decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("O3CK");
  r.expect_version(kCheckpointVersion);
  json echo;
  try {
    echo = json::parse(r.str32("config"));
  } catch (const json::parse_error& e) {
    throw ParseError("config", e.what());
  }
  TrainState s;
  try {
    s.model = GraphNetConfig::from_json(echo.at("model"));
    s.train = TrainConfig::from_json(echo.at("train"));
  } catch (const json::exception& e) {
    throw ParseError("config", e.what());
  } catch (const ConfigError& e) {
    throw ParseError("config." + e.field(), e.detail());
  }
  const auto count = r.u32("tensor_count");
  r.require_records(count, 2 + 4 + 4, "tensor_count");
  for (std::uint32_t k = 0; k < count; ++k) {
    Parameter p;
    p.name = r.str16("tensor name");
    p.rank = int(r.u32(p.name + ".rank"));
    if (p.rank != 1 && p.rank != 2) throw ParseError(p.name + ".rank", "must be 1 or 2");
    int rows = 1, cols;
    if (p.rank == 2) rows = int(r.u32(p.name + ".dims"));
    cols = int(r.u32(p.name + ".dims"));
    r.require_records(std::uint64_t(rows) * std::uint64_t(cols), 4, p.name + ".data");
    p.value = Tensor<float>(rows, cols);
    r.f32s(p.value.data, p.name + ".data");
    s.params.items.push_back(std::move(p));
  }
  GraphNet(s.model).check_params(s.params);
  s.step = r.u64("step");
  s.epoch = r.u32("epoch");
  for (auto* moments : {&s.first_moment, &s.second_moment}) {
    for (const auto& p : s.params.items) {
      Tensor<float> m(p.value.rows, p.value.cols);
      r.f32s(m.data, "optimizer." + p.name);
      moments->push_back(std::move(m));
    }
  }
  r.expect_end();
  return s;
}

void write_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  io::write_file(path, encode_checkpoint(state));
}

TrainState read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  return decode_checkpoint(io::read_file(path));
}

}  // namespace o3dsg
