#include "o3dsg/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace o3dsg {

namespace {

struct Evaluation {
  double loss;
  std::vector<std::int64_t> kinks;
};

Evaluation evaluate(const LossBuilder& loss, const std::vector<Tensor<double>>& values) {
  Tape<double> tape;
  Evaluation ev;
  tape.set_kink_log(&ev.kinks);
  BoundParams<double> bound;
  bound.reserve(values.size());
  for (const auto& v : values) bound.push_back(tape.leaf(v));
  ev.loss = tape.value(loss(tape, bound))(0, 0);
  return ev;
}

std::vector<std::size_t> probe_coordinates(const Tensor<double>& grad, std::size_t max_coords, std::mt19937_64& rng) {
  std::vector<std::size_t> all(grad.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (max_coords == 0 || max_coords >= all.size()) return all;
  std::size_t top = 0;
  for (std::size_t i = 1; i < grad.size(); ++i)
    if (std::abs(grad.data[i]) > std::abs(grad.data[top])) top = i;
  std::swap(all[0], all[top]);
  for (std::size_t i = 1; i < max_coords; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(max_coords);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

GradientCheckReport check_gradients(const GraphNet& net, const ParamStore& params, const LossBuilder& loss,
                                    const GradientCheckOptions& options) {
  const double step = options.step;
  const auto& groups = options.groups;
  std::mt19937_64 rng(options.sample_seed);
  net.check_params(params);
  std::vector<Tensor<double>> values;
  for (const auto& p : params.items) values.push_back(p.value.cast<double>());

  std::vector<Tensor<double>> analytic;
  std::vector<std::int64_t> base_kinks;
  {
    Tape<double> tape;
    tape.set_kink_log(&base_kinks);
    BoundParams<double> bound;
    for (const auto& v : values) bound.push_back(tape.leaf(v));
    const auto out = loss(tape, bound);
    tape.backward(out);
    for (auto v : bound) analytic.push_back(tape.grad(v));
  }

  GradientCheckReport report;
  for (std::size_t k = 0; k < params.items.size(); ++k) {
    const auto& name = params.items[k].name;
    if (!groups.empty() && std::find(groups.begin(), groups.end(), name) == groups.end()) continue;
    GroupError g;
    g.name = name;
    double max_diff = 0;
    for (const std::size_t i : probe_coordinates(analytic[k], options.max_coords, rng)) {
      const double original = values[k].data[i];
      values[k].data[i] = original + step;
      const auto plus = evaluate(loss, values);
      values[k].data[i] = original - step;
      const auto minus = evaluate(loss, values);
      values[k].data[i] = original;
      if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
        ++g.skipped_kinks;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2 * step);
      const double a = analytic[k].data[i];
      g.max_abs_analytic = std::max(g.max_abs_analytic, std::abs(a));
      g.max_abs_numeric = std::max(g.max_abs_numeric, std::abs(numeric));
      max_diff = std::max(max_diff, std::abs(a - numeric));
      ++g.checked;
    }
    g.rel_error = max_diff / std::max({g.max_abs_analytic, g.max_abs_numeric, 1e-8});
    report.max_rel_error = std::max(report.max_rel_error, g.rel_error);
    report.groups.push_back(std::move(g));
  }
  return report;
}

GradientCheckReport gradient_check(const GraphNet& net, const ParamStore& params, const SceneInputs& inputs,
                                   const SceneTargets& targets, const GradientCheckOptions& options) {
  return check_gradients(
      net, params,
      [&](Tape<double>& tape, const BoundParams<double>& p) {
        const auto fwd = net.forward(tape, p, inputs);
        return distill_loss(tape, fwd, targets);
      },
      options);
}

RandomInstance random_instance(const GraphNetConfig& config, std::uint64_t seed, int nodes, int points) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RandomInstance ri;
  auto& in = ri.inputs;
  in.node_offsets.push_back(0);
  std::vector<float> rows;
  for (int n = 0; n < nodes; ++n) {
    in.nodes.push_back(InstanceId(n));
    for (int p = 0; p < points; ++p)
      for (int a = 0; a < 3; ++a) rows.push_back(float(coord(rng)));
    in.node_offsets.push_back(in.node_offsets.back() + points);
  }
  in.node_points = Tensor<float>(in.node_offsets.back(), 3);
  in.node_points.data = std::move(rows);

  rows.clear();
  in.edge_offsets.push_back(0);
  std::uniform_int_distribution<int> mask(0, 2);
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      if (i == j) continue;
      in.edges.push_back({InstanceId(i), InstanceId(j)});
      in.edge_src.push_back(i);
      in.edge_dst.push_back(j);
      for (int p = 0; p < 2 * points; ++p) {
        for (int a = 0; a < 3; ++a) rows.push_back(float(coord(rng)));
        rows.push_back(float(mask(rng)));
      }
      in.edge_offsets.push_back(in.edge_offsets.back() + 2 * points);
    }
  }
  in.edge_points = Tensor<float>(in.edge_offsets.back(), 4);
  in.edge_points.data = std::move(rows);

  auto& t = ri.targets;
  t.node_targets = Tensor<float>(nodes, config.d_obj);
  for (auto& v : t.node_targets.data) v = float(gauss(rng));
  t.node_present.assign(std::size_t(nodes), 1);
  t.edge_targets = Tensor<float>(int(in.edges.size()), config.d_rel);
  for (auto& v : t.edge_targets.data) v = float(gauss(rng));
  t.edge_present.assign(in.edges.size(), 1);
  return ri;
}

}  // namespace o3dsg
