// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "core/node.hpp"
#include "gruvd/data_io.hpp"
#include "gruvd/errors.hpp"
#include "gruvd/random.hpp"
#include "gruvd/training.hpp"

namespace gruvd {

void GradcheckConfig::validate() const {
  if (channels < 1 || height < 1 || width < 1 || hidden_channels < 1 || num_blocks < 1 ||
      seq_len < 1) {
    throw ConfigError("gradcheck sizes must be positive");
  }
  if (!(epsilon > 0.0)) throw ConfigError("gradcheck epsilon must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("gradcheck tolerance must be positive");
}

void to_json(nlohmann::json& j, const GradcheckConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"block_kind", to_string(c.block_kind)},
                     {"channels", c.channels},
                     {"height", c.height},
                     {"width", c.width},
                     {"hidden_channels", c.hidden_channels},
                     {"num_blocks", c.num_blocks},
                     {"seq_len", c.seq_len},
                     {"seed", c.seed},
                     {"epsilon", c.epsilon},
                     {"tolerance", c.tolerance},
                     {"inject_fault", c.inject_fault}};
}

void from_json(const nlohmann::json& j, GradcheckConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") c.kind = parse_model_kind(value.get<std::string>());
    else if (key == "block_kind") c.block_kind = parse_block_kind(value.get<std::string>());
    else if (key == "channels") c.channels = value.get<int>();
    else if (key == "height") c.height = value.get<int>();
    else if (key == "width") c.width = value.get<int>();
    else if (key == "hidden_channels") c.hidden_channels = value.get<int>();
    else if (key == "num_blocks") c.num_blocks = value.get<int>();
    else if (key == "seq_len") c.seq_len = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "epsilon") c.epsilon = value.get<double>();
    else if (key == "tolerance") c.tolerance = value.get<double>();
    else if (key == "inject_fault") c.inject_fault = value.get<bool>();
    else throw ConfigError("unknown gradcheck config key '" + key + "'");
  }
}

namespace {

// Identity forward, doubled backward.
TensorD faulty_identity(const TensorD& x) {
  const auto xv = x.data();
  return detail::make_result<double>(
      "faulty_identity", x.shape(), std::vector<double>(xv.begin(), xv.end()), {&x},
      [](detail::Node<double>& self) {
        double* gx = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += 2.0 * self.grad[i];
      });
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckConfig& config) {
  config.validate();
  ModelConfig mc;
  mc.kind = config.kind;
  mc.channels = config.channels;
  mc.hidden_channels = config.hidden_channels;
  mc.num_blocks = config.num_blocks;
  mc.block_kind = config.block_kind;
  auto model = build_model<double>(mc, config.seed);

  const std::size_t T = static_cast<std::size_t>(config.seq_len);
  const std::size_t C = static_cast<std::size_t>(config.channels);
  const std::size_t H = static_cast<std::size_t>(config.height);
  const std::size_t W = static_cast<std::size_t>(config.width);
  const NoiseParams params{0.01, 1e-3};
  std::vector<double> clean_v(T * C * H * W);
  for (std::size_t i = 0; i < clean_v.size(); ++i) {
    clean_v[i] = 0.1 + 0.8 * rng::uniform(config.seed, 0x636c65616eULL, i);
  }
  const TensorD clean(Shape{T, C, H, W}, std::move(clean_v));
  const TensorD noisy = add_noise(params, clean, rng::hash(config.seed, 1, 0));
  const TensorD delta = noise_map(params, noisy);
  std::vector<FrameInput<double>> frames;
  std::vector<TensorD> targets;
  for (std::size_t t = 0; t < T; ++t) {
    frames.push_back({sequence_frame(noisy, t), sequence_frame(delta, t)});
    targets.push_back(sequence_frame(clean, t));
  }

  const bool fault = config.inject_fault;
  auto loss_fn = [&]() {
    auto outputs = run_sequence<double>(*model, frames);
    if (fault) {
      for (auto& o : outputs) o.y = faulty_identity(o.y);
    }
    return sequence_loss<double>(outputs, targets, 0.1, 1.0).total;
  };

  model->zero_grad();
  const TensorD loss = loss_fn();
  backward(loss);

  GradcheckReport report;
  report.tolerance = config.tolerance;
  report.loss = loss.item();
  const double eps = config.epsilon;
  for (auto& p : model->parameters()) {
    ParameterCheck check;
    check.name = p.name;
    check.count = p.value.numel();
    const std::vector<double> analytic = p.value.has_grad()
                                             ? std::vector<double>(p.value.grad().begin(),
                                                                   p.value.grad().end())
                                             : std::vector<double>(p.value.numel(), 0.0);
    auto values = p.value.mutable_data();
    double scale = 0.0, worst = 0.0;
    {
      NoGradGuard no_grad;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double up = loss_fn().item();
        values[i] = saved - eps;
        const double down = loss_fn().item();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
        worst = std::max(worst, std::abs(analytic[i] - numeric));
        check.grad_scale = std::max(check.grad_scale, std::abs(analytic[i]));
      }
    }
    check.max_abs_error = worst;
    check.max_rel_error = scale > 0.0 ? worst / scale : 0.0;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.parameters.push_back(std::move(check));
  }
  report.passed = report.max_rel_error < report.tolerance;
  return report;
}

void GradcheckReport::write(std::ostream& out) const {
  char line[256];
  for (const auto& p : parameters) {
    std::snprintf(line, sizeof(line), "%-28s n=%-5zu max_rel=%.3e max_abs=%.3e |g|max=%.3e %s\n",
                  p.name.c_str(), p.count, p.max_rel_error, p.max_abs_error, p.grad_scale,
                  p.max_rel_error < tolerance ? "ok" : "FAIL");
    out << line;
  }
  std::snprintf(line, sizeof(line), "gradcheck %s: max relative error %.3e (tolerance %.1e)\n",
                passed ? "PASS" : "FAIL", max_rel_error, tolerance);
  out << line;
}

}  // namespace gruvd
