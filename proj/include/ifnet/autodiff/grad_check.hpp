#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ifnet/autodiff/ops.hpp"
#include "ifnet/core/random.hpp"

namespace ifnet::ad {

using GradFunction = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Relative errors are measured against max(|analytic|, |numeric|, scale_floor).
  double scale_floor = 1e-3;
  /// Elements checked per input; 0 checks all of them.
  std::size_t max_elements = 0;
  std::uint64_t seed = 1234;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // perturbation crossed a relu/pooling decision
  std::string worst;         // "input i element j" of the max error

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }
};

/// Compares reverse-mode gradients of a random projection of f's output against central
/// differences. Perturbations whose +/- evaluations land on a different smooth piece than the
/// unperturbed point are excluded and counted rather than failed.
inline GradCheckReport grad_check(const GradFunction& f, const std::vector<Tensor<double>>& inputs,
                                  const GradCheckOptions& options = {}) {
  std::shared_ptr<const Tensor<double>> projection;
  std::uint64_t base_signature = 0;
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(tape.variable(x));
    const Var<double> y = f(tape, vars);
    Rng rng(options.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor<double> r(y.shape());
    for (auto& v : r.values()) v = u(rng);
    projection = std::make_shared<const Tensor<double>>(std::move(r));
    base_signature = tape.branch_signature();
    tape.backward(weighted_sum(y, projection));
    for (const auto& v : vars) {
      const auto* g = tape.grad(v);
      analytic.push_back(g ? *g : Tensor<double>(v.shape(), 0.0));
    }
  }

  std::vector<Tensor<double>> work = inputs;
  auto evaluate = [&](std::uint64_t& signature) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : work) vars.push_back(tape.constant(x));
    const Var<double> y = f(tape, vars);
    signature = tape.branch_signature();
    return weighted_sum(y, projection).value()[0];
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const std::size_t n = work[i].size();
    const std::size_t stride = options.max_elements == 0 ? 1 : std::max<std::size_t>(1, (n + options.max_elements - 1) / options.max_elements);
    for (std::size_t j = 0; j < n; j += stride) {
      const double original = work[i][j];
      std::uint64_t sp = 0, sm = 0;
      work[i][j] = original + options.epsilon;
      const double lp = evaluate(sp);
      work[i][j] = original - options.epsilon;
      const double lm = evaluate(sm);
      work[i][j] = original;
      if (sp != base_signature || sm != base_signature) {
        ++report.excluded;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * options.epsilon);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.scale_floor});
      ++report.checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) report.worst = "input " + std::to_string(i) + " element " + std::to_string(j);
      }
    }
  }
  return report;
}

}  // namespace ifnet::ad
