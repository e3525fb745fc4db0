#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tssi/tensor/tensor.hpp"

namespace tssi {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of the relative error, so entries whose true
  /// gradient is ~0 are judged on absolute error at this scale.
  double floor = 1e-3;
  /// Largest number of entries probed per input; 0 probes all.
  std::size_t max_entries = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t probed = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// for every entry of `inputs`. loss_fn must rebuild its graph on each call
/// and read the inputs through the given handles.
inline GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                 GradCheckOptions opt = {}) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tensor loss = loss_fn();
    backward(loss);
  }
  GradCheckResult result;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.grad();
    const std::size_t n = t.numel();
    const std::size_t stride = opt.max_entries == 0 || n <= opt.max_entries ? 1 : (n + opt.max_entries - 1) / opt.max_entries;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = t.values()[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        t.values()[i] = saved + opt.step;
        plus = loss_fn().item();
        t.values()[i] = saved - opt.step;
        minus = loss_fn().item();
        t.values()[i] = saved;
      }
      const double numeric = (plus - minus) / (2.0 * opt.step);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), opt.floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, abs_err / denom);
      ++result.probed;
    }
  }
  return result;
}

}  // namespace tssi
