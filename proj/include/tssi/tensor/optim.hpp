#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "tssi/tensor/parameter.hpp"

namespace tssi {

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
};

/// Classical momentum: v <- momentum * v - lr * g, p <- p + v.
class Sgd {
 public:
  explicit Sgd(SgdOptions opt = {}) : opt_(opt) {}

  const SgdOptions& options() const { return opt_; }
  void set_lr(double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("sgd: learning rate must be positive");
    opt_.lr = lr;
  }

  void step(const std::vector<Tensor>& params) {
    if (!(opt_.lr > 0.0)) throw std::invalid_argument("sgd: learning rate must be positive");
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      auto& velocity = velocity_[p.node()];
      if (velocity.empty()) velocity.assign(p.numel(), 0.0);
      const auto& g = p.node()->grad;
      double* value = p.node()->value.data();
      for (std::size_t i = 0; i < velocity.size(); ++i) {
        velocity[i] = opt_.momentum * velocity[i] - opt_.lr * g[i];
        value[i] += velocity[i];
      }
    }
  }

  void step(const ParameterStore& store) { step(store.trainable()); }

 private:
  SgdOptions opt_;
  std::unordered_map<const detail::Node*, std::vector<double>> velocity_;
};

/// Cosine decay from base_lr at step 0 to min_lr at total_steps.
inline double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps, double min_lr = 0.0) {
  if (total_steps == 0) return base_lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace tssi
