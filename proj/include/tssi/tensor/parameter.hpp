#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tssi/tensor/tensor.hpp"

namespace tssi {

/// Seeded random source shared by initializers and data generators.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() { return engine_; }

  Tensor normal_tensor(Shape shape, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = normal(0.0, stddev);
    return t;
  }
  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = uniform(lo, hi);
    return t;
  }

 private:
  std::mt19937_64 engine_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Named parameter table of a model, in registration order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor tensor, bool trainable = true) {
    if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter name: " + name);
    tensor.set_requires_grad(trainable);
    index_.emplace(name, params_.size());
    params_.push_back({name, tensor, trainable});
    return tensor;
  }

  /// Kaiming-style normal init scaled by fan-in.
  Tensor kaiming(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    return add(name, rng.normal_tensor(std::move(shape), stddev));
  }
  Tensor zeros(const std::string& name, Shape shape, bool trainable = true) {
    return add(name, Tensor(std::move(shape), 0.0), trainable);
  }
  Tensor constant(const std::string& name, Shape shape, double value, bool trainable = true) {
    return add(name, Tensor(std::move(shape), value), trainable);
  }

  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  const Parameter* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (const auto& p : params_) {
      if (p.trainable) out.push_back(p.tensor);
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace tssi
