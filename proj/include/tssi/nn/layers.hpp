#pragma once

#include <optional>
#include <string>

#include "tssi/tensor/ops.hpp"
#include "tssi/tensor/parameter.hpp"

namespace tssi::nn {

struct Conv2d {
  Tensor kernel;
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t size,
         std::size_t stride_, Rng& rng, bool with_bias = false)
      : stride(stride_), padding(size / 2) {
    kernel = store.kaiming(name + ".kernel", {size, size, in_c, out_c}, size * size * in_c, rng);
    if (with_bias) bias = store.zeros(name + ".bias", {out_c});
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = conv2d(x, kernel, stride, padding);
    return bias ? add(y, *bias) : y;
  }

  std::size_t in_channels() const { return kernel.dim(2); }
  std::size_t out_channels() const { return kernel.dim(3); }
};

struct BatchNorm {
  Tensor gamma, beta, running_mean, running_var;

  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, std::size_t channels) {
    gamma = store.constant(name + ".gamma", {channels}, 1.0);
    beta = store.zeros(name + ".beta", {channels});
    running_mean = store.zeros(name + ".running_mean", {channels}, false);
    running_var = store.constant(name + ".running_var", {channels}, 1.0, false);
  }

  Tensor operator()(const Tensor& x, Mode mode) const {
    Tensor rm = running_mean, rv = running_var;
    return batchnorm(x, gamma, beta, rm, rv, mode);
  }
};

struct Linear {
  Tensor weight, bias;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    weight = store.kaiming(name + ".weight", {in, out}, in, rng);
    bias = store.zeros(name + ".bias", {out});
  }

  Tensor operator()(const Tensor& x) const { return affine(x, weight, bias); }
};

}  // namespace tssi::nn
