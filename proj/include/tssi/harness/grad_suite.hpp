#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tssi/nn/blocks.hpp"
#include "tssi/ssan/ssan.hpp"
#include "tssi/tensor/gradcheck.hpp"

namespace tssi::harness {

struct GradCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

namespace detail {

// Sum of the output times fixed random weights: every output entry feeds
// the loss with a distinct coefficient.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = rng.normal_tensor(y.shape());
  return sum(mul(y, w));
}

inline std::vector<Tensor> with_inputs(const ParameterStore& store, std::vector<Tensor> inputs) {
  for (const auto& t : store.trainable()) inputs.push_back(t);
  return inputs;
}

}  // namespace detail

/// Central-difference checks for every differentiable op and the composed
/// blocks the networks are built from. Each case is independent and seeded.
inline std::vector<GradCase> gradient_suite() {
  using detail::weighted_sum;
  std::vector<GradCase> cases;
  auto unary = [&cases](std::string name, Shape shape, std::function<Tensor(const Tensor&)> op) {
    cases.push_back({std::move(name), [shape, op] {
                       Rng rng(11);
                       Tensor x = rng.normal_tensor(shape);
                       return gradcheck([&] { return weighted_sum(op(x), 5); }, {x});
                     }});
  };
  auto binary = [&cases](std::string name, Shape sa, Shape sb, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    cases.push_back({std::move(name), [sa, sb, op] {
                       Rng rng(12);
                       Tensor a = rng.normal_tensor(sa), b = rng.normal_tensor(sb);
                       return gradcheck([&] { return weighted_sum(op(a, b), 6); }, {a, b});
                     }});
  };

  binary("add", {2, 3, 4}, {4}, [](const Tensor& a, const Tensor& b) { return add(a, b); });
  binary("add_general_broadcast", {2, 1, 4}, {3, 1}, [](const Tensor& a, const Tensor& b) { return add(a, b); });
  binary("mul", {2, 3, 4}, {3, 1}, [](const Tensor& a, const Tensor& b) { return mul(a, b); });
  unary("scale", {3, 4}, [](const Tensor& x) { return scale(x, -1.7); });
  unary("relu", {4, 5}, [](const Tensor& x) { return relu(x); });
  unary("sigmoid", {4, 5}, [](const Tensor& x) { return sigmoid(x); });
  unary("tanh", {4, 5}, [](const Tensor& x) { return tanh(x); });
  unary("reshape", {2, 6}, [](const Tensor& x) { return reshape(x, {3, 4}); });
  binary("concat", {2, 3}, {2, 2}, [](const Tensor& a, const Tensor& b) { return concat({a, b}, 1); });
  unary("slice", {3, 5, 2}, [](const Tensor& x) { return slice(x, 1, 1, 3); });
  unary("sum", {2, 3, 4}, [](const Tensor& x) { return sum(x, {0, 2}); });
  unary("mean", {2, 3, 4}, [](const Tensor& x) { return mean(x, {1}); });
  unary("softmax", {3, 6}, [](const Tensor& x) { return softmax(x, 1); });
  unary("softmax_middle_axis", {2, 4, 3}, [](const Tensor& x) { return softmax(x, 1); });
  unary("cross_entropy", {4, 5}, [](const Tensor& x) { return cross_entropy(x, {0, 3, 4, 1}); });
  binary("matmul", {3, 4}, {4, 2}, [](const Tensor& a, const Tensor& b) { return matmul(a, b); });
  cases.push_back({"affine", [] {
                     Rng rng(13);
                     Tensor x = rng.normal_tensor({3, 4}), w = rng.normal_tensor({4, 2}), b = rng.normal_tensor({2});
                     return gradcheck([&] { return weighted_sum(affine(x, w, b), 7); }, {x, w, b});
                   }});
  binary("conv2d_3x3_pad1", {2, 5, 5, 3}, {3, 3, 3, 2},
         [](const Tensor& x, const Tensor& k) { return conv2d(x, k, 1, 1); });
  binary("conv2d_stride2", {1, 6, 5, 2}, {3, 3, 2, 3},
         [](const Tensor& x, const Tensor& k) { return conv2d(x, k, 2, 1); });
  binary("conv2d_pointwise", {2, 3, 3, 4}, {1, 1, 4, 2}, [](const Tensor& x, const Tensor& k) { return conv2d(x, k); });
  unary("maxpool2d", {2, 6, 6, 2}, [](const Tensor& x) { return maxpool2d(x, 2, 2); });
  unary("bilinear_upsample", {2, 3, 4, 2}, [](const Tensor& x) { return bilinear_upsample(x, 7, 5); });
  for (Mode mode : {Mode::train, Mode::eval}) {
    cases.push_back({mode == Mode::train ? "batchnorm_train" : "batchnorm_eval", [mode] {
                       Rng rng(14);
                       Tensor x = rng.normal_tensor({2, 3, 3, 4});
                       Tensor g = rng.uniform_tensor({4}, 0.5, 1.5), b = rng.normal_tensor({4});
                       Tensor rm = rng.normal_tensor({4}), rv = rng.uniform_tensor({4}, 0.5, 2.0);
                       return gradcheck(
                           [&] {
                             Tensor m = rm.detach(), v = rv.detach();
                             return weighted_sum(batchnorm(x, g, b, m, v, mode), 8);
                           },
                           {x, g, b});
                     }});
  }

  cases.push_back({"residual_unit", [] {
                     Rng rng(21);
                     ParameterStore store;
                     nn::ResidualUnit unit(store, "unit", 4, 2, 6, 2, rng);
                     Tensor x = rng.normal_tensor({2, 5, 5, 4});
                     return gradcheck([&] { return weighted_sum(unit(x, Mode::train), 9); },
                                      detail::with_inputs(store, {x}));
                   }});
  for (auto act : {nn::MaskActivation::sigmoid, nn::MaskActivation::softmax}) {
    cases.push_back({"base_attention_" + nn::to_string(act), [act] {
                       Rng rng(22);
                       ParameterStore store;
                       nn::BaseAttentionBlock block(store, "attn", 3, act, rng);
                       Tensor x = rng.normal_tensor({2, 4, 4, 3});
                       return gradcheck([&] { return weighted_sum(block(x, Mode::train), 10); },
                                        detail::with_inputs(store, {x}));
                     }});
  }
  cases.push_back({"glan_block_8x8x4", [] {
                     Rng rng(23);
                     ParameterStore store;
                     nn::GlanBlock block(store, "glan", 4, 8, 2, nn::MaskActivation::sigmoid, rng);
                     Tensor x = rng.normal_tensor({2, 8, 8, 4});
                     return gradcheck([&] { return weighted_sum(block(x, Mode::train), 11); },
                                      detail::with_inputs(store, {x}));
                   }});
  cases.push_back({"lstm_step", [] {
                     Rng rng(24);
                     Tensor x = rng.normal_tensor({3, 5}), h = rng.normal_tensor({3, 4}), c = rng.normal_tensor({3, 4});
                     ssan::LstmWeights w{rng.normal_tensor({9, 16}, 0.5), rng.normal_tensor({16}, 0.5)};
                     return gradcheck(
                         [&] {
                           auto s = ssan::lstm_step(x, {h, c}, w);
                           return add(weighted_sum(s.h, 12), weighted_sum(s.c, 13));
                         },
                         {x, h, c, w.weight, w.bias});
                   }});
  for (auto mode : {ssan::AttentionMode::softmax_spatial, ssan::AttentionMode::sigmoid_spatial_channel}) {
    cases.push_back({"ssan_end_to_end_" + ssan::to_string(mode), [mode] {
                       Rng rng(25);
                       ParameterStore store;
                       ssan::SsanConfig cfg;
                       cfg.subimages = 2;
                       cfg.hidden = 4;
                       cfg.mode = mode;
                       cfg.classes = 3;
                       ssan::Ssan model(cfg, 2, 3, store, rng);
                       std::vector<Tensor> feats{rng.normal_tensor({2, 2, 2, 3}), rng.normal_tensor({2, 2, 2, 3})};
                       return gradcheck([&] { return cross_entropy(model(feats), {1, 2}); },
                                        detail::with_inputs(store, feats));
                     }});
  }
  return cases;
}

}  // namespace tssi::harness
