#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tssi/nn/layers.hpp"
#include "tssi/tensor/ops.hpp"
#include "tssi/tensor/parameter.hpp"

namespace tssi::ssan {

enum class AttentionMode { softmax_spatial, sigmoid_spatial_channel };
enum class Readout { mean, last };

inline std::string to_string(AttentionMode m) {
  return m == AttentionMode::softmax_spatial ? "softmax" : "sigmoid";
}
inline AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "softmax") return AttentionMode::softmax_spatial;
  if (s == "sigmoid") return AttentionMode::sigmoid_spatial_channel;
  throw std::invalid_argument("unknown attention mode '" + s + "' (expected softmax or sigmoid)");
}
inline std::string to_string(Readout r) { return r == Readout::mean ? "mean" : "last"; }
inline Readout readout_from_string(const std::string& s) {
  if (s == "mean") return Readout::mean;
  if (s == "last") return Readout::last;
  throw std::invalid_argument("unknown readout '" + s + "' (expected mean or last)");
}

struct SsanConfig {
  std::size_t subimages = 5;
  double overlap = 0.5;
  std::size_t hidden = 32;
  AttentionMode mode = AttentionMode::softmax_spatial;
  Readout readout = Readout::mean;
  std::size_t classes = 4;
};

inline nlohmann::json to_json(const SsanConfig& c) {
  return {{"subimages", c.subimages}, {"overlap", c.overlap}, {"hidden", c.hidden},
          {"mode", to_string(c.mode)}, {"readout", to_string(c.readout)}, {"classes", c.classes}};
}

inline SsanConfig ssan_config_from_json(const nlohmann::json& j) {
  SsanConfig c;
  c.subimages = j.at("subimages").get<std::size_t>();
  c.overlap = j.at("overlap").get<double>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.mode = attention_mode_from_string(j.at("mode").get<std::string>());
  c.readout = readout_from_string(j.value("readout", std::string("mean")));
  c.classes = j.at("classes").get<std::size_t>();
  return c;
}

/// Hidden and memory state, each [N, d].
struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t batch, std::size_t hidden) {
    return {Tensor({batch, hidden}, 0.0), Tensor({batch, hidden}, 0.0)};
  }
};

/// Affine map from [h; x] (d + D) to the four stacked gates (4d), gate
/// order input, forget, output, candidate.
struct LstmWeights {
  Tensor weight;
  Tensor bias;

  std::size_t hidden() const { return bias.numel() / 4; }
  std::size_t input() const { return weight.dim(0) - hidden(); }
};

inline LstmState lstm_step(const Tensor& x, const LstmState& state, const LstmWeights& w) {
  const std::size_t d = w.hidden();
  if (x.rank() != 2 || state.h.rank() != 2 || state.h.dim(1) != d || state.c.dim(1) != d ||
      x.dim(1) != w.input() || x.dim(0) != state.h.dim(0) || w.weight.dim(1) != 4 * d) {
    throw ShapeError("lstm_step: input " + shape_str(x.shape()) + ", hidden " + shape_str(state.h.shape()) +
                     ", weights " + shape_str(w.weight.shape()) + " disagree");
  }
  Tensor gates = affine(concat({state.h, x}, 1), w.weight, w.bias);
  Tensor i = sigmoid(slice(gates, 1, 0, d));
  Tensor f = sigmoid(slice(gates, 1, d, d));
  Tensor o = sigmoid(slice(gates, 1, 2 * d, d));
  Tensor g = tanh(slice(gates, 1, 3 * d, d));
  Tensor c = add(mul(f, state.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

/// Attention weights over a K x K feature grid. Softmax mode keeps one
/// length-d vector per position (weight [d, K*K]); sigmoid mode keeps one per
/// (position, channel) pair (weight [d, K*K*D], position-major).
struct AttentionHead {
  AttentionMode mode = AttentionMode::softmax_spatial;
  std::size_t grid = 7;
  std::size_t channels = 1;
  Tensor weight;

  std::size_t positions() const { return grid * grid; }
};

/// Mask from the previous hidden state: [N, K*K] probabilities (softmax) or
/// [N, K*K, D] gates (sigmoid).
inline Tensor attention_mask(const Tensor& h_prev, const AttentionHead& head) {
  Tensor logits = matmul(h_prev, head.weight);
  if (head.mode == AttentionMode::softmax_spatial) return softmax(logits, 1);
  return sigmoid(reshape(logits, {h_prev.dim(0), head.positions(), head.channels}));
}

/// Pools X[N, K, K, D] into [N, D]: sum_i l_i X_i (softmax) or
/// (1 / K^2) sum_i l_{i,z} X_{i,z} (sigmoid).
inline Tensor apply_attention(const Tensor& features, const Tensor& mask, AttentionMode mode) {
  if (features.rank() != 4 || features.dim(1) != features.dim(2)) {
    throw ShapeError("apply_attention: expected [N,K,K,D] features, got " + shape_str(features.shape()));
  }
  const std::size_t n = features.dim(0), k2 = features.dim(1) * features.dim(2), d = features.dim(3);
  Tensor flat = reshape(features, {n, k2, d});
  if (mode == AttentionMode::softmax_spatial) {
    if (mask.shape() != Shape{n, k2}) {
      throw ShapeError("apply_attention: mask " + shape_str(mask.shape()) + " for features " +
                       shape_str(features.shape()));
    }
    return sum(mul(flat, reshape(mask, {n, k2, 1})), {1});
  }
  if (mask.shape() != Shape{n, k2, d}) {
    throw ShapeError("apply_attention: mask " + shape_str(mask.shape()) + " for features " +
                     shape_str(features.shape()));
  }
  return mean(mul(flat, mask), {1});
}

/// LSTM over per-sub-image feature blocks with per-step soft attention and a
/// linear readout averaged over steps (or taken at the last step).
class Ssan {
 public:
  Ssan(const SsanConfig& cfg, std::size_t grid, std::size_t channels, ParameterStore& store, Rng& rng,
       const std::string& prefix = "ssan")
      : cfg_(cfg) {
    if (cfg.hidden == 0) throw std::invalid_argument("ssan: hidden size must be positive");
    if (cfg.subimages == 0) throw std::invalid_argument("ssan: need at least one sub-image");
    const std::size_t d = cfg.hidden;
    lstm_.weight = store.kaiming(prefix + ".lstm.weight", {d + channels, 4 * d}, d + channels, rng);
    lstm_.bias = store.zeros(prefix + ".lstm.bias", {4 * d});
    head_.mode = cfg.mode;
    head_.grid = grid;
    head_.channels = channels;
    const std::size_t width = cfg.mode == AttentionMode::softmax_spatial ? grid * grid : grid * grid * channels;
    head_.weight = store.kaiming(prefix + ".attention.weight", {d, width}, d, rng);
    classifier_ = nn::Linear(store, prefix + ".classifier", d, cfg.classes, rng);
  }

  /// features: one [N, K, K, D] block per sub-image, in temporal order.
  Tensor operator()(const std::vector<Tensor>& features, std::vector<Tensor>* masks = nullptr) const {
    if (features.empty()) throw std::invalid_argument("ssan: empty feature list");
    const Shape& shape = features.front().shape();
    for (const auto& f : features) {
      if (f.shape() != shape) throw ShapeError("ssan: feature blocks differ in shape");
    }
    if (shape.size() != 4 || shape[1] != head_.grid || shape[2] != head_.grid || shape[3] != head_.channels) {
      throw ShapeError("ssan: expected [N," + std::to_string(head_.grid) + "," + std::to_string(head_.grid) + "," +
                       std::to_string(head_.channels) + "] features, got " + shape_str(shape));
    }
    LstmState state = LstmState::zeros(shape[0], cfg_.hidden);
    Tensor total;
    for (std::size_t t = 0; t < features.size(); ++t) {
      Tensor mask = attention_mask(state.h, head_);
      if (masks) masks->push_back(mask);
      state = lstm_step(apply_attention(features[t], mask, head_.mode), state, lstm_);
      if (cfg_.readout == Readout::last) {
        if (t + 1 == features.size()) total = classifier_(state.h);
        continue;
      }
      Tensor step_logits = classifier_(state.h);
      total = t == 0 ? step_logits : add(total, step_logits);
    }
    return cfg_.readout == Readout::mean ? scale(total, 1.0 / static_cast<double>(features.size())) : total;
  }

  const SsanConfig& config() const { return cfg_; }
  const LstmWeights& lstm() const { return lstm_; }
  const AttentionHead& head() const { return head_; }
  const nn::Linear& classifier() const { return classifier_; }

 private:
  SsanConfig cfg_;
  LstmWeights lstm_;
  AttentionHead head_;
  nn::Linear classifier_;
};

}  // namespace tssi::ssan
