#pragma once

#include <array>
#include <optional>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tssi/nn/blocks.hpp"

namespace tssi::nn {

enum class Arch { plain, base_attention, glan };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::plain: return "plain";
    case Arch::base_attention: return "base-attn";
    case Arch::glan: return "glan";
  }
  return "plain";
}

inline Arch arch_from_string(const std::string& s) {
  if (s == "plain") return Arch::plain;
  if (s == "base-attn") return Arch::base_attention;
  if (s == "glan") return Arch::glan;
  throw std::invalid_argument("unknown architecture '" + s + "' (expected plain, base-attn or glan)");
}

struct StageSpec {
  std::size_t units = 1;
  std::size_t mid = 64;
  std::size_t out = 256;
  std::size_t stride = 1;
};

struct NetworkConfig {
  Arch arch = Arch::glan;
  std::size_t input_size = 56;
  std::size_t in_channels = 3;
  std::size_t classes = 4;
  std::size_t stem_channels = 64;
  std::size_t stem_kernel = 3;
  std::size_t stem_stride = 1;
  bool stem_pool = false;
  std::array<StageSpec, 4> stages{};
  std::size_t bottom_size = 7;
  MaskActivation mask_activation = MaskActivation::sigmoid;

  /// 224x224 input, 7x7/2 stem with 2x2 pool, 50-layer channel plan.
  /// GLAN keeps one unit in each of the first three stages.
  static NetworkConfig full_scale(Arch arch, std::size_t classes) {
    NetworkConfig c;
    c.arch = arch;
    c.input_size = 224;
    c.classes = classes;
    c.stem_channels = 64;
    c.stem_kernel = 7;
    c.stem_stride = 2;
    c.stem_pool = true;
    const std::array<std::size_t, 4> units = arch == Arch::glan ? std::array<std::size_t, 4>{1, 1, 1, 3}
                                                                : std::array<std::size_t, 4>{3, 4, 6, 3};
    const std::array<std::size_t, 4> mids{64, 128, 256, 512};
    for (std::size_t s = 0; s < 4; ++s) c.stages[s] = {units[s], mids[s], mids[s] * 4, s == 0 ? 1u : 2u};
    return c;
  }

  /// Channel plan divided by `width_divisor`, 3x3 stride-1 stem without
  /// pooling, so a 56x56 input reaches the same 56/28/14/7 stage sizes.
  static NetworkConfig desk_scale(Arch arch, std::size_t classes, std::size_t width_divisor = 16,
                                  std::size_t input_size = 56) {
    NetworkConfig c = full_scale(arch, classes);
    c.input_size = input_size;
    c.stem_kernel = 3;
    c.stem_stride = 1;
    c.stem_pool = false;
    c.stem_channels = std::max<std::size_t>(1, 64 / width_divisor);
    for (std::size_t s = 0; s < 4; ++s) {
      c.stages[s].units = arch == Arch::glan ? (s == 3 ? 3 : 1) : c.stages[s].units;
      c.stages[s].mid = std::max<std::size_t>(1, c.stages[s].mid / width_divisor);
      c.stages[s].out = std::max<std::size_t>(1, c.stages[s].out / width_divisor);
    }
    return c;
  }

  std::size_t feature_channels() const { return stages[3].out; }
};

inline nlohmann::json to_json(const NetworkConfig& c) {
  nlohmann::json j;
  j["arch"] = to_string(c.arch);
  j["input_size"] = c.input_size;
  j["in_channels"] = c.in_channels;
  j["classes"] = c.classes;
  j["stem_channels"] = c.stem_channels;
  j["stem_kernel"] = c.stem_kernel;
  j["stem_stride"] = c.stem_stride;
  j["stem_pool"] = c.stem_pool;
  j["bottom_size"] = c.bottom_size;
  j["mask_activation"] = to_string(c.mask_activation);
  j["stages"] = nlohmann::json::array();
  for (const auto& s : c.stages) {
    j["stages"].push_back({{"units", s.units}, {"mid", s.mid}, {"out", s.out}, {"stride", s.stride}});
  }
  return j;
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.arch = arch_from_string(j.at("arch").get<std::string>());
  c.input_size = j.value("input_size", c.input_size);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.classes = j.at("classes").get<std::size_t>();
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  c.stem_kernel = j.value("stem_kernel", c.stem_kernel);
  c.stem_stride = j.value("stem_stride", c.stem_stride);
  c.stem_pool = j.value("stem_pool", c.stem_pool);
  c.bottom_size = j.value("bottom_size", c.bottom_size);
  c.mask_activation = mask_activation_from_string(j.value("mask_activation", std::string("sigmoid")));
  const auto& stages = j.at("stages");
  if (stages.size() != 4) throw std::invalid_argument("network config: exactly four stages required");
  for (std::size_t s = 0; s < 4; ++s) {
    c.stages[s] = {stages[s].at("units").get<std::size_t>(), stages[s].at("mid").get<std::size_t>(),
                   stages[s].at("out").get<std::size_t>(), stages[s].at("stride").get<std::size_t>()};
  }
  return c;
}

struct ShapeRecord {
  std::string name;
  Shape shape;
};

/// Residual network over skeleton images with optional attention blocks:
///   plain:     stem -> stage1..4
///   base-attn: stem -> A -> stage1 -> stage2 -> A -> stage3 -> stage4 -> A
///   glan:      stem -> stage1 -> G -> stage2 -> G -> stage3 -> G -> stage4
/// followed by BN-ReLU, global average pooling and a linear classifier.
class AttentionNetwork {
 public:
  /// `with_classifier = false` builds a feature extractor only.
  AttentionNetwork(const NetworkConfig& cfg, ParameterStore& store, Rng& rng, const std::string& prefix = "net",
                   bool with_classifier = true)
      : cfg_(cfg) {
    if (cfg.classes < 1) throw std::invalid_argument("network: class count must be positive");
    stem_ = Conv2d(store, prefix + ".stem", cfg.in_channels, cfg.stem_channels, cfg.stem_kernel, cfg.stem_stride, rng);
    stem_bn_ = BatchNorm(store, prefix + ".stem_bn", cfg.stem_channels);

    std::size_t size = conv_out(cfg.input_size, cfg.stem_kernel, cfg.stem_stride, cfg.stem_kernel / 2);
    if (cfg.stem_pool) size = (size - 2) / 2 + 1;
    std::size_t channels = cfg.stem_channels;
    if (cfg.arch == Arch::base_attention) {
      base_.emplace_back(store, prefix + ".attn0", channels, cfg.mask_activation, rng);
    }
    for (std::size_t s = 0; s < 4; ++s) {
      const auto& spec = cfg.stages[s];
      if (spec.units == 0) throw std::invalid_argument("network: stage with zero units");
      std::vector<ResidualUnit> units;
      for (std::size_t u = 0; u < spec.units; ++u) {
        const std::size_t stride = u == 0 ? spec.stride : 1;
        units.emplace_back(store, prefix + ".stage" + std::to_string(s + 1) + ".unit" + std::to_string(u), channels,
                           spec.mid, spec.out, stride, rng);
        size = conv_out(size, 3, stride, 1);
        channels = spec.out;
      }
      stages_.push_back(std::move(units));
      if (cfg.arch == Arch::glan && s < 3) {
        glan_.emplace_back(store, prefix + ".glan" + std::to_string(s + 1), channels, size, cfg.bottom_size,
                           cfg.mask_activation, rng);
      }
      if (cfg.arch == Arch::base_attention && (s == 1 || s == 3)) {
        base_.emplace_back(store, prefix + ".attn" + std::to_string(s == 1 ? 1 : 2), channels, cfg.mask_activation, rng);
      }
    }
    feature_size_ = size;
    final_bn_ = BatchNorm(store, prefix + ".final_bn", channels);
    if (with_classifier) classifier_ = Linear(store, prefix + ".classifier", channels, cfg.classes, rng);
  }

  /// [N,S,S,C] images -> [N,K,K,D] feature block.
  Tensor features(const Tensor& images, Mode mode, std::vector<ShapeRecord>* log = nullptr) const {
    if (images.rank() != 4 || images.dim(3) != cfg_.in_channels) {
      throw ShapeError("network expects [N,H,W," + std::to_string(cfg_.in_channels) + "] input, got " +
                       shape_str(images.shape()));
    }
    if (images.dim(1) != cfg_.input_size || images.dim(2) != cfg_.input_size) {
      throw ShapeError("network built for " + std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size) +
                       " input, got " + shape_str(images.shape()));
    }
    auto record = [log](const char* name, const Tensor& t) {
      if (log) log->push_back({name, t.shape()});
    };
    record("input", images);
    Tensor h = relu(stem_bn_(stem_(images), mode));
    if (cfg_.stem_pool) h = maxpool2d(h, 2, 2);
    record("stem", h);
    std::size_t base_idx = 0;
    if (cfg_.arch == Arch::base_attention) {
      h = base_[base_idx++](h, mode);
      record("attention0", h);
    }
    static constexpr const char* stage_names[] = {"stage1", "stage2", "stage3", "stage4"};
    static constexpr const char* glan_names[] = {"glan1", "glan2", "glan3"};
    for (std::size_t s = 0; s < 4; ++s) {
      for (const auto& unit : stages_[s]) h = unit(h, mode);
      record(stage_names[s], h);
      if (cfg_.arch == Arch::glan && s < 3) {
        h = glan_[s](h, mode);
        record(glan_names[s], h);
      }
      if (cfg_.arch == Arch::base_attention && (s == 1 || s == 3)) {
        h = base_[base_idx++](h, mode);
        record(s == 1 ? "attention1" : "attention2", h);
      }
    }
    h = relu(final_bn_(h, mode));
    record("features", h);
    return h;
  }

  /// [N,S,S,C] images -> [N,classes] logits.
  Tensor logits(const Tensor& images, Mode mode, std::vector<ShapeRecord>* log = nullptr) const {
    return classify(features(images, mode, log));
  }

  Tensor classify(const Tensor& features) const {
    if (!classifier_) throw std::logic_error("network was built without a classifier");
    return (*classifier_)(mean(features, {1, 2}));
  }

  const NetworkConfig& config() const { return cfg_; }
  std::size_t feature_size() const { return feature_size_; }
  std::size_t feature_channels() const { return cfg_.feature_channels(); }
  const std::vector<GlanBlock>& glan_blocks() const { return glan_; }
  const std::vector<BaseAttentionBlock>& base_blocks() const { return base_; }

  static std::size_t conv_out(std::size_t size, std::size_t kernel, std::size_t stride, std::size_t pad) {
    return (size + 2 * pad - kernel) / stride + 1;
  }

 private:
  NetworkConfig cfg_;
  Conv2d stem_;
  BatchNorm stem_bn_;
  std::vector<std::vector<ResidualUnit>> stages_;
  std::vector<GlanBlock> glan_;
  std::vector<BaseAttentionBlock> base_;
  BatchNorm final_bn_;
  std::optional<Linear> classifier_;
  std::size_t feature_size_ = 0;
};

}  // namespace tssi::nn
