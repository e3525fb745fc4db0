#pragma once

#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tssi/encoding/image.hpp"
#include "tssi/nn/network.hpp"
#include "tssi/ssan/classifier.hpp"
#include "tssi/tensor/checkpoint.hpp"

namespace tssi::harness {

/// Everything needed to rebuild a model: encoding, architecture, head.
struct PipelineConfig {
  OrderKind order = OrderKind::euler_tour;
  /// Column order for chain encodings; empty means joints 1..N.
  std::vector<JointId> chain;
  std::size_t image_size = 56;
  nn::NetworkConfig network = nn::NetworkConfig::desk_scale(nn::Arch::glan, 4);
  bool use_ssan = false;
  ssan::SsanConfig ssan;
  std::uint64_t init_seed = 1;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"order", to_string(c.order)}, {"chain", c.chain},
          {"image_size", c.image_size},  {"network", nn::to_json(c.network)},
          {"use_ssan", c.use_ssan},      {"ssan", ssan::to_json(c.ssan)},
          {"init_seed", c.init_seed}};
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.order = j.at("order").get<std::string>() == "chain" ? OrderKind::chain : OrderKind::euler_tour;
  c.chain = j.value("chain", std::vector<JointId>{});
  c.image_size = j.at("image_size").get<std::size_t>();
  c.network = nn::network_config_from_json(j.at("network"));
  c.use_ssan = j.value("use_ssan", false);
  if (j.contains("ssan")) c.ssan = ssan::ssan_config_from_json(j.at("ssan"));
  c.init_seed = j.value("init_seed", std::uint64_t{1});
  return c;
}

/// A fixed random permutation of joints 1..N.
inline std::vector<JointId> random_chain(std::size_t joints, std::uint64_t seed) {
  std::vector<JointId> perm(joints);
  std::iota(perm.begin(), perm.end(), JointId{1});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  return perm;
}

/// Encoded form of one person sequence: one [1,S,S,C] tensor per sub-image
/// (a single entry without the recurrent head).
using EncodedPerson = std::vector<Tensor>;

/// Encoder plus network, with the parameters in one store.
class ActionModel {
 public:
  ActionModel(PipelineConfig cfg, SkeletonTopology topology, std::vector<std::string> class_names)
      : cfg_(std::move(cfg)), topology_(std::move(topology)), class_names_(std::move(class_names)) {
    if (class_names_.size() != cfg_.network.classes) {
      throw std::invalid_argument("model: " + std::to_string(class_names_.size()) + " class names for a " +
                                  std::to_string(cfg_.network.classes) + "-class network");
    }
    if (cfg_.network.input_size != cfg_.image_size) {
      throw std::invalid_argument("model: image size " + std::to_string(cfg_.image_size) +
                                  " differs from network input " + std::to_string(cfg_.network.input_size));
    }
    if (cfg_.order == OrderKind::euler_tour) {
      order_ = euler_tour(topology_);
    } else {
      order_ = cfg_.chain.empty() ? identity_chain(topology_) : chain_order(topology_, cfg_.chain);
    }
    Rng rng(cfg_.init_seed);
    if (cfg_.use_ssan) {
      cfg_.ssan.classes = cfg_.network.classes;
      ssan_.emplace(cfg_.network, cfg_.ssan, store_, rng);
    } else {
      net_.emplace(cfg_.network, store_, rng);
    }
  }

  ActionModel(const ActionModel&) = delete;
  ActionModel& operator=(const ActionModel&) = delete;

  EncodedPerson encode(const SkeletonSequence& seq) const {
    EncodedPerson out;
    if (cfg_.use_ssan) {
      for (const auto& img : encode_subimages(seq, order_, {cfg_.ssan.subimages, cfg_.ssan.overlap}, cfg_.image_size)) {
        out.push_back(ssan::images_to_tensor({&img}));
      }
    } else {
      const auto img = tssi::encode(seq, order_, cfg_.image_size);
      out.push_back(ssan::images_to_tensor({&img}));
    }
    return out;
  }

  /// [B, classes] logits for a batch of encoded persons.
  Tensor logits(const std::vector<const EncodedPerson*>& batch, Mode mode) const {
    if (batch.empty()) throw std::invalid_argument("model: empty batch");
    const std::size_t steps = batch.front()->size();
    std::vector<Tensor> stacked;
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<Tensor> parts;
      for (const auto* e : batch) parts.push_back(e->at(t));
      stacked.push_back(parts.size() == 1 ? parts.front() : concat(parts, 0));
    }
    if (ssan_) return ssan_->logits(stacked, mode);
    return net_->logits(stacked.front(), mode);
  }

  const PipelineConfig& config() const { return cfg_; }
  const SkeletonTopology& topology() const { return topology_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const JointOrder& order() const { return order_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  nlohmann::json meta() const {
    return {{"pipeline", to_json(cfg_)}, {"topology", topology_to_json(topology_)}, {"classes", class_names_}};
  }

  void save(const std::string& path, nlohmann::json extra = nlohmann::json::object()) const {
    nlohmann::json m = meta();
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_checkpoint(path, snapshot(store_, m));
  }

  static std::unique_ptr<ActionModel> load(const std::string& path) {
    const Checkpoint ckpt = read_checkpoint(path);
    try {
      auto model = std::make_unique<ActionModel>(pipeline_config_from_json(ckpt.meta.at("pipeline")),
                                                 topology_from_json(ckpt.meta.at("topology")),
                                                 ckpt.meta.at("classes").get<std::vector<std::string>>());
      restore(ckpt, model->store_);
      return model;
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(path + ": incomplete model metadata: " + e.what());
    }
  }

 private:
  PipelineConfig cfg_;
  SkeletonTopology topology_;
  std::vector<std::string> class_names_;
  JointOrder order_;
  ParameterStore store_;
  std::optional<nn::AttentionNetwork> net_;
  std::optional<ssan::SsanClassifier> ssan_;
};

}  // namespace tssi::harness
