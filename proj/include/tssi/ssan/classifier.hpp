#pragma once

#include <string>
#include <vector>

#include "tssi/encoding/image.hpp"
#include "tssi/nn/network.hpp"
#include "tssi/ssan/ssan.hpp"

namespace tssi::ssan {

/// Stacks images into an [N,H,W,C] tensor with pixels scaled to [0, 1].
inline Tensor images_to_tensor(const std::vector<const SkeletonImage*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: no images");
  const auto& first = images.front()->pixels;
  Tensor out({images.size(), first.height, first.width, first.channels});
  auto& v = out.values();
  const std::size_t per = first.data.size();
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& px = images[n]->pixels;
    if (px.height != first.height || px.width != first.width || px.channels != first.channels) {
      throw ShapeError("images_to_tensor: image " + std::to_string(n) + " differs in shape");
    }
    for (std::size_t i = 0; i < per; ++i) v[n * per + i] = px.data[i] / 255.0;
  }
  return out;
}

inline Tensor images_to_tensor(const std::vector<SkeletonImage>& images) {
  std::vector<const SkeletonImage*> ptrs;
  for (const auto& img : images) ptrs.push_back(&img);
  return images_to_tensor(ptrs);
}

/// Backbone shared across sub-images feeding the recurrent attention head.
class SsanClassifier {
 public:
  SsanClassifier(const nn::NetworkConfig& net_cfg, const SsanConfig& cfg, ParameterStore& store, Rng& rng)
      : backbone_(net_cfg, store, rng, "backbone", false),
        head_(cfg, backbone_.feature_size(), backbone_.feature_channels(), store, rng, "ssan") {}

  /// One [N,S,S,C] batch per sub-image, in temporal order. All sub-images
  /// go through the backbone as one stacked batch.
  Tensor logits(const std::vector<Tensor>& subimages, Mode mode, std::vector<Tensor>* masks = nullptr) const {
    if (subimages.empty()) throw std::invalid_argument("ssan: empty sub-image list");
    const std::size_t batch = subimages.front().dim(0);
    Tensor feats = backbone_.features(subimages.size() == 1 ? subimages.front() : concat(subimages, 0), mode);
    std::vector<Tensor> steps;
    for (std::size_t t = 0; t < subimages.size(); ++t) steps.push_back(slice(feats, 0, t * batch, batch));
    return head_(steps, masks);
  }

  const nn::AttentionNetwork& backbone() const { return backbone_; }
  const Ssan& head() const { return head_; }

 private:
  nn::AttentionNetwork backbone_;
  Ssan head_;
};

}  // namespace tssi::ssan
