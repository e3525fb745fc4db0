#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tssi/nn/layers.hpp"

namespace tssi::nn {

/// Pre-activation bottleneck unit: three BN-ReLU-conv stages (1x1 reduce,
/// 3x3, 1x1 expand) plus a skip link. The skip is the identity unless the
/// channel count or stride changes, in which case a strided 1x1 projection of
/// the activated input is used.
class ResidualUnit {
 public:
  ResidualUnit() = default;
  ResidualUnit(ParameterStore& store, const std::string& name, std::size_t in_c, std::size_t mid_c, std::size_t out_c,
               std::size_t stride, Rng& rng)
      : in_c_(in_c), out_c_(out_c), stride_(stride) {
    bn1_ = BatchNorm(store, name + ".bn1", in_c);
    conv1_ = Conv2d(store, name + ".conv1", in_c, mid_c, 1, 1, rng);
    bn2_ = BatchNorm(store, name + ".bn2", mid_c);
    conv2_ = Conv2d(store, name + ".conv2", mid_c, mid_c, 3, stride, rng);
    bn3_ = BatchNorm(store, name + ".bn3", mid_c);
    conv3_ = Conv2d(store, name + ".conv3", mid_c, out_c, 1, 1, rng);
    if (in_c != out_c || stride != 1) projection_ = Conv2d(store, name + ".proj", in_c, out_c, 1, stride, rng);
  }

  Tensor operator()(const Tensor& x, Mode mode) const {
    if (x.rank() != 4 || x.dim(3) != in_c_) {
      throw ShapeError("residual unit expects " + std::to_string(in_c_) + " channels, got " + shape_str(x.shape()));
    }
    Tensor a = relu(bn1_(x, mode));
    Tensor skip = projection_ ? (*projection_)(a) : x;
    Tensor h = conv1_(a);
    h = conv2_(relu(bn2_(h, mode)));
    h = conv3_(relu(bn3_(h, mode)));
    return add(skip, h);
  }

  std::size_t in_channels() const { return in_c_; }
  std::size_t out_channels() const { return out_c_; }
  std::size_t stride() const { return stride_; }
  bool has_projection() const { return projection_.has_value(); }

  const Conv2d& conv(int stage) const { return stage == 1 ? conv1_ : stage == 2 ? conv2_ : conv3_; }

 private:
  std::size_t in_c_ = 0, out_c_ = 0, stride_ = 1;
  BatchNorm bn1_, bn2_, bn3_;
  Conv2d conv1_, conv2_, conv3_;
  std::optional<Conv2d> projection_;
};

inline std::size_t bottleneck_width(std::size_t channels) { return std::max<std::size_t>(1, channels / 4); }

enum class MaskActivation { sigmoid, softmax };

inline std::string to_string(MaskActivation a) { return a == MaskActivation::sigmoid ? "sigmoid" : "softmax"; }
inline MaskActivation mask_activation_from_string(const std::string& s) {
  if (s == "sigmoid") return MaskActivation::sigmoid;
  if (s == "softmax") return MaskActivation::softmax;
  throw std::invalid_argument("unknown mask activation '" + s + "'");
}

/// Softmax over the spatial positions of every channel plane of [N,H,W,C].
inline Tensor spatial_softmax(const Tensor& logits) {
  const Shape s = logits.shape();
  Tensor flat = reshape(logits, {s[0], s[1] * s[2], s[3]});
  return reshape(softmax(flat, 1), s);
}

inline Tensor apply_mask_activation(const Tensor& logits, MaskActivation act) {
  return act == MaskActivation::sigmoid ? sigmoid(logits) : spatial_softmax(logits);
}

/// Attention fusion: out = F + F * M.
inline Tensor fuse_attention(const Tensor& features, const Tensor& mask) { return add(features, mul(features, mask)); }

/// Mask branch of a single 3x3 convolution; the residual branch is the
/// identity.
class BaseAttentionBlock {
 public:
  BaseAttentionBlock() = default;
  BaseAttentionBlock(ParameterStore& store, const std::string& name, std::size_t channels, MaskActivation act, Rng& rng)
      : act_(act) {
    conv_ = Conv2d(store, name + ".mask_conv", channels, channels, 3, 1, rng, true);
  }

  Tensor mask(const Tensor& x) const { return apply_mask_activation(conv_(x), act_); }
  Tensor operator()(const Tensor& x, Mode = Mode::train) const { return fuse_attention(x, mask(x)); }

  const Conv2d& mask_conv() const { return conv_; }
  MaskActivation activation() const { return act_; }

 private:
  MaskActivation act_ = MaskActivation::sigmoid;
  Conv2d conv_;
};

/// Number of 2x down-samplings that take `size` to `bottom`. Throws if the
/// size cannot reach the bottom through exact halvings.
inline std::size_t hourglass_depth(std::size_t size, std::size_t bottom) {
  if (bottom == 0) throw std::invalid_argument("hourglass: bottom size must be positive");
  if (size < bottom) {
    throw std::invalid_argument("hourglass: input size " + std::to_string(size) + " is below the bottom size " +
                                std::to_string(bottom));
  }
  std::size_t depth = 0;
  while (size > bottom) {
    if (size % 2 != 0) {
      throw std::invalid_argument("hourglass: spatial size " + std::to_string(size) +
                                  " is not divisible by 2 on the way down to " + std::to_string(bottom));
    }
    size /= 2;
    ++depth;
  }
  if (size != bottom) {
    throw std::invalid_argument("hourglass: halving overshoots the bottom size " + std::to_string(bottom));
  }
  return depth;
}

/// Encoder-decoder mask branch. Each down unit max-pools then applies a
/// residual unit and keeps the pre-pool feature as a link; each up unit
/// upsamples bilinearly, applies a residual unit and adds the link of the
/// same size. A residual unit sits at the bottom and a BN-ReLU-1x1 conv head
/// feeds the mask activation.
class HourglassMask {
 public:
  HourglassMask() = default;
  HourglassMask(ParameterStore& store, const std::string& name, std::size_t channels, std::size_t input_size,
                std::size_t bottom_size, MaskActivation act, Rng& rng)
      : input_size_(input_size), bottom_size_(bottom_size), act_(act) {
    depth_ = hourglass_depth(input_size, bottom_size);
    const std::size_t mid = bottleneck_width(channels);
    for (std::size_t l = 0; l < depth_; ++l) {
      down_.emplace_back(store, name + ".down" + std::to_string(l), channels, mid, channels, 1, rng);
    }
    bottom_ = ResidualUnit(store, name + ".bottom", channels, mid, channels, 1, rng);
    for (std::size_t l = 0; l < depth_; ++l) {
      up_.emplace_back(store, name + ".up" + std::to_string(l), channels, mid, channels, 1, rng);
    }
    head_bn_ = BatchNorm(store, name + ".head_bn", channels);
    head_ = Conv2d(store, name + ".head", channels, channels, 1, 1, rng, true);
  }

  Tensor operator()(const Tensor& x, Mode mode) const {
    if (x.rank() != 4 || x.dim(1) != input_size_ || x.dim(2) != input_size_) {
      throw ShapeError("hourglass built for " + std::to_string(input_size_) + "x" + std::to_string(input_size_) +
                       " input, got " + shape_str(x.shape()));
    }
    std::vector<Tensor> links;
    Tensor h = x;
    for (const auto& unit : down_) {
      links.push_back(h);
      h = unit(maxpool2d(h, 2, 2), mode);
    }
    h = bottom_(h, mode);
    for (std::size_t l = 0; l < depth_; ++l) {
      const Tensor& link = links[depth_ - 1 - l];
      h = add(up_[l](bilinear_upsample(h, link.dim(1), link.dim(2)), mode), link);
    }
    return apply_mask_activation(head_(relu(head_bn_(h, mode))), act_);
  }

  std::size_t depth() const { return depth_; }
  std::size_t down_units() const { return down_.size(); }
  std::size_t up_units() const { return up_.size(); }
  std::size_t bottom_size() const { return bottom_size_; }
  const Conv2d& head() const { return head_; }

 private:
  std::size_t input_size_ = 0, bottom_size_ = 7, depth_ = 0;
  MaskActivation act_ = MaskActivation::sigmoid;
  std::vector<ResidualUnit> down_, up_;
  ResidualUnit bottom_;
  BatchNorm head_bn_;
  Conv2d head_;
};

/// Attention block with an hourglass mask branch and two residual units on
/// the trunk: out = R(x) + R(x) * M(x).
class GlanBlock {
 public:
  GlanBlock() = default;
  GlanBlock(ParameterStore& store, const std::string& name, std::size_t channels, std::size_t input_size,
            std::size_t bottom_size, MaskActivation act, Rng& rng) {
    const std::size_t mid = bottleneck_width(channels);
    trunk1_ = ResidualUnit(store, name + ".trunk1", channels, mid, channels, 1, rng);
    trunk2_ = ResidualUnit(store, name + ".trunk2", channels, mid, channels, 1, rng);
    mask_ = HourglassMask(store, name + ".mask", channels, input_size, bottom_size, act, rng);
  }

  Tensor trunk(const Tensor& x, Mode mode) const { return trunk2_(trunk1_(x, mode), mode); }
  Tensor mask(const Tensor& x, Mode mode) const { return mask_(x, mode); }
  Tensor operator()(const Tensor& x, Mode mode) const { return fuse_attention(trunk(x, mode), mask(x, mode)); }

  const HourglassMask& hourglass() const { return mask_; }

 private:
  ResidualUnit trunk1_, trunk2_;
  HourglassMask mask_;
};

}  // namespace tssi::nn
