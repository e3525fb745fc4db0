#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tssi/ssan/classifier.hpp"

using namespace tssi;
using namespace tssi::ssan;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

using Vec = std::vector<double>;

// Scalar reference for one LSTM step on a single batch row.
void lstm_oracle(const Vec& x, Vec& h, Vec& c, const Vec& w, const Vec& b) {
  const std::size_t d = h.size(), in = d + x.size();
  Vec z(h);
  z.insert(z.end(), x.begin(), x.end());
  Vec gates(4 * d);
  for (std::size_t k = 0; k < 4 * d; ++k) {
    double acc = b[k];
    for (std::size_t r = 0; r < in; ++r) acc += z[r] * w[r * 4 * d + k];
    gates[k] = acc;
  }
  for (std::size_t k = 0; k < d; ++k) {
    const double i = sig(gates[k]), f = sig(gates[d + k]), o = sig(gates[2 * d + k]), g = std::tanh(gates[3 * d + k]);
    c[k] = f * c[k] + i * g;
    h[k] = o * std::tanh(c[k]);
  }
}

// Scalar reference for the mask of one batch row.
Vec mask_oracle(const Vec& h, const Vec& w, AttentionMode mode, std::size_t k2, std::size_t channels) {
  const std::size_t width = mode == AttentionMode::softmax_spatial ? k2 : k2 * channels;
  Vec logits(width, 0.0);
  for (std::size_t col = 0; col < width; ++col)
    for (std::size_t r = 0; r < h.size(); ++r) logits[col] += h[r] * w[r * width + col];
  if (mode == AttentionMode::sigmoid_spatial_channel) {
    for (auto& v : logits) v = sig(v);
    return logits;
  }
  double total = 0.0;
  for (double v : logits) total += std::exp(v);
  for (auto& v : logits) v = std::exp(v) / total;
  return logits;
}

// Triple loop over (channel, position) for one batch row of X[K*K, D].
Vec pool_oracle(const double* x, const Vec& mask, AttentionMode mode, std::size_t k2, std::size_t channels) {
  Vec out(channels, 0.0);
  for (std::size_t z = 0; z < channels; ++z) {
    for (std::size_t i = 0; i < k2; ++i) {
      const double l = mode == AttentionMode::softmax_spatial ? mask[i] : mask[i * channels + z];
      out[z] += l * x[i * channels + z];
    }
    if (mode == AttentionMode::sigmoid_spatial_channel) out[z] /= static_cast<double>(k2);
  }
  return out;
}

Vec row(const Tensor& t, std::size_t n) {
  const std::size_t per = t.numel() / t.dim(0);
  return Vec(t.values().begin() + static_cast<std::ptrdiff_t>(n * per),
             t.values().begin() + static_cast<std::ptrdiff_t>((n + 1) * per));
}

}  // namespace

TEST(LstmStep, ZeroWeightsZeroState) {
  LstmWeights w{Tensor({7, 12}, 0.0), Tensor({12}, 0.0)};
  Rng rng(1);
  const auto s = lstm_step(rng.normal_tensor({2, 4}), LstmState::zeros(2, 3), w);
  for (double v : s.c.values()) EXPECT_EQ(v, 0.0);
  for (double v : s.h.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, ZeroWeightsHalveMemory) {
  LstmWeights w{Tensor({7, 12}, 0.0), Tensor({12}, 0.0)};
  Rng rng(2);
  Tensor c = rng.normal_tensor({2, 3});
  const auto s = lstm_step(rng.normal_tensor({2, 4}), {Tensor({2, 3}, 0.0), c}, w);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_DOUBLE_EQ(s.c.values()[i], 0.5 * c.values()[i]);
    EXPECT_DOUBLE_EQ(s.h.values()[i], 0.5 * std::tanh(0.5 * c.values()[i]));
  }
}

TEST(LstmStep, MatchesScalarOracle) {
  Rng rng(3);
  const std::size_t d = 5, in = 4, batch = 3;
  LstmWeights w{rng.normal_tensor({d + in, 4 * d}, 0.4), rng.normal_tensor({4 * d}, 0.4)};
  Tensor x = rng.normal_tensor({batch, in}), h = rng.normal_tensor({batch, d}), c = rng.normal_tensor({batch, d});
  const auto s = lstm_step(x, {h, c}, w);
  for (std::size_t n = 0; n < batch; ++n) {
    Vec hh = row(h, n), cc = row(c, n);
    lstm_oracle(row(x, n), hh, cc, w.weight.values(), w.bias.values());
    for (std::size_t k = 0; k < d; ++k) {
      EXPECT_NEAR(s.h.values()[n * d + k], hh[k], 1e-12);
      EXPECT_NEAR(s.c.values()[n * d + k], cc[k], 1e-12);
    }
  }
}

TEST(LstmStep, SaturatedForgetGateCarriesMemory) {
  const std::size_t d = 4, in = 3;
  Rng rng(4);
  Tensor bias({4 * d}, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    bias.values()[k] = -40.0;     // input gate closed
    bias.values()[d + k] = 40.0;  // forget gate open
  }
  LstmWeights w{Tensor({d + in, 4 * d}, 0.0), bias};
  Tensor c = rng.normal_tensor({2, d});
  const auto s = lstm_step(rng.normal_tensor({2, in}), {rng.normal_tensor({2, d}), c}, w);
  for (std::size_t i = 0; i < 2 * d; ++i) EXPECT_LT(std::abs(s.c.values()[i] - c.values()[i]), 1e-6);
}

TEST(LstmStep, RejectsMismatchedShapes) {
  LstmWeights w{Tensor({7, 12}, 0.0), Tensor({12}, 0.0)};
  EXPECT_THROW(lstm_step(Tensor({2, 5}, 0.0), LstmState::zeros(2, 3), w), ShapeError);
  EXPECT_THROW(lstm_step(Tensor({2, 4}, 0.0), LstmState::zeros(3, 3), w), ShapeError);
}

TEST(AttentionMask, ZeroWeights) {
  AttentionHead soft{AttentionMode::softmax_spatial, 3, 2, Tensor({4, 9}, 0.0)};
  const Tensor uniform = attention_mask(Tensor({2, 4}, 0.3), soft);
  for (double v : uniform.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 9.0);
  AttentionHead gate{AttentionMode::sigmoid_spatial_channel, 3, 2, Tensor({4, 18}, 0.0)};
  const Tensor m = attention_mask(Tensor({2, 4}, 0.3), gate);
  EXPECT_EQ(m.shape(), (Shape{2, 9, 2}));
  for (double v : m.values()) EXPECT_EQ(v, 0.5);
}

TEST(AttentionMask, MatchesOracleAndNormalizes) {
  Rng rng(5);
  for (auto mode : {AttentionMode::softmax_spatial, AttentionMode::sigmoid_spatial_channel}) {
    const std::size_t k = 3, d = 4, ch = 2;
    const std::size_t width = mode == AttentionMode::softmax_spatial ? k * k : k * k * ch;
    for (int trial = 0; trial < 50; ++trial) {
      AttentionHead head{mode, k, ch, rng.normal_tensor({d, width}, 2.0)};
      Tensor h = rng.normal_tensor({2, d}, 2.0);
      const Tensor m = attention_mask(h, head);
      for (std::size_t n = 0; n < 2; ++n) {
        const Vec expect = mask_oracle(row(h, n), head.weight.values(), mode, k * k, ch);
        const Vec got = row(m, n);
        double total = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
          EXPECT_NEAR(got[i], expect[i], 1e-12);
          total += got[i];
          if (mode == AttentionMode::sigmoid_spatial_channel) {
            EXPECT_GT(got[i], 0.0);
            EXPECT_LT(got[i], 1.0);
          }
        }
        if (mode == AttentionMode::softmax_spatial) {
          EXPECT_NEAR(total, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(ApplyAttention, UniformMaskGivesSpatialMeanAndOneHotSelects) {
  Rng rng(6);
  Tensor x = rng.normal_tensor({1, 2, 2, 3});
  const Tensor pooled = apply_attention(x, Tensor({1, 4}, 0.25), AttentionMode::softmax_spatial);
  for (std::size_t z = 0; z < 3; ++z) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 4; ++i) mean += x.values()[i * 3 + z] / 4.0;
    EXPECT_NEAR(pooled.values()[z], mean, 1e-15);
  }
  Tensor hot({1, 4}, 0.0);
  hot.values()[2] = 1.0;
  const Tensor picked = apply_attention(x, hot, AttentionMode::softmax_spatial);
  for (std::size_t z = 0; z < 3; ++z) EXPECT_EQ(picked.values()[z], x.values()[2 * 3 + z]);
  EXPECT_THROW(apply_attention(x, Tensor({1, 5}, 0.2), AttentionMode::softmax_spatial), ShapeError);
  EXPECT_THROW(apply_attention(x, Tensor({1, 4}, 0.2), AttentionMode::sigmoid_spatial_channel), ShapeError);
}

TEST(ApplyAttention, MatchesTripleLoopAndStaysInConvexHull) {
  Rng rng(7);
  const std::size_t n = 3, k = 3, ch = 4;
  Tensor x = rng.normal_tensor({n, k, k, ch});
  AttentionHead soft{AttentionMode::softmax_spatial, k, ch, rng.normal_tensor({2, k * k})};
  AttentionHead gate{AttentionMode::sigmoid_spatial_channel, k, ch, rng.normal_tensor({2, k * k * ch})};
  Tensor h = rng.normal_tensor({n, 2});
  for (const auto* head : {&soft, &gate}) {
    const Tensor m = attention_mask(h, *head);
    const Tensor pooled = apply_attention(x, m, head->mode);
    for (std::size_t b = 0; b < n; ++b) {
      const Vec expect = pool_oracle(x.values().data() + b * k * k * ch, row(m, b), head->mode, k * k, ch);
      for (std::size_t z = 0; z < ch; ++z) {
        const double got = pooled.values()[b * ch + z];
        EXPECT_NEAR(got, expect[z], 1e-12);
        if (head->mode == AttentionMode::softmax_spatial) {
          double lo = 1e300, hi = -1e300;
          for (std::size_t i = 0; i < k * k; ++i) {
            lo = std::min(lo, x.values()[(b * k * k + i) * ch + z]);
            hi = std::max(hi, x.values()[(b * k * k + i) * ch + z]);
          }
          EXPECT_GE(got, lo - 1e-12);
          EXPECT_LE(got, hi + 1e-12);
        }
      }
    }
  }
}

TEST(SsanForward, ThreeStepsMatchUnrolledOracle) {
  for (auto mode : {AttentionMode::softmax_spatial, AttentionMode::sigmoid_spatial_channel}) {
    for (auto readout : {Readout::mean, Readout::last}) {
      Rng rng(8);
      ParameterStore store;
      SsanConfig cfg;
      cfg.subimages = 3;
      cfg.hidden = 4;
      cfg.mode = mode;
      cfg.readout = readout;
      cfg.classes = 3;
      const std::size_t k = 2, ch = 3, batch = 2;
      Ssan model(cfg, k, ch, store, rng);
      std::vector<Tensor> feats;
      for (int t = 0; t < 3; ++t) feats.push_back(rng.normal_tensor({batch, k, k, ch}));
      const Tensor logits = model(feats);

      const auto& lw = model.lstm();
      const auto& cls = model.classifier();
      for (std::size_t b = 0; b < batch; ++b) {
        Vec h(4, 0.0), c(4, 0.0), total(3, 0.0), last(3, 0.0);
        for (std::size_t t = 0; t < 3; ++t) {
          const Vec m = mask_oracle(h, model.head().weight.values(), mode, k * k, ch);
          const Vec x = pool_oracle(feats[t].values().data() + b * k * k * ch, m, mode, k * k, ch);
          lstm_oracle(x, h, c, lw.weight.values(), lw.bias.values());
          for (std::size_t j = 0; j < 3; ++j) {
            double v = cls.bias.values()[j];
            for (std::size_t r = 0; r < 4; ++r) v += h[r] * cls.weight.values()[r * 3 + j];
            total[j] += v / 3.0;
            last[j] = v;
          }
        }
        for (std::size_t j = 0; j < 3; ++j) {
          EXPECT_NEAR(logits.values()[b * 3 + j], readout == Readout::mean ? total[j] : last[j], 1e-10);
        }
      }
    }
  }
}

TEST(SsanForward, ZeroLstmWeightsKeepMasksConstant) {
  Rng rng(9);
  ParameterStore store;
  SsanConfig cfg;
  cfg.hidden = 3;
  cfg.classes = 2;
  Ssan model(cfg, 2, 2, store, rng);
  Tensor lstm_weight = model.lstm().weight;  // shares storage with the model
  std::fill(lstm_weight.values().begin(), lstm_weight.values().end(), 0.0);
  Tensor f = rng.normal_tensor({1, 2, 2, 2});
  std::vector<Tensor> masks;
  model({f, f, f}, &masks);
  ASSERT_EQ(masks.size(), 3u);
  for (const auto& m : masks) {
    for (double v : m.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  }
  EXPECT_THROW(model({}), std::invalid_argument);
}

TEST(SsanConfigJson, RoundTrip) {
  SsanConfig cfg;
  cfg.subimages = 7;
  cfg.overlap = 0.25;
  cfg.mode = AttentionMode::sigmoid_spatial_channel;
  cfg.readout = Readout::last;
  const auto back = ssan_config_from_json(to_json(cfg));
  EXPECT_EQ(back.subimages, 7u);
  EXPECT_EQ(back.overlap, 0.25);
  EXPECT_EQ(back.mode, cfg.mode);
  EXPECT_EQ(back.readout, cfg.readout);
}

TEST(SsanClassifier, SequenceToLogitsWithSharedBackbone) {
  Rng rng(10);
  ParameterStore store;
  SsanConfig cfg;
  cfg.classes = 4;
  cfg.hidden = 8;
  SsanClassifier model(nn::NetworkConfig::desk_scale(nn::Arch::glan, 4, 16, 28), cfg, store, rng);

  const auto topo = load_topology(std::string(TSSI_DATA_DIR) + "/topologies/ntu25.json");
  SkeletonSequence seq;
  std::normal_distribution<double> noise;
  for (int t = 0; t < 300; ++t) {
    SkeletonFrame f(25, 3);
    for (auto& v : f.coords) v = noise(rng.engine());
    seq.frames.push_back(f);
  }
  const auto images = encode_subimages(seq, euler_tour(topo), {5, 0.5}, 28);
  ASSERT_EQ(images.size(), 5u);
  std::vector<Tensor> steps;
  for (const auto& img : images) steps.push_back(images_to_tensor({&img}));
  const Tensor logits = model.logits(steps, Mode::train);
  EXPECT_EQ(logits.shape(), (Shape{1, 4}));

  backward(cross_entropy(logits, {2}));
  std::size_t backbone = 0, head = 0;
  for (const auto& p : store.all()) {
    if (!p.trainable) continue;
    double norm = 0.0;
    for (double g : p.tensor.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << p.name;
    (p.name.rfind("backbone", 0) == 0 ? backbone : head) += 1;
  }
  EXPECT_GT(backbone, 0u);
  EXPECT_EQ(head, 5u);  // lstm weight/bias, attention weight, classifier weight/bias
}

TEST(SsanClassifier, IdenticalSubimagesShareFeatures) {
  Rng rng(11);
  ParameterStore store;
  SsanConfig cfg;
  cfg.classes = 3;
  SsanClassifier model(nn::NetworkConfig::desk_scale(nn::Arch::plain, 3, 16, 28), cfg, store, rng);
  Tensor img = rng.uniform_tensor({1, 28, 28, 3}, 0.0, 1.0);
  auto step_features = [&] {
    const Tensor f = model.backbone().features(concat({img, img}, 0), Mode::eval);
    return std::make_pair(row(f, 0), row(f, 1));
  };
  auto expect_same = [](const Vec& a, const Vec& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  };
  const auto before = step_features();
  expect_same(before.first, before.second);
  auto& k = const_cast<Tensor&>(store.find("backbone.stem.kernel")->tensor).values();
  k[0] += 0.5;
  const auto after = step_features();
  expect_same(after.first, after.second);
  EXPECT_NE(after.first, before.first);
}
