#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "tssi/encoding/image.hpp"

using namespace tssi;

namespace {

SkeletonTopology ntu() { return load_topology(std::string(TSSI_DATA_DIR) + "/topologies/ntu25.json"); }

SkeletonSequence random_sequence(std::size_t frames, std::size_t joints, std::size_t axes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SkeletonSequence seq;
  for (std::size_t t = 0; t < frames; ++t) {
    SkeletonFrame f(joints, axes);
    for (auto& v : f.coords) v = u(gen);
    seq.frames.push_back(f);
  }
  return seq;
}

SkeletonSequence constant_sequence(std::size_t frames, std::size_t joints, double value) {
  SkeletonSequence seq;
  for (std::size_t t = 0; t < frames; ++t) {
    SkeletonFrame f(joints, 3);
    std::fill(f.coords.begin(), f.coords.end(), value);
    seq.frames.push_back(f);
  }
  return seq;
}

}  // namespace

TEST(NormalizeChannel, Examples) {
  EXPECT_EQ(normalize_channel(Grid::from_rows({{0, 10}})).data, (std::vector<double>{0, 255}));
  EXPECT_EQ(normalize_channel(Grid::from_rows({{0, 5, 10}})).data, (std::vector<double>{0, 127.5, 255}));
  EXPECT_EQ(normalize_channel(Grid::from_rows({{7, 7}})).data, (std::vector<double>{0, 0}));
}

TEST(ResizeBilinear, TwoByTwoToThreeByThree) {
  const Grid out = resize_bilinear(Grid::from_rows({{1, 2}, {3, 4}}), 3, 3);
  EXPECT_DOUBLE_EQ(out.at(1, 1), 2.5);
  EXPECT_EQ(out.at(0, 0), 1.0);
  EXPECT_EQ(out.at(0, 2), 2.0);
  EXPECT_EQ(out.at(2, 0), 3.0);
  EXPECT_EQ(out.at(2, 2), 4.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1), 1.5);
  EXPECT_DOUBLE_EQ(out.at(1, 0), 2.0);
}

TEST(ResizeBilinear, SameSizeAndConstantExtension) {
  const Grid g = Grid::from_rows({{1.25, -3, 8}, {0, 4, 9.5}});
  EXPECT_EQ(resize_bilinear(g, 2, 3).data, g.data);
  const Grid one = resize_bilinear(Grid::from_rows({{6.5}}), 4, 4);
  for (double v : one.data) EXPECT_EQ(v, 6.5);
  EXPECT_THROW(resize_bilinear(g, 0, 3), std::invalid_argument);
}

TEST(ResizeBilinear, ExactOnBilinearFieldsAndCorners) {
  // f(y, x) = 2 + 3y - x + 0.5xy on a 5x7 grid; sampled at align-corners
  // positions of a 9x4 grid.
  auto field = [](double y, double x) { return 2 + 3 * y - x + 0.5 * x * y; };
  Grid g(5, 7);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 7; ++x) g.at(y, x) = field(y, x);
  const Grid out = resize_bilinear(g, 9, 4);
  for (std::size_t y = 0; y < 9; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      EXPECT_NEAR(out.at(y, x), field(y * 4.0 / 8.0, x * 6.0 / 3.0), 1e-12);
    }
  }
  EXPECT_EQ(out.at(0, 0), g.at(0, 0));
  EXPECT_EQ(out.at(0, 3), g.at(0, 6));
  EXPECT_EQ(out.at(8, 0), g.at(4, 0));
  EXPECT_EQ(out.at(8, 3), g.at(4, 6));
}

TEST(Encode, NtuTourImageShape) {
  const auto topo = ntu();
  const auto order = euler_tour(topo);
  const auto seq = random_sequence(40, 25, 3, 1);
  EXPECT_EQ(raw_skeleton_grid(seq, order).width, 49u);
  const auto img = encode(seq, order);
  EXPECT_EQ(img.height(), 224u);
  EXPECT_EQ(img.width(), 224u);
  EXPECT_EQ(img.channels(), 3u);
  EXPECT_EQ(img.meta.source_frames, 40u);
  EXPECT_EQ(img.meta.source_columns, 49u);
  EXPECT_EQ(img.meta.order_kind, OrderKind::euler_tour);
  for (double v : img.pixels.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 255.0);
  }
}

TEST(Encode, SameSizeKeepsCornerPixels) {
  // 224 frames x 224 columns (a chain over 224 joints).
  const auto seq = random_sequence(224, 224, 3, 2);
  SkeletonTopology flat;
  flat.joint_count = 224;
  const auto img = encode(seq, identity_chain(flat), 224);
  Grid raw = raw_skeleton_grid(seq, identity_chain(flat));
  for (std::size_t c = 0; c < 3; ++c) raw.set_channel(c, normalize_channel(raw.channel(c)));
  EXPECT_EQ(img.pixels.data, raw.data);
}

TEST(Encode, ConstantSequenceIsBlack) {
  const auto img = encode(constant_sequence(30, 25, 0.7), euler_tour(ntu()));
  for (double v : img.pixels.data) EXPECT_EQ(v, 0.0);
}

TEST(Encode, RejectsEmptySequenceAndBadOrder) {
  EXPECT_THROW(encode(SkeletonSequence{}, euler_tour(ntu())), std::invalid_argument);
  const auto seq = random_sequence(5, 20, 3, 3);
  EXPECT_THROW(encode(seq, euler_tour(ntu())), std::invalid_argument);
}

TEST(Encode, TwoAxisInputCarriesConfidenceChannel) {
  auto seq = random_sequence(6, 25, 2, 4);
  for (auto& f : seq.frames) f.confidence[3] = 0.5;
  const auto order = euler_tour(ntu());
  const Grid raw = raw_skeleton_grid(seq, order);
  EXPECT_EQ(raw.channels, 3u);
  EXPECT_EQ(raw.at(0, 3, 2), 0.5);  // column 3 of the tour is joint 4
  EXPECT_EQ(encode(seq, order).meta.channel_names, (std::vector<std::string>{"x", "y", "confidence"}));
}

TEST(Encode, AffineMapPerChannelLeavesImageUnchanged) {
  const auto order = euler_tour(ntu());
  const auto seq = random_sequence(50, 25, 3, 5);
  const auto base = encode(seq, order, 64);

  // Power-of-two scale with a dyadic shift on dyadic data: exact arithmetic,
  // so the image must match bit for bit.
  auto dyadic = seq;
  for (auto& f : dyadic.frames)
    for (auto& v : f.coords) v = std::round(v * 1024.0) / 1024.0;
  auto dyadic_mapped = dyadic;
  for (auto& f : dyadic_mapped.frames)
    for (std::size_t j = 0; j < 25; ++j) {
      f.at(j, 0) = 4.0 * f.at(j, 0) + 0.5;
      f.at(j, 1) = 0.25 * f.at(j, 1) - 3.0;
      f.at(j, 2) = 2.0 * f.at(j, 2) + 1.0;
    }
  EXPECT_EQ(encode(dyadic, order, 64).pixels.data, encode(dyadic_mapped, order, 64).pixels.data);

  // Arbitrary positive maps: equal up to rounding.
  auto mapped = seq;
  for (auto& f : mapped.frames)
    for (std::size_t j = 0; j < 25; ++j) {
      f.at(j, 0) = 3.7 * f.at(j, 0) + 12.1;
      f.at(j, 1) = 0.013 * f.at(j, 1) - 4.0;
      f.at(j, 2) = 250.0 * f.at(j, 2);
    }
  const auto other = encode(mapped, order, 64);
  for (std::size_t i = 0; i < base.pixels.data.size(); ++i) {
    EXPECT_NEAR(base.pixels.data[i], other.pixels.data[i], 1e-9);
  }
}

TEST(Encode, RowsFollowFramesAndColumnsFollowOrder) {
  const auto order = euler_tour(ntu());
  auto seq = random_sequence(8, 25, 3, 6);
  const Grid before = raw_skeleton_grid(seq, order);
  seq.frames[5].at(20, 1) += 1.0;  // joint 21
  const Grid after = raw_skeleton_grid(seq, order);
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t col = 0; col < order.size(); ++col) {
      for (std::size_t c = 0; c < 3; ++c) {
        const bool touched = t == 5 && order.order[col] == 21 && c == 1;
        EXPECT_EQ(before.at(t, col, c) != after.at(t, col, c), touched) << t << "," << col << "," << c;
      }
    }
  }
}

TEST(Encode, Deterministic) {
  const auto seq = random_sequence(33, 25, 3, 7);
  EXPECT_EQ(encode(seq, euler_tour(ntu())).pixels.data, encode(seq, euler_tour(ntu())).pixels.data);
}

TEST(SubSequences, WindowExamples) {
  auto starts = [](std::size_t total, std::size_t n, double alpha) {
    std::vector<std::size_t> s;
    for (const auto& w : subsequence_windows(total, {n, alpha})) s.push_back(w.start);
    return s;
  };
  EXPECT_EQ(starts(300, 5, 0.5), (std::vector<std::size_t>{0, 50, 100, 150, 200}));
  EXPECT_EQ(subsequence_windows(300, {5, 0.5}).front().length, 100u);
  EXPECT_EQ(starts(300, 3, 0.0), (std::vector<std::size_t>{0, 100, 200}));
  EXPECT_EQ(subsequence_windows(300, {3, 0.0}).front().length, 100u);
  const auto whole = subsequence_windows(77, {1, 0.3});
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole[0].start, 0u);
  EXPECT_EQ(whole[0].length, 77u);
}

TEST(SubSequences, FlooredCaseRightAlignsLastWindow) {
  // T=90, n=9, alpha=0.75: t_sub = floor(90 / 3) = 30, stride = floor(7.5) = 7.
  const auto w = subsequence_windows(90, {9, 0.75});
  ASSERT_EQ(w.size(), 9u);
  for (std::size_t k = 0; k + 1 < 9; ++k) EXPECT_EQ(w[k].start, 7 * k);
  EXPECT_EQ(w.back().start, 60u);
  for (const auto& win : w) EXPECT_EQ(win.length, 30u);
}

TEST(SubSequences, Errors) {
  EXPECT_THROW(subsequence_windows(3, {5, 0.5}), std::invalid_argument);
  EXPECT_THROW(subsequence_windows(30, {0, 0.5}), std::invalid_argument);
  EXPECT_THROW(subsequence_windows(30, {2, 1.0}), std::invalid_argument);
}

TEST(SubSequences, PropertySweep) {
  for (std::size_t total = 1; total <= 200; ++total) {
    for (std::size_t n = 1; n <= std::min<std::size_t>(total, 10); ++n) {
      for (double alpha : {0.0, 0.25, 0.5, 0.75, 0.9}) {
        const auto w = subsequence_windows(total, {n, alpha});
        ASSERT_EQ(w.size(), n);
        const double span = 1.0 + (1.0 - alpha) * static_cast<double>(n - 1);
        const std::size_t t_sub = w[0].length;
        EXPECT_LE(static_cast<double>(t_sub) * span, static_cast<double>(total) + 1e-9);
        EXPECT_GT(static_cast<double>(t_sub + 1) * span, static_cast<double>(total) - 1e-9);
        EXPECT_EQ(w.front().start, 0u);
        EXPECT_EQ(w.back().start + t_sub, total);
        for (std::size_t k = 0; k < n; ++k) {
          EXPECT_EQ(w[k].length, t_sub);
          if (k > 0) {
            EXPECT_GE(w[k].start, w[k - 1].start);
          }
        }
      }
    }
  }
}

TEST(SubSequences, SubimagesNormalizePerWindow) {
  const auto order = euler_tour(ntu());
  auto seq = random_sequence(300, 25, 3, 8);
  const auto images = encode_subimages(seq, order, {5, 0.5}, 32);
  ASSERT_EQ(images.size(), 5u);
  const auto subs = split_subsequences(seq, {5, 0.5});
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(subs[k].length(), 100u);
    EXPECT_EQ(images[k].pixels.data, encode(subs[k], order, 32).pixels.data);
  }
  EXPECT_EQ(encode_subimages(seq, order, {1, 0.5}, 32)[0].pixels.data, encode(seq, order, 32).pixels.data);

  const auto blank = encode_subimages(constant_sequence(300, 25, -2.0), order, {5, 0.5}, 224);
  ASSERT_EQ(blank.size(), 5u);
  for (const auto& img : blank) {
    EXPECT_EQ(img.height(), 224u);
    for (double v : img.pixels.data) EXPECT_EQ(v, 0.0);
  }
}

TEST(ImageDump, RoundTripRoundsToSixDecimals) {
  const auto img = encode(random_sequence(20, 25, 3, 9), euler_tour(ntu()), 16);
  const auto path = (std::filesystem::temp_directory_path() / "tssi_dump_test.json").string();
  write_image_dump(path, {img, img});
  const auto back = read_image_dump(path);
  std::remove(path.c_str());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].height(), 16u);
  EXPECT_EQ(back[0].channels(), 3u);
  EXPECT_EQ(back[0].meta.order_kind, OrderKind::euler_tour);
  EXPECT_EQ(back[0].meta.source_frames, 20u);
  for (std::size_t i = 0; i < img.pixels.data.size(); ++i) {
    EXPECT_EQ(back[0].pixels.data[i], round6(img.pixels.data[i]));
    EXPECT_NEAR(back[0].pixels.data[i], img.pixels.data[i], 5e-7);
  }
}

TEST(FillMissing, CarryForwardAndFirstSightingFallback) {
  SkeletonSequence seq;
  for (int t = 0; t < 4; ++t) {
    SkeletonFrame f(3, 2);
    for (std::size_t j = 0; j < 3; ++j) {
      f.at(j, 0) = 10.0 * t + j;
      f.at(j, 1) = -1.0 * t;
    }
    seq.frames.push_back(f);
  }
  seq.frames[2].confidence[1] = 0.0;  // joint 1 missing in frame 2 -> from frame 1
  seq.frames[0].confidence[2] = 0.0;  // joint 2 missing before first sighting
  EXPECT_EQ(fill_missing_joints(seq), 2u);
  EXPECT_EQ(seq.frames[2].at(1, 0), 11.0);
  EXPECT_EQ(seq.frames[2].at(1, 1), -1.0);
  EXPECT_EQ(seq.frames[0].at(2, 0), 0.5);  // mean of joints 0 and 1 in frame 0
  EXPECT_EQ(seq.frames[0].at(2, 1), 0.0);
  EXPECT_EQ(seq.frames[2].confidence[1], 0.0);
}

TEST(Sequence, ValidateNamesFrame) {
  auto seq = random_sequence(4, 5, 3, 10);
  seq.frames[2].confidence[0] = 1.5;
  try {
    seq.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos);
  }
}
