#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tssi/encoding/sequence.hpp"
#include "tssi/skeleton/topology.hpp"
#include "tssi/tensor/interp.hpp"

namespace tssi {

/// Row-major height x width x channels grid of reals.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> data;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, std::size_t c = 1, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  /// Single-channel grid from nested rows.
  static Grid from_rows(const std::vector<std::vector<double>>& rows) {
    Grid g(rows.size(), rows.empty() ? 0 : rows.front().size(), 1);
    for (std::size_t y = 0; y < g.height; ++y) {
      if (rows[y].size() != g.width) throw std::invalid_argument("grid rows differ in length");
      std::copy(rows[y].begin(), rows[y].end(), g.data.begin() + static_cast<std::ptrdiff_t>(y * g.width));
    }
    return g;
  }

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const { return data[(y * width + x) * channels + c]; }

  Grid channel(std::size_t c) const {
    Grid out(height, width, 1);
    for (std::size_t i = 0; i < height * width; ++i) out.data[i] = data[i * channels + c];
    return out;
  }
  void set_channel(std::size_t c, const Grid& plane) {
    for (std::size_t i = 0; i < height * width; ++i) data[i * channels + c] = plane.data[i];
  }
};

/// Min-max scaling of a single-channel grid onto [0, 255]; a constant grid
/// maps to all zeros.
inline Grid normalize_channel(const Grid& values) {
  if (values.channels != 1) throw std::invalid_argument("normalize_channel: expected one channel");
  Grid out = values;
  if (values.data.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.data.begin(), values.data.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    std::fill(out.data.begin(), out.data.end(), 0.0);
    return out;
  }
  for (auto& v : out.data) v = 255.0 * (v - lo) / (hi - lo);
  return out;
}

/// Align-corners bilinear resize, each channel independently.
inline Grid resize_bilinear(const Grid& grid, std::size_t out_h, std::size_t out_w) {
  if (grid.height == 0 || grid.width == 0) throw std::invalid_argument("resize_bilinear: empty input");
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_bilinear: zero-size target");
  if (out_h == grid.height && out_w == grid.width) return grid;
  const auto ty = interp::align_corners_taps(grid.height, out_h);
  const auto tx = interp::align_corners_taps(grid.width, out_w);
  Grid out(out_h, out_w, grid.channels);
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto& ry = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& rx = tx[x];
      for (std::size_t c = 0; c < grid.channels; ++c) {
        const double top = (1 - rx.weight) * grid.at(ry.lo, rx.lo, c) + rx.weight * grid.at(ry.lo, rx.hi, c);
        const double bottom = (1 - rx.weight) * grid.at(ry.hi, rx.lo, c) + rx.weight * grid.at(ry.hi, rx.hi, c);
        out.at(y, x, c) = (1 - ry.weight) * top + ry.weight * bottom;
      }
    }
  }
  return out;
}

struct ImageMeta {
  OrderKind order_kind = OrderKind::euler_tour;
  std::size_t source_frames = 0;
  std::size_t source_columns = 0;
  std::vector<std::string> channel_names;
};

/// Encoded skeleton image: rows are time, columns follow a joint order,
/// channels are coordinate axes. Pixel values lie in [0, 255].
struct SkeletonImage {
  Grid pixels;
  ImageMeta meta;

  std::size_t height() const { return pixels.height; }
  std::size_t width() const { return pixels.width; }
  std::size_t channels() const { return pixels.channels; }
};

inline std::vector<std::string> channel_names_for(std::size_t axes) {
  if (axes == 2) return {"x", "y", "confidence"};
  if (axes == 3) return {"x", "y", "z"};
  std::vector<std::string> names;
  for (std::size_t a = 0; a < axes; ++a) names.push_back("axis" + std::to_string(a));
  return names;
}

/// Raw (pre-normalization) grid: T rows x |order| columns. Two-axis input
/// gets the per-joint confidence as a third channel.
inline Grid raw_skeleton_grid(const SkeletonSequence& seq, const JointOrder& order) {
  if (seq.frames.empty()) throw std::invalid_argument("encode: empty sequence");
  if (order.order.empty()) throw std::invalid_argument("encode: empty joint order");
  const std::size_t joints = seq.joint_count(), axes = seq.axis_count();
  for (JointId j : order.order) {
    if (j < 1 || j > joints) {
      throw std::invalid_argument("encode: joint " + std::to_string(j) + " not in a " + std::to_string(joints) +
                                  "-joint sequence");
    }
  }
  const bool with_confidence = axes == 2;
  const std::size_t channels = with_confidence ? 3 : axes;
  Grid raw(seq.length(), order.size(), channels);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const auto& f = seq.frames[t];
    for (std::size_t col = 0; col < order.size(); ++col) {
      const std::size_t j = order.order[col] - 1;
      for (std::size_t a = 0; a < axes; ++a) raw.at(t, col, a) = f.at(j, a);
      if (with_confidence) raw.at(t, col, 2) = f.confidence[j];
    }
  }
  return raw;
}

inline SkeletonImage encode(const SkeletonSequence& seq, const JointOrder& order, std::size_t target_size = 224) {
  Grid raw = raw_skeleton_grid(seq, order);
  for (std::size_t c = 0; c < raw.channels; ++c) raw.set_channel(c, normalize_channel(raw.channel(c)));
  SkeletonImage img;
  img.pixels = resize_bilinear(raw, target_size, target_size);
  img.meta.order_kind = order.kind;
  img.meta.source_frames = seq.length();
  img.meta.source_columns = order.size();
  img.meta.channel_names = channel_names_for(seq.axis_count());
  return img;
}

// ---------------------------------------------------------------------------
// Sub-sequences

struct SubSequenceConfig {
  std::size_t n = 1;
  double alpha = 0.0;
};

struct Window {
  std::size_t start = 0;
  std::size_t length = 0;
};

/// Windows tied by T = t_sub * (1 + (1 - alpha)(n - 1)), floored:
/// t_sub = floor(T / (1 + (1 - alpha)(n - 1))), stride = floor(t_sub (1 - alpha)).
/// Window k starts at k * stride; the last window is right-aligned to end at
/// T so the tail frames are always covered.
inline std::vector<Window> subsequence_windows(std::size_t total, const SubSequenceConfig& cfg) {
  if (cfg.n == 0) throw std::invalid_argument("split_subsequences: n must be at least 1");
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) throw std::invalid_argument("split_subsequences: alpha outside [0, 1)");
  if (total < cfg.n) {
    throw std::invalid_argument("split_subsequences: " + std::to_string(total) + " frames cannot form " +
                                std::to_string(cfg.n) + " windows");
  }
  const double span = 1.0 + (1.0 - cfg.alpha) * static_cast<double>(cfg.n - 1);
  // Small epsilon keeps exactly divisible cases (e.g. 300 / 3) from
  // flooring one frame short.
  const auto t_sub = static_cast<std::size_t>(std::floor(static_cast<double>(total) / span + 1e-9));
  if (t_sub == 0) throw std::invalid_argument("split_subsequences: window length would be zero");
  const auto stride = static_cast<std::size_t>(std::floor(static_cast<double>(t_sub) * (1.0 - cfg.alpha) + 1e-9));
  std::vector<Window> out(cfg.n);
  for (std::size_t k = 0; k < cfg.n; ++k) {
    std::size_t start = k + 1 == cfg.n ? total - t_sub : k * stride;
    out[k] = {start, t_sub};
  }
  return out;
}

inline std::vector<SkeletonSequence> split_subsequences(const SkeletonSequence& seq, const SubSequenceConfig& cfg) {
  std::vector<SkeletonSequence> out;
  for (const auto& w : subsequence_windows(seq.length(), cfg)) {
    SkeletonSequence sub;
    sub.frame_rate = seq.frame_rate;
    sub.person_id = seq.person_id;
    sub.frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(w.start),
                      seq.frames.begin() + static_cast<std::ptrdiff_t>(w.start + w.length));
    out.push_back(std::move(sub));
  }
  return out;
}

/// One image per window, each normalized over its own frames.
inline std::vector<SkeletonImage> encode_subimages(const SkeletonSequence& seq, const JointOrder& order,
                                                   const SubSequenceConfig& cfg, std::size_t target_size = 224) {
  if (seq.frames.empty()) throw std::invalid_argument("encode: empty sequence");
  std::vector<SkeletonImage> out;
  for (const auto& sub : split_subsequences(seq, cfg)) out.push_back(encode(sub, order, target_size));
  return out;
}

// ---------------------------------------------------------------------------
// Image dump: JSON document with shape, channel semantics, order kind and
// row-major pixels rounded to 6 decimals.

inline double round6(double v) {
  const double r = std::round(v * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;  // no negative zero in dumps
}

inline nlohmann::json image_to_json(const SkeletonImage& img) {
  nlohmann::json j;
  j["format"] = "tssi-image";
  j["version"] = 1;
  j["shape"] = {img.height(), img.width(), img.channels()};
  j["channels"] = img.meta.channel_names;
  j["order_kind"] = to_string(img.meta.order_kind);
  j["source_frames"] = img.meta.source_frames;
  j["source_columns"] = img.meta.source_columns;
  std::vector<double> px(img.pixels.data.size());
  std::transform(img.pixels.data.begin(), img.pixels.data.end(), px.begin(), round6);
  j["pixels"] = std::move(px);
  return j;
}

inline SkeletonImage image_from_json(const nlohmann::json& j) {
  SkeletonImage img;
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3) throw std::invalid_argument("image dump: shape must have three extents");
  img.pixels = Grid(shape[0], shape[1], shape[2]);
  img.pixels.data = j.at("pixels").get<std::vector<double>>();
  if (img.pixels.data.size() != shape[0] * shape[1] * shape[2]) {
    throw std::invalid_argument("image dump: pixel count does not match shape");
  }
  img.meta.channel_names = j.at("channels").get<std::vector<std::string>>();
  img.meta.order_kind = j.at("order_kind").get<std::string>() == "chain" ? OrderKind::chain : OrderKind::euler_tour;
  img.meta.source_frames = j.value("source_frames", std::size_t{0});
  img.meta.source_columns = j.value("source_columns", std::size_t{0});
  return img;
}

inline void write_image_dump(const std::string& path, const std::vector<SkeletonImage>& images) {
  nlohmann::json doc;
  doc["images"] = nlohmann::json::array();
  for (const auto& img : images) doc["images"].push_back(image_to_json(img));
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write image dump " + path);
  os << doc.dump() << '\n';
}

inline std::vector<SkeletonImage> read_image_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open image dump " + path);
  const auto doc = nlohmann::json::parse(in);
  std::vector<SkeletonImage> out;
  for (const auto& j : doc.at("images")) out.push_back(image_from_json(j));
  return out;
}

}  // namespace tssi
