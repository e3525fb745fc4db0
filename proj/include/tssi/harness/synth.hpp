#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tssi/harness/dataset.hpp"

namespace tssi::harness {

struct SynthNoise {
  /// Coordinate noise stddev as a fraction of the skeleton's extent.
  double coord_noise = 0.0;
  /// Per-sample reliability r is drawn from [confidence_min, 1]; 1 keeps
  /// every sample clean.
  double confidence_min = 1.0;
  /// Extra coordinate noise scaled by (1 - r).
  double degraded_noise = 0.0;
  /// Probability, scaled by (1 - r), that a joint is lost in a frame.
  double dropout = 0.0;
};

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t per_class = 20;
  std::size_t frames = 120;
  std::string topology = "ntu25";
  std::size_t persons = 1;
  SynthNoise noise;
  std::uint64_t seed = 1;
};

/// One class = a set of subtree rotations about the parent joint:
/// angle(t) = amplitude * sin(2 pi cycles t / T + phase).
struct SubtreeMotion {
  JointId pivot = 0;
  std::size_t axis = 0;
  double amplitude = 0.6;
  double cycles = 1.0;
};

namespace detail {

inline std::vector<JointId> subtree(const SkeletonTopology& t, JointId root) {
  std::vector<JointId> out{root};
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (JointId c : t.children_of(out[i])) out.push_back(c);
  }
  return out;
}

inline void rotate_about(std::array<double, 3>& p, const std::array<double, 3>& center, std::size_t axis,
                         double angle) {
  const std::size_t a = (axis + 1) % 3, b = (axis + 2) % 3;
  const double u = p[a] - center[a], v = p[b] - center[b];
  const double cs = std::cos(angle), sn = std::sin(angle);
  p[a] = center[a] + cs * u - sn * v;
  p[b] = center[b] + sn * u + cs * v;
}

}  // namespace detail

/// Limb-sized pivots: non-root joints with children whose subtree holds at
/// most a third of the skeleton, largest subtree first. Trunk joints are
/// used only when a skeleton has no such limb.
inline std::vector<JointId> motion_pivots(const SkeletonTopology& t) {
  std::vector<std::pair<std::size_t, JointId>> ranked, trunk;
  for (JointId j = 1; j <= t.joint_count; ++j) {
    if (j == t.root || t.children_of(j).empty()) continue;
    const std::size_t size = detail::subtree(t, j).size();
    (3 * size <= t.joint_count ? ranked : trunk).emplace_back(size, j);
  }
  if (ranked.empty()) ranked = trunk;
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<JointId> out;
  for (const auto& r : ranked) out.push_back(r.second);
  return out;
}

/// Class c swings pivot c mod P about axis (c / P) mod 3; classes beyond
/// 3P also change the cycle count. A second, smaller motion on another
/// pivot is added so that no two classes share the full joint subset.
inline std::vector<SubtreeMotion> class_motions(const SkeletonTopology& t, std::size_t c, std::size_t axes) {
  const auto pivots = motion_pivots(t);
  if (pivots.empty()) throw std::invalid_argument("synth: topology has no movable subtree");
  const std::size_t p = pivots.size();
  // Planar skeletons only rotate in the image plane (about z).
  const std::size_t axis_count = axes == 2 ? 1 : 3;
  const std::size_t axis = axes == 2 ? 2 : (c / p) % 3;
  const double cycles = 1.0 + static_cast<double>((c / (p * axis_count)) % 3);
  std::vector<SubtreeMotion> out{{pivots[c % p], axis, 0.7, cycles}};
  if (p > 1) {
    const JointId second = pivots[(c * 7 + 3) % p];
    if (second != out.front().pivot) out.push_back({second, axes == 2 ? 2 : (axis + 1) % 3, 0.3, cycles + 1.0});
  }
  return out;
}

/// `offset` shifts the whole body, in units of the skeleton's extent.
inline SkeletonSequence synth_sequence(const SkeletonTopology& t, const std::vector<SubtreeMotion>& motions,
                                       std::size_t frames, std::size_t axes, const SynthNoise& noise,
                                       double reliability, std::array<double, 3> offset, std::mt19937_64& gen) {
  if (t.rest_pose.size() != t.joint_count) throw std::invalid_argument("synth: topology has no rest pose");
  const auto parents = t.parents();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  struct Drawn {
    SubtreeMotion m;
    double amplitude, phase;
    std::vector<JointId> joints;
  };
  std::vector<Drawn> drawn;
  for (const auto& m : motions) {
    const double amp = m.amplitude * (0.7 + 0.6 * unit(gen));
    const double phase = 2.0 * std::numbers::pi * unit(gen);
    drawn.push_back({m, amp, phase, detail::subtree(t, m.pivot)});
  }

  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  for (const auto& p : t.rest_pose)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  const double extent = std::hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
  const double sigma = extent * (noise.coord_noise + noise.degraded_noise * (1.0 - reliability));
  const double drop = noise.dropout * (1.0 - reliability);

  SkeletonSequence seq;
  for (std::size_t f = 0; f < frames; ++f) {
    auto pose = t.rest_pose;
    for (const auto& d : drawn) {
      const double angle =
          d.amplitude * std::sin(2.0 * std::numbers::pi * d.m.cycles * static_cast<double>(f) / frames + d.phase);
      const auto center = pose[parents[d.m.pivot] - 1];
      for (JointId j : d.joints) detail::rotate_about(pose[j - 1], center, d.m.axis, angle);
    }
    SkeletonFrame frame(t.joint_count, axes);
    for (std::size_t j = 0; j < t.joint_count; ++j) {
      for (std::size_t a = 0; a < axes; ++a) {
        frame.at(j, a) = pose[j][a] + offset[a] * extent + (sigma > 0 ? sigma * normal(gen) : 0.0);
      }
      if (reliability < 1.0) {
        const double c = reliability + (1.0 - reliability) * (unit(gen) - 0.5) * 0.4;
        frame.confidence[j] = std::clamp(c, 0.01, 1.0);
        if (drop > 0 && unit(gen) < drop) frame.confidence[j] = 0.0;
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  fill_missing_joints(seq);
  return seq;
}

/// Deterministic under `seed`. Per class, samples are shuffled and split
/// 60/20/20 into train/val/test.
inline DatasetManifest synth_generate(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synth: need at least two classes");
  if (cfg.per_class == 0 || cfg.frames == 0) throw std::invalid_argument("synth: empty dataset requested");
  if (cfg.persons == 0) throw std::invalid_argument("synth: need at least one person");
  DatasetManifest m;
  m.topology = resolve_topology(cfg.topology);
  m.protocol = "synthetic";
  const std::size_t axes = m.topology.name == "openpose18" ? 2 : 3;
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    m.class_names.push_back("motion" + std::to_string(c));
    const auto motions = class_motions(m.topology, c, axes);
    std::vector<std::size_t> order(cfg.per_class);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), gen);
    const auto n_train = static_cast<std::size_t>(std::lround(0.6 * cfg.per_class));
    const auto n_val = static_cast<std::size_t>(std::lround(0.2 * cfg.per_class));
    std::vector<Split> split(cfg.per_class, Split::test);
    for (std::size_t r = 0; r < cfg.per_class; ++r) {
      split[order[r]] = r < n_train ? Split::train : r < n_train + n_val ? Split::val : Split::test;
    }
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      const double lo = std::clamp(cfg.noise.confidence_min, 0.0, 1.0);
      const double reliability = lo >= 1.0 ? 1.0 : lo + (1.0 - lo) * unit(gen);
      Sample s;
      s.id = "c" + std::to_string(c) + "_" + std::to_string(i);
      s.label = c;
      s.split = split[i];
      for (std::size_t p = 0; p < cfg.persons; ++p) {
        const std::array<double, 3> offset{static_cast<double>(p), 0.0, 0.0};
        s.persons.push_back(synth_sequence(m.topology, motions, cfg.frames, axes, cfg.noise, reliability, offset, gen));
        s.persons.back().person_id = static_cast<int>(p);
      }
      s.mean_confidence = s.compute_mean_confidence();
      m.samples.push_back(std::move(s));
    }
  }
  return m;
}

}  // namespace tssi::harness
