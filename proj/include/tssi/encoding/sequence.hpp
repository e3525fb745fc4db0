#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tssi {

/// Joint coordinates of one frame, joint-major: coords[j * axes + a].
struct SkeletonFrame {
  std::size_t joints = 0;
  std::size_t axes = 3;
  std::vector<double> coords;
  std::vector<double> confidence;

  SkeletonFrame() = default;
  SkeletonFrame(std::size_t joint_count, std::size_t axis_count)
      : joints(joint_count), axes(axis_count), coords(joint_count * axis_count, 0.0), confidence(joint_count, 1.0) {}

  double& at(std::size_t joint, std::size_t axis) { return coords[joint * axes + axis]; }
  double at(std::size_t joint, std::size_t axis) const { return coords[joint * axes + axis]; }
};

struct SkeletonSequence {
  std::vector<SkeletonFrame> frames;
  double frame_rate = 30.0;
  int person_id = 0;

  std::size_t length() const { return frames.size(); }
  std::size_t joint_count() const { return frames.empty() ? 0 : frames.front().joints; }
  std::size_t axis_count() const { return frames.empty() ? 0 : frames.front().axes; }

  double mean_confidence() const {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& f : frames) {
      for (double c : f.confidence) total += c;
      count += f.confidence.size();
    }
    return count == 0 ? 1.0 : total / static_cast<double>(count);
  }

  /// Throws naming the first offending frame.
  void validate() const {
    if (frames.empty()) throw std::invalid_argument("skeleton sequence is empty");
    const std::size_t j = frames.front().joints, a = frames.front().axes;
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto& f = frames[t];
      if (f.joints != j || f.axes != a || f.coords.size() != j * a || f.confidence.size() != j) {
        throw std::invalid_argument("frame " + std::to_string(t) + ": expected " + std::to_string(j) + " joints x " +
                                    std::to_string(a) + " axes");
      }
      for (double v : f.coords) {
        if (!std::isfinite(v)) throw std::invalid_argument("frame " + std::to_string(t) + ": non-finite coordinate");
      }
      for (double c : f.confidence) {
        if (!(c >= 0.0 && c <= 1.0)) {
          throw std::invalid_argument("frame " + std::to_string(t) + ": confidence outside [0, 1]");
        }
      }
    }
  }
};

/// Replaces coordinates of joints with zero confidence. A missing joint takes
/// its last observed position; before its first observation it takes the mean
/// position of the joints visible in that frame (or, if the frame has none,
/// the mean of every visible entry in the sequence). Confidences are kept, so
/// the gap stays visible downstream. Returns the number of filled entries.
inline std::size_t fill_missing_joints(SkeletonSequence& seq) {
  if (seq.frames.empty()) return 0;
  const std::size_t joints = seq.joint_count(), axes = seq.axis_count();

  std::vector<double> global_mean(axes, 0.0);
  std::size_t global_count = 0;
  for (const auto& f : seq.frames) {
    for (std::size_t j = 0; j < joints; ++j) {
      if (f.confidence[j] <= 0.0) continue;
      for (std::size_t a = 0; a < axes; ++a) global_mean[a] += f.at(j, a);
      ++global_count;
    }
  }
  for (auto& v : global_mean) v = global_count == 0 ? 0.0 : v / static_cast<double>(global_count);

  std::vector<bool> seen(joints, false);
  std::vector<double> last(joints * axes, 0.0);
  std::size_t filled = 0;
  for (auto& f : seq.frames) {
    std::vector<double> frame_mean(axes, 0.0);
    std::size_t visible = 0;
    for (std::size_t j = 0; j < joints; ++j) {
      if (f.confidence[j] <= 0.0) continue;
      for (std::size_t a = 0; a < axes; ++a) frame_mean[a] += f.at(j, a);
      ++visible;
    }
    for (std::size_t a = 0; a < axes; ++a) {
      frame_mean[a] = visible == 0 ? global_mean[a] : frame_mean[a] / static_cast<double>(visible);
    }
    for (std::size_t j = 0; j < joints; ++j) {
      if (f.confidence[j] > 0.0) {
        seen[j] = true;
        for (std::size_t a = 0; a < axes; ++a) last[j * axes + a] = f.at(j, a);
        continue;
      }
      for (std::size_t a = 0; a < axes; ++a) f.at(j, a) = seen[j] ? last[j * axes + a] : frame_mean[a];
      ++filled;
    }
  }
  return filled;
}

}  // namespace tssi
