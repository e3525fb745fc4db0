#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tssi/encoding/sequence.hpp"
#include "tssi/skeleton/topology.hpp"

#ifndef TSSI_DATA_DIR
#define TSSI_DATA_DIR "data"
#endif

namespace tssi::harness {

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train, val or test)");
}

struct Sample {
  std::string id;
  std::vector<SkeletonSequence> persons;
  std::size_t label = 0;
  Split split = Split::train;
  double mean_confidence = 1.0;

  /// Mean over persons, frames and joints of the per-joint confidence.
  double compute_mean_confidence() const {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& p : persons)
      for (const auto& f : p.frames) {
        for (double c : f.confidence) total += c;
        count += f.confidence.size();
      }
    return count == 0 ? 1.0 : total / static_cast<double>(count);
  }
};

struct DatasetManifest {
  SkeletonTopology topology;
  std::vector<std::string> class_names;
  std::string protocol = "cross-subject";
  std::vector<Sample> samples;

  std::size_t class_count() const { return class_names.size(); }

  std::vector<const Sample*> split(Split s) const {
    std::vector<const Sample*> out;
    for (const auto& sample : samples) {
      if (sample.split == s) out.push_back(&sample);
    }
    return out;
  }

  /// Checks the sample invariants against the topology and class list.
  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const std::string where = "sample " + std::to_string(i) + " (" + s.id + ")";
      if (s.persons.empty()) throw std::invalid_argument(where + ": no persons");
      if (s.label >= class_names.size()) {
        throw std::invalid_argument(where + ": label " + std::to_string(s.label) + " but only " +
                                    std::to_string(class_names.size()) + " classes");
      }
      for (std::size_t p = 0; p < s.persons.size(); ++p) {
        try {
          s.persons[p].validate();
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument(where + ", person " + std::to_string(p) + ": " + e.what());
        }
        if (s.persons[p].joint_count() != topology.joint_count) {
          throw std::invalid_argument(where + ", person " + std::to_string(p) + ": " +
                                      std::to_string(s.persons[p].joint_count()) + " joints but topology '" +
                                      topology.name + "' has " + std::to_string(topology.joint_count));
        }
      }
    }
  }
};

/// Topology by shipped id (data/topologies/<id>.json) or by file path.
inline SkeletonTopology resolve_topology(const std::string& id_or_path) {
  namespace fs = std::filesystem;
  if (fs::exists(id_or_path) && fs::is_regular_file(id_or_path)) return load_topology(id_or_path);
  const fs::path shipped = fs::path(TSSI_DATA_DIR) / "topologies" / (id_or_path + ".json");
  if (fs::exists(shipped)) return load_topology(shipped.string());
  throw std::invalid_argument("unknown topology '" + id_or_path + "'");
}

// ---------------------------------------------------------------------------
// Canonical JSON schema:
//   {"format": "tssi-canonical", "version": 1, "topology": id | {...},
//    "classes": [...], "protocol": "...",
//    "samples": [{"id", "label", "split", "persons": [{"person_id",
//      "frame_rate", "frames": [{"joints": [[x, y(, z)], ...],
//      "confidence": [...]}]}]}]}

namespace detail {

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

inline SkeletonSequence person_from_json(const nlohmann::json& j) {
  SkeletonSequence seq;
  seq.person_id = j.value("person_id", 0);
  seq.frame_rate = j.value("frame_rate", 30.0);
  const auto& frames = j.at("frames");
  std::size_t joints = 0, axes = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& fj = frames[t];
    const auto& pts = fj.at("joints");
    if (t == 0) {
      joints = pts.size();
      axes = joints == 0 ? 0 : pts[0].size();
    }
    if (pts.size() != joints) {
      throw std::invalid_argument("frame " + std::to_string(t) + ": expected " + std::to_string(joints) +
                                  " joints, got " + std::to_string(pts.size()));
    }
    SkeletonFrame f(joints, axes);
    for (std::size_t jt = 0; jt < joints; ++jt) {
      if (pts[jt].size() != axes) {
        throw std::invalid_argument("frame " + std::to_string(t) + ", joint " + std::to_string(jt + 1) +
                                    ": expected " + std::to_string(axes) + " coordinates");
      }
      for (std::size_t a = 0; a < axes; ++a) f.at(jt, a) = pts[jt][a].get<double>();
    }
    if (fj.contains("confidence")) {
      const auto conf = fj.at("confidence").get<std::vector<double>>();
      if (conf.size() != joints) {
        throw std::invalid_argument("frame " + std::to_string(t) + ": " + std::to_string(conf.size()) +
                                    " confidences for " + std::to_string(joints) + " joints");
      }
      f.confidence = conf;
    }
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

inline nlohmann::json person_to_json(const SkeletonSequence& seq) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : seq.frames) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t j = 0; j < f.joints; ++j) {
      std::vector<double> p(f.axes);
      for (std::size_t a = 0; a < f.axes; ++a) p[a] = f.at(j, a);
      pts.push_back(p);
    }
    frames.push_back({{"joints", pts}, {"confidence", f.confidence}});
  }
  return {{"person_id", seq.person_id}, {"frame_rate", seq.frame_rate}, {"frames", frames}};
}

}  // namespace detail

inline DatasetManifest manifest_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != "tssi-canonical") {
    throw std::invalid_argument("not a tssi-canonical dataset (missing or wrong \"format\")");
  }
  DatasetManifest m;
  const auto& topo = doc.at("topology");
  m.topology = topo.is_string() ? resolve_topology(topo.get<std::string>()) : topology_from_json(topo);
  m.class_names = doc.at("classes").get<std::vector<std::string>>();
  m.protocol = doc.value("protocol", std::string("cross-subject"));
  const auto& samples = doc.at("samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& sj = samples[i];
    Sample s;
    s.id = sj.value("id", "sample" + std::to_string(i));
    try {
      s.label = sj.at("label").get<std::size_t>();
      s.split = split_from_string(sj.value("split", std::string("train")));
      const auto& persons = sj.at("persons");
      for (std::size_t p = 0; p < persons.size(); ++p) {
        try {
          s.persons.push_back(detail::person_from_json(persons[p]));
        } catch (const std::exception& e) {
          throw std::invalid_argument("person " + std::to_string(p) + ", " + e.what());
        }
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("sample " + std::to_string(i) + " (" + s.id + "): " + e.what());
    }
    s.mean_confidence = s.compute_mean_confidence();
    m.samples.push_back(std::move(s));
  }
  m.validate();
  return m;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m, bool inline_topology = false) {
  nlohmann::json doc;
  doc["format"] = "tssi-canonical";
  doc["version"] = 1;
  doc["topology"] = inline_topology ? topology_to_json(m.topology) : nlohmann::json(m.topology.name);
  doc["classes"] = m.class_names;
  doc["protocol"] = m.protocol;
  doc["samples"] = nlohmann::json::array();
  for (const auto& s : m.samples) {
    nlohmann::json persons = nlohmann::json::array();
    for (const auto& p : s.persons) persons.push_back(detail::person_to_json(p));
    doc["samples"].push_back({{"id", s.id}, {"label", s.label}, {"split", to_string(s.split)}, {"persons", persons}});
  }
  return doc;
}

/// Reads a canonical dataset. Parse errors carry the line number; schema
/// errors name the sample, person and frame.
inline DatasetManifest load_canonical(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
  try {
    return manifest_from_json(doc);
  } catch (const std::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

inline void save_canonical(const DatasetManifest& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write dataset " + path);
  os << manifest_to_json(m).dump() << '\n';
}

/// Keeps samples whose mean confidence is at least tau.
inline DatasetManifest filter_by_confidence(const DatasetManifest& m, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("confidence threshold outside [0, 1]");
  DatasetManifest out = m;
  out.samples.clear();
  for (const auto& s : m.samples) {
    if (s.mean_confidence >= tau) out.samples.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// NTU RGB+D .skeleton adapter.

struct NtuName {
  int setup = 0, camera = 0, performer = 0, replication = 0, action = 0;
};

/// Parses SsssCcccPpppRrrrAaaa from a file name.
inline NtuName parse_ntu_name(const std::string& filename) {
  static const std::regex re(R"(S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3}))");
  std::smatch m;
  if (!std::regex_search(filename, m, re)) throw std::invalid_argument("not an NTU file name: " + filename);
  return {std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]), std::stoi(m[4]), std::stoi(m[5])};
}

/// Standard split tags: cross-subject trains on a fixed performer list,
/// cross-view trains on cameras 2 and 3.
inline Split ntu_split(const NtuName& n, const std::string& protocol) {
  static const std::vector<int> train_subjects{1,  2,  4,  5,  8,  9,  13, 14, 15, 16,
                                               17, 18, 19, 25, 27, 28, 31, 34, 35, 38};
  if (protocol == "cross-view") return n.camera == 1 ? Split::test : Split::train;
  if (protocol == "cross-subject") {
    return std::find(train_subjects.begin(), train_subjects.end(), n.performer) != train_subjects.end() ? Split::train
                                                                                                          : Split::test;
  }
  throw std::invalid_argument("unknown NTU protocol '" + protocol + "'");
}

/// Reads one .skeleton file: frame count, then per frame a body count and
/// per body a 10-value info line, the joint count and 12 values per joint
/// (x y z first, tracking state last). Tracking state 2/1/0 maps to
/// confidence 1/0.5/0. Person k collects body k of every frame that has it.
inline Sample load_ntu_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const NtuName name = parse_ntu_name(std::filesystem::path(path).filename().string());
  auto fail = [&](std::size_t frame, const std::string& what) {
    throw std::invalid_argument(path + ": frame " + std::to_string(frame) + ": " + what);
  };
  std::size_t frames = 0;
  if (!(in >> frames)) throw std::invalid_argument(path + ": missing frame count");
  std::vector<SkeletonSequence> persons;
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t bodies = 0;
    if (!(in >> bodies)) fail(t, "missing body count");
    for (std::size_t b = 0; b < bodies; ++b) {
      double info[10];
      for (double& v : info)
        if (!(in >> v)) fail(t, "truncated body header");
      std::size_t joints = 0;
      if (!(in >> joints)) fail(t, "missing joint count");
      if (joints != 25) fail(t, "expected 25 joints, got " + std::to_string(joints));
      SkeletonFrame f(25, 3);
      for (std::size_t j = 0; j < 25; ++j) {
        double v[12];
        for (double& x : v)
          if (!(in >> x)) fail(t, "truncated joint " + std::to_string(j + 1));
        for (std::size_t a = 0; a < 3; ++a) f.at(j, a) = v[a];
        f.confidence[j] = v[11] >= 2 ? 1.0 : v[11] >= 1 ? 0.5 : 0.0;
      }
      if (persons.size() <= b) {
        persons.emplace_back();
        persons.back().person_id = static_cast<int>(b);
      }
      persons[b].frames.push_back(std::move(f));
    }
  }
  if (persons.empty()) throw std::invalid_argument(path + ": no bodies");
  Sample s;
  s.id = std::filesystem::path(path).stem().string();
  s.label = static_cast<std::size_t>(name.action - 1);
  s.persons = std::move(persons);
  s.mean_confidence = s.compute_mean_confidence();
  return s;
}

/// Every *.skeleton file of a directory. Files that fail to parse are
/// skipped and reported through `rejected`.
inline DatasetManifest load_ntu_directory(const std::string& dir, const std::string& protocol,
                                          std::vector<std::string>* rejected = nullptr) {
  DatasetManifest m;
  m.topology = resolve_topology("ntu25");
  m.protocol = protocol;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".skeleton") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t max_label = 0;
  for (const auto& f : files) {
    try {
      Sample s = load_ntu_skeleton(f.string());
      s.split = ntu_split(parse_ntu_name(f.filename().string()), protocol);
      max_label = std::max(max_label, s.label);
      m.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      if (rejected) rejected->push_back(e.what());
    }
  }
  for (std::size_t c = 0; c <= max_label && !m.samples.empty(); ++c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "A%03zu", c + 1);
    m.class_names.emplace_back(buf);
  }
  return m;
}

// ---------------------------------------------------------------------------
// OpenPose keypoint folders: one <name>_<frame>_keypoints.json per frame with
// people[k].pose_keypoints_2d = 18 x (x, y, confidence).

struct KeypointClip {
  std::vector<SkeletonSequence> persons;
  std::size_t missing_frames = 0;
  std::size_t filled_joints = 0;
};

inline KeypointClip load_keypoint_clip(const std::string& dir, std::size_t max_persons = 2) {
  namespace fs = std::filesystem;
  static const std::regex frame_re(R"((\d+)_keypoints\.json$)");
  std::map<std::size_t, fs::path> frames;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_search(name, m, frame_re)) frames[std::stoul(m[1])] = e.path();
  }
  if (frames.empty()) throw std::invalid_argument(dir + ": no keypoint files");
  const std::size_t first = frames.begin()->first, last = frames.rbegin()->first;

  KeypointClip clip;
  std::vector<std::vector<SkeletonFrame>> per_person;
  for (std::size_t idx = first; idx <= last; ++idx) {
    std::vector<SkeletonFrame> people;
    auto it = frames.find(idx);
    if (it == frames.end()) {
      ++clip.missing_frames;
    } else {
      std::ifstream in(it->second);
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(it->second.string() + ": " + e.what());
      }
      for (const auto& person : doc.value("people", nlohmann::json::array())) {
        const auto kp = person.at("pose_keypoints_2d").get<std::vector<double>>();
        if (kp.size() != 18 * 3) {
          throw std::invalid_argument(it->second.string() + ": expected 54 keypoint values, got " +
                                      std::to_string(kp.size()));
        }
        SkeletonFrame f(18, 2);
        for (std::size_t j = 0; j < 18; ++j) {
          f.at(j, 0) = kp[3 * j];
          f.at(j, 1) = kp[3 * j + 1];
          f.confidence[j] = std::clamp(kp[3 * j + 2], 0.0, 1.0);
        }
        people.push_back(std::move(f));
        if (people.size() == max_persons) break;
      }
    }
    if (per_person.size() < people.size()) per_person.resize(people.size());
    for (std::size_t p = 0; p < per_person.size(); ++p) {
      SkeletonFrame f(18, 2);
      if (p < people.size()) {
        f = std::move(people[p]);
      } else {
        std::fill(f.confidence.begin(), f.confidence.end(), 0.0);  // gap, filled below
      }
      per_person[p].push_back(std::move(f));
    }
  }
  // A person first seen after frame `first` gets empty frames in front.
  const std::size_t length = last - first + 1;
  for (std::size_t p = 0; p < per_person.size(); ++p) {
    auto& frames_p = per_person[p];
    if (frames_p.size() < length) {
      SkeletonFrame blank(18, 2);
      std::fill(blank.confidence.begin(), blank.confidence.end(), 0.0);
      frames_p.insert(frames_p.begin(), length - frames_p.size(), blank);
    }
    SkeletonSequence seq;
    seq.person_id = static_cast<int>(p);
    seq.frames = std::move(frames_p);
    clip.filled_joints += fill_missing_joints(seq);
    clip.persons.push_back(std::move(seq));
  }
  if (clip.persons.empty()) throw std::invalid_argument(dir + ": no person detected in any frame");
  return clip;
}

/// A single clip folder, or <dir>/<class>/<clip>/ with classes in sorted
/// order. Clips are tagged for 5-fold use: clip index mod 5 == 0 goes to
/// test, == 1 to val, the rest to train.
inline DatasetManifest load_keypoint_json(const std::string& dir, std::vector<std::string>* notes = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::invalid_argument(dir + ": not a directory");
  DatasetManifest m;
  m.topology = resolve_topology("openpose18");
  m.protocol = "k-fold";

  auto add_clip = [&](const fs::path& clip_dir, std::size_t label, std::size_t index) {
    KeypointClip clip = load_keypoint_clip(clip_dir.string());
    if (notes && (clip.missing_frames > 0 || clip.filled_joints > 0)) {
      notes->push_back(clip_dir.string() + ": " + std::to_string(clip.missing_frames) + " missing frames, " +
                       std::to_string(clip.filled_joints) + " joints filled");
    }
    Sample s;
    s.id = clip_dir.filename().string();
    s.label = label;
    s.split = index % 5 == 0 ? Split::test : index % 5 == 1 ? Split::val : Split::train;
    s.persons = std::move(clip.persons);
    s.mean_confidence = s.compute_mean_confidence();
    m.samples.push_back(std::move(s));
  };

  std::vector<fs::path> subdirs;
  bool has_frames = false;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) subdirs.push_back(e.path());
    if (e.is_regular_file() && e.path().extension() == ".json") has_frames = true;
  }
  std::sort(subdirs.begin(), subdirs.end());
  if (has_frames) {
    m.class_names = {"unlabeled"};
    add_clip(dir, 0, 2);
    return m;
  }
  if (subdirs.empty()) throw std::invalid_argument(dir + ": empty keypoint directory");
  for (std::size_t c = 0; c < subdirs.size(); ++c) {
    m.class_names.push_back(subdirs[c].filename().string());
    std::vector<fs::path> clips;
    for (const auto& e : fs::directory_iterator(subdirs[c])) {
      if (e.is_directory()) clips.push_back(e.path());
    }
    std::sort(clips.begin(), clips.end());
    for (std::size_t i = 0; i < clips.size(); ++i) add_clip(clips[i], c, i);
  }
  if (m.samples.empty()) throw std::invalid_argument(dir + ": no clips found");
  return m;
}

}  // namespace tssi::harness
