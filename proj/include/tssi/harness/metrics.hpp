#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tssi::harness {

struct ClassStats {
  std::string name;
  std::size_t support = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

/// Average accuracy of the k best and k worst classes.
struct RankedAverage {
  std::size_t k = 0;
  double best = 0.0;
  double worst = 0.0;
};

struct MetricsReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double top1 = 0.0;
  std::vector<ClassStats> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<RankedAverage> ranked;

  /// Mean of per-class accuracies weighted by support.
  double support_weighted_accuracy() const {
    double acc = 0.0;
    for (const auto& c : per_class) acc += c.accuracy * static_cast<double>(c.support);
    return total == 0 ? 0.0 : acc / static_cast<double>(total);
  }
};

inline const std::vector<std::size_t>& ranked_ks() {
  static const std::vector<std::size_t> ks{1, 3, 5, 10};
  return ks;
}

/// Best/worst-k averages over classes that have test samples. k values
/// larger than the number of such classes are left out.
inline std::vector<RankedAverage> ranked_averages(const std::vector<ClassStats>& per_class) {
  std::vector<double> acc;
  for (const auto& c : per_class) {
    if (c.support > 0) acc.push_back(c.accuracy);
  }
  std::vector<double> desc = acc, asc = acc;
  std::sort(desc.begin(), desc.end(), std::greater<>());
  std::sort(asc.begin(), asc.end());
  std::vector<RankedAverage> out;
  for (std::size_t k : ranked_ks()) {
    if (k > acc.size()) break;
    double best = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      best += desc[i];
      worst += asc[i];
    }
    out.push_back({k, best / static_cast<double>(k), worst / static_cast<double>(k)});
  }
  return out;
}

inline MetricsReport make_report(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predictions,
                                 const std::vector<std::string>& class_names) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("report: label/prediction count mismatch");
  const std::size_t classes = class_names.size();
  MetricsReport r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  r.per_class.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) r.per_class[c].name = class_names[c];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predictions[i] >= classes) throw std::invalid_argument("report: class out of range");
    ++r.confusion[labels[i]][predictions[i]];
    ++r.per_class[labels[i]].support;
    if (labels[i] == predictions[i]) {
      ++r.per_class[labels[i]].correct;
      ++r.correct;
    }
  }
  r.total = labels.size();
  r.top1 = r.total == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.total);
  for (auto& c : r.per_class) {
    c.accuracy = c.support == 0 ? 0.0 : static_cast<double>(c.correct) / static_cast<double>(c.support);
  }
  r.ranked = ranked_averages(r.per_class);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["total"] = r.total;
  j["correct"] = r.correct;
  j["top1"] = r.top1;
  j["per_class"] = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    j["per_class"].push_back({{"name", c.name}, {"support", c.support}, {"correct", c.correct}, {"accuracy", c.accuracy}});
  }
  j["confusion"] = r.confusion;
  j["ranked"] = nlohmann::json::array();
  for (const auto& k : r.ranked) j["ranked"].push_back({{"k", k.k}, {"best", k.best}, {"worst", k.worst}});
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.total = j.at("total").get<std::size_t>();
  r.correct = j.at("correct").get<std::size_t>();
  r.top1 = j.at("top1").get<double>();
  for (const auto& c : j.at("per_class")) {
    r.per_class.push_back({c.at("name").get<std::string>(), c.at("support").get<std::size_t>(),
                           c.at("correct").get<std::size_t>(), c.at("accuracy").get<double>()});
  }
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  for (const auto& k : j.at("ranked")) {
    r.ranked.push_back({k.at("k").get<std::size_t>(), k.at("best").get<double>(), k.at("worst").get<double>()});
  }
  return r;
}

/// Plain-text per-class table followed by the best/worst-k summary.
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "top-1 accuracy: %.4f (%zu / %zu)\n\n", r.top1, r.correct, r.total);
  os << line;
  std::size_t width = 5;
  for (const auto& c : r.per_class) width = std::max(width, c.name.size());
  std::snprintf(line, sizeof line, "%-*s %8s %8s %9s\n", static_cast<int>(width), "class", "support", "correct",
                "accuracy");
  os << line;
  for (const auto& c : r.per_class) {
    std::snprintf(line, sizeof line, "%-*s %8zu %8zu %9.4f\n", static_cast<int>(width), c.name.c_str(), c.support,
                  c.correct, c.accuracy);
    os << line;
  }
  if (!r.ranked.empty()) {
    os << "\n     k   best-k avg  worst-k avg\n";
    for (const auto& k : r.ranked) {
      std::snprintf(line, sizeof line, "%6zu %12.4f %12.4f\n", k.k, k.best, k.worst);
      os << line;
    }
  }
  return os.str();
}

}  // namespace tssi::harness
