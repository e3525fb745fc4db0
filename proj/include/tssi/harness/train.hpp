#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tssi/harness/dataset.hpp"
#include "tssi/harness/metrics.hpp"
#include "tssi/harness/model.hpp"
#include "tssi/tensor/optim.hpp"

namespace tssi::harness {

struct CurriculumStage {
  double threshold = 0.0;
  std::size_t epochs = 1;
};

using CurriculumSchedule = std::vector<CurriculumStage>;

inline CurriculumSchedule default_schedule(std::size_t epochs_per_stage) {
  return {{0.5, epochs_per_stage}, {0.3, epochs_per_stage}, {0.1, epochs_per_stage}, {0.0, epochs_per_stage}};
}

inline void validate_schedule(const CurriculumSchedule& s) {
  if (s.empty()) throw std::invalid_argument("curriculum: empty schedule");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i].threshold >= 0.0 && s[i].threshold <= 1.0)) {
      throw std::invalid_argument("curriculum: threshold outside [0, 1] in stage " + std::to_string(i + 1));
    }
    if (i > 0 && s[i].threshold > s[i - 1].threshold) {
      throw std::invalid_argument("curriculum: thresholds must be non-increasing (stage " + std::to_string(i + 1) +
                                  ")");
    }
  }
}

/// "0.5:10,0.3:10,0:20" -> stages.
inline CurriculumSchedule parse_schedule(const std::string& text) {
  CurriculumSchedule out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("schedule entry '" + item + "' is not threshold:epochs");
    out.push_back({std::stod(item.substr(0, colon)), static_cast<std::size_t>(std::stoul(item.substr(colon + 1)))});
  }
  validate_schedule(out);
  return out;
}

struct TrainConfig {
  SgdOptions sgd{0.01, 0.9};
  std::size_t batch_size = 16;
  bool cosine = true;
  std::uint64_t shuffle_seed = 7;
  /// Stop once eval-mode accuracy on the current training set reaches this
  /// value (0 disables).
  double stop_at_train_accuracy = 0.0;
  std::function<void(const std::string&)> log;
};

struct StageLog {
  double threshold = 0.0;
  std::size_t samples = 0;
  std::size_t items = 0;
  std::size_t epochs_run = 0;
  bool skipped = false;
  std::vector<double> loss;
  std::vector<double> accuracy;
};

struct TrainLog {
  std::vector<StageLog> stages;
  std::vector<std::string> warnings;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  bool stopped_early = false;
  double final_train_accuracy = -1.0;
  double seconds = 0.0;
};

/// Encoded persons keyed by sample id and person index; encoding runs once.
class EncodingCache {
 public:
  explicit EncodingCache(const ActionModel& model) : model_(model) {}

  const EncodedPerson& get(const Sample& s, std::size_t person) {
    const auto key = std::make_pair(s.id, person);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, model_.encode(s.persons.at(person))).first;
    return it->second;
  }

 private:
  const ActionModel& model_;
  std::map<std::pair<std::string, std::size_t>, EncodedPerson> cache_;
};

struct TrainItem {
  const EncodedPerson* input;
  std::size_t label;
};

/// Training view of samples: every person becomes its own item.
inline std::vector<TrainItem> expand_persons(const std::vector<const Sample*>& samples, EncodingCache& cache) {
  std::vector<TrainItem> out;
  for (const Sample* s : samples) {
    for (std::size_t p = 0; p < s->persons.size(); ++p) out.push_back({&cache.get(*s, p), s->label});
  }
  return out;
}

inline std::size_t argmax_lowest(const double* scores, std::size_t n) {
  return static_cast<std::size_t>(std::max_element(scores, scores + n) - scores);
}

/// Eval-mode logits for many encoded persons, in chunks.
inline std::vector<std::vector<double>> batched_softmax(const ActionModel& model,
                                                        const std::vector<const EncodedPerson*>& inputs,
                                                        std::size_t chunk = 32) {
  NoGradGuard guard;
  std::vector<std::vector<double>> out;
  const std::size_t classes = model.class_names().size();
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    const std::vector<const EncodedPerson*> batch(
        inputs.begin() + static_cast<std::ptrdiff_t>(start),
        inputs.begin() + static_cast<std::ptrdiff_t>(std::min(inputs.size(), start + chunk)));
    const Tensor probs = softmax(model.logits(batch, Mode::eval), 1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.emplace_back(probs.values().begin() + static_cast<std::ptrdiff_t>(i * classes),
                       probs.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * classes));
    }
  }
  return out;
}

/// Averages per-person class probabilities.
inline std::vector<double> merge_person_scores(const std::vector<std::vector<double>>& per_person) {
  if (per_person.empty()) throw std::invalid_argument("merge: no persons");
  std::vector<double> avg(per_person.front().size(), 0.0);
  for (const auto& s : per_person)
    for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += s[c];
  for (auto& v : avg) v /= static_cast<double>(per_person.size());
  return avg;
}

/// Test-time scores of one sample: softmax per person, then the average.
inline std::vector<double> multi_person_merge(const ActionModel& model, const Sample& sample, EncodingCache& cache) {
  std::vector<const EncodedPerson*> inputs;
  for (std::size_t p = 0; p < sample.persons.size(); ++p) inputs.push_back(&cache.get(sample, p));
  return merge_person_scores(batched_softmax(model, inputs));
}

/// Merged predictions for many samples, batching persons across samples.
inline std::vector<std::size_t> predict(const ActionModel& model, const std::vector<const Sample*>& samples,
                                        EncodingCache& cache) {
  std::vector<const EncodedPerson*> inputs;
  for (const Sample* s : samples)
    for (std::size_t p = 0; p < s->persons.size(); ++p) inputs.push_back(&cache.get(*s, p));
  const auto scores = batched_softmax(model, inputs);
  std::vector<std::size_t> out;
  std::size_t k = 0;
  for (const Sample* s : samples) {
    std::vector<std::vector<double>> mine(scores.begin() + static_cast<std::ptrdiff_t>(k),
                                          scores.begin() + static_cast<std::ptrdiff_t>(k + s->persons.size()));
    k += s->persons.size();
    const auto avg = merge_person_scores(mine);
    out.push_back(argmax_lowest(avg.data(), avg.size()));
  }
  return out;
}

inline MetricsReport evaluate(const ActionModel& model, const std::vector<const Sample*>& samples,
                              EncodingCache& cache) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  std::vector<std::size_t> labels;
  for (const Sample* s : samples) labels.push_back(s->label);
  return make_report(labels, predict(model, samples, cache), model.class_names());
}

inline MetricsReport evaluate(const ActionModel& model, const DatasetManifest& m, Split split) {
  EncodingCache cache(model);
  const auto samples = m.split(split);
  if (samples.empty()) throw std::invalid_argument("evaluate: split '" + to_string(split) + "' is empty");
  return evaluate(model, samples, cache);
}

/// Eval-mode accuracy over per-person training items.
inline double item_accuracy(const ActionModel& model, const std::vector<TrainItem>& items) {
  std::vector<const EncodedPerson*> inputs;
  for (const auto& it : items) inputs.push_back(it.input);
  const auto scores = batched_softmax(model, inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    correct += argmax_lowest(scores[i].data(), scores[i].size()) == items[i].label ? 1 : 0;
  }
  return items.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(items.size());
}

/// For each stage (tau, E): E epochs of SGD on the training samples with
/// mean confidence >= tau. An empty stage is skipped with a warning.
inline TrainLog curriculum_train(ActionModel& model, const DatasetManifest& m, const CurriculumSchedule& schedule,
                                 const TrainConfig& cfg, EncodingCache* shared_cache = nullptr) {
  validate_schedule(schedule);
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  const auto start_time = std::chrono::steady_clock::now();
  EncodingCache local_cache(model);
  EncodingCache& cache = shared_cache ? *shared_cache : local_cache;
  auto say = [&](const std::string& s) {
    if (cfg.log) cfg.log(s);
  };

  DatasetManifest train_only = m;
  train_only.samples.clear();
  for (const auto& s : m.samples) {
    if (s.split == Split::train) train_only.samples.push_back(s);
  }

  TrainLog log;
  std::vector<DatasetManifest> stage_sets;
  std::size_t total_steps = 0;
  for (const auto& stage : schedule) {
    stage_sets.push_back(filter_by_confidence(train_only, stage.threshold));
    std::size_t items = 0;
    for (const auto& s : stage_sets.back().samples) items += s.persons.size();
    total_steps += stage.epochs * ((items + cfg.batch_size - 1) / cfg.batch_size);
  }
  if (total_steps == 0) throw std::invalid_argument("train: every curriculum stage is empty");

  Sgd sgd(cfg.sgd);
  Rng shuffle(cfg.shuffle_seed);
  auto& store = model.parameters();
  const auto params = store.trainable();
  std::vector<TrainItem> items;

  for (std::size_t si = 0; si < schedule.size() && !log.stopped_early; ++si) {
    StageLog stage;
    stage.threshold = schedule[si].threshold;
    stage.samples = stage_sets[si].samples.size();
    std::vector<const Sample*> chosen;
    for (const auto& s : stage_sets[si].samples) chosen.push_back(&s);
    items = expand_persons(chosen, cache);
    stage.items = items.size();
    if (items.empty()) {
      stage.skipped = true;
      log.warnings.push_back("stage " + std::to_string(si + 1) + " (threshold " + std::to_string(stage.threshold) +
                             ") has no training samples; skipped");
      say("warning: " + log.warnings.back());
      log.stages.push_back(stage);
      continue;
    }
    for (std::size_t epoch = 0; epoch < schedule[si].epochs; ++epoch) {
      std::shuffle(items.begin(), items.end(), shuffle.engine());
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t b = 0; b < items.size(); b += cfg.batch_size) {
        const std::size_t end = std::min(items.size(), b + cfg.batch_size);
        std::vector<const EncodedPerson*> batch;
        std::vector<std::size_t> labels;
        for (std::size_t i = b; i < end; ++i) {
          batch.push_back(items[i].input);
          labels.push_back(items[i].label);
        }
        if (cfg.cosine) sgd.set_lr(std::max(1e-12, cosine_lr(cfg.sgd.lr, log.steps, total_steps)));
        store.zero_grad();
        const Tensor logits = model.logits(batch, Mode::train);
        const Tensor loss = cross_entropy(logits, labels);
        backward(loss);
        sgd.step(params);
        ++log.steps;
        loss_sum += loss.item() * static_cast<double>(labels.size());
        const std::size_t classes = logits.dim(1);
        for (std::size_t i = 0; i < labels.size(); ++i) {
          correct += argmax_lowest(logits.values().data() + i * classes, classes) == labels[i] ? 1 : 0;
        }
      }
      ++stage.epochs_run;
      ++log.epochs;
      stage.loss.push_back(loss_sum / static_cast<double>(items.size()));
      stage.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(items.size()));
      char line[160];
      std::snprintf(line, sizeof line, "stage %zu epoch %zu: loss %.4f, running accuracy %.3f (%zu items)", si + 1,
                    epoch + 1, stage.loss.back(), stage.accuracy.back(), items.size());
      say(line);
      if (cfg.stop_at_train_accuracy > 0.0 && stage.accuracy.back() >= cfg.stop_at_train_accuracy) {
        const double acc = item_accuracy(model, items);
        if (acc >= cfg.stop_at_train_accuracy) {
          log.stopped_early = true;
          log.final_train_accuracy = acc;
          break;
        }
      }
    }
    log.stages.push_back(stage);
  }
  if (log.final_train_accuracy < 0.0 && !items.empty()) log.final_train_accuracy = item_accuracy(model, items);
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return log;
}

inline nlohmann::json to_json(const TrainLog& log) {
  nlohmann::json j;
  j["steps"] = log.steps;
  j["epochs"] = log.epochs;
  j["stopped_early"] = log.stopped_early;
  j["final_train_accuracy"] = log.final_train_accuracy;
  j["seconds"] = log.seconds;
  j["warnings"] = log.warnings;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : log.stages) {
    j["stages"].push_back({{"threshold", s.threshold},
                           {"samples", s.samples},
                           {"items", s.items},
                           {"epochs_run", s.epochs_run},
                           {"skipped", s.skipped},
                           {"loss", s.loss},
                           {"accuracy", s.accuracy}});
  }
  return j;
}

}  // namespace tssi::harness
