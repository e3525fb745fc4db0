// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include "tssi/harness/grad_suite.hpp"
#include "tssi/harness/synth.hpp"
#include "tssi/harness/train.hpp"

using namespace tssi;
using namespace tssi::harness;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s  %-26s %s  [%.2f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
  failures += o.pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome tssi_order() {
  const auto t = resolve_topology("ntu25");
  const std::vector<JointId> expected{2,  21, 3,  4,  3,  21, 5,  6,  7,  8,  22, 23, 22, 8,  7,  6,  5,
                                      21, 9,  10, 11, 12, 24, 25, 24, 12, 11, 10, 9,  21, 2,  1,  13, 14,
                                      15, 16, 15, 14, 13, 1,  17, 18, 19, 20, 19, 18, 17, 1,  2};
  const auto t0 = Clock::now();
  const JointOrder order = euler_tour(t);
  const double ms = 1e3 * seconds_since(t0);
  const bool equal = order.order == expected;
  return {equal && ms < 1.0, fmt("%zu columns, exact match %s, %.4f ms (< 1 ms)", order.order.size(),
                                 equal ? "yes" : "no", ms)};
}

Outcome random_tree_adjacency() {
  std::mt19937_64 gen(77);
  const auto t0 = Clock::now();
  std::size_t bad = 0, max_nodes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 50)(gen);
    std::vector<JointId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<JointId>(i + 1);
    std::shuffle(ids.begin(), ids.end(), gen);
    SkeletonTopology t;
    t.name = "random";
    t.joint_count = n;
    t.root = ids[0];
    std::set<std::pair<JointId, JointId>> edges;
    for (std::size_t j = 1; j < n; ++j) {
      const JointId parent = ids[std::uniform_int_distribution<std::size_t>(0, j - 1)(gen)];
      t.children[parent].push_back(ids[j]);
      edges.insert({parent, ids[j]});
      edges.insert({ids[j], parent});
    }
    max_nodes = std::max(max_nodes, n);
    const JointOrder tour = euler_tour(t);
    bool ok = tour.order.size() == 2 * (n - 1) + 1 && adjacency_fraction(tour, t) == 1.0;
    for (std::size_t i = 0; ok && i + 1 < tour.order.size(); ++i) ok = edges.count({tour.order[i], tour.order[i + 1]}) > 0;
    bad += ok ? 0 : 1;
  }
  const double s = seconds_since(t0);
  return {bad == 0 && s < 1.0, fmt("100 trees (up to %zu nodes), %zu violations, %.3f s (< 1 s)", max_nodes, bad, s)};
}

Outcome gradient_suite_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name, failed;
  const auto suite = gradient_suite();
  for (const auto& c : suite) {
    const double e = c.run().max_rel_error;
    if (!(e < 1e-4)) failed += " " + c.name;
    if (e > worst || worst_name.empty()) {
      worst = e;
      worst_name = c.name;
    }
  }
  const double s = seconds_since(t0);
  return {failed.empty() && s < 120.0,
          fmt("%zu cases, worst %.2e (%s), %.1f s (< 120 s)%s%s", suite.size(), worst, worst_name.c_str(), s,
              failed.empty() ? "" : "; failing:", failed.c_str())};
}

Outcome shape_contracts() {
  struct Case {
    std::size_t size, channels;
  };
  std::string detail;
  bool ok = true;
  for (const Case& c : {Case{56, 8}, Case{28, 16}, Case{7, 32}}) {
    Rng rng(c.size);
    ParameterStore store;
    nn::GlanBlock block(store, "glan", c.channels, c.size, 7, nn::MaskActivation::sigmoid, rng);
    const Shape shape{1, c.size, c.size, c.channels};
    const Shape out = block(rng.normal_tensor(shape), Mode::train).shape();
    const auto expected_depth = static_cast<std::size_t>(std::lround(std::log2(static_cast<double>(c.size) / 7.0)));
    const std::size_t depth = block.hourglass().depth();
    const std::size_t bottom = c.size >> depth;
    const bool case_ok = out == shape && depth == expected_depth && bottom == 7;
    ok = ok && case_ok;
    detail += fmt("%s%zux%zux%zu->%s depth %zu bottom %zu", detail.empty() ? "" : "; ", c.size, c.size, c.channels,
                  shape_str(out).c_str(), depth, bottom);
  }
  return {ok, detail};
}

Outcome mask_normalization() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_k(1, 7), pick_d(1, 16), pick_c(1, 8);
  double worst_sum = 0.0, sig_lo = 1.0, sig_hi = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t k = pick_k(gen), d = pick_d(gen), ch = pick_c(gen), n = 2;
    // h is an LSTM output, so it lies in (-1, 1); W entries are normal with
    // a per-draw scale.
    const double scale = std::uniform_real_distribution<double>(0.1, 3.0)(gen);
    auto tensor = [&](Shape s) {
      Tensor t(s, 0.0);
      for (auto& v : t.values()) v = scale * normal(gen);
      return t;
    };
    Tensor h({n, d}, 0.0);
    for (auto& v : h.values()) v = std::uniform_real_distribution<double>(-1.0, 1.0)(gen);
    ssan::AttentionHead soft{ssan::AttentionMode::softmax_spatial, k, ch, tensor({d, k * k})};
    const Tensor m = ssan::attention_mask(h, soft);
    for (std::size_t r = 0; r < n; ++r) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k * k; ++p) sum += m.values()[r * k * k + p];
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    ssan::AttentionHead gate{ssan::AttentionMode::sigmoid_spatial_channel, k, ch, tensor({d, k * k * ch})};
    const Tensor g = ssan::attention_mask(h, gate);
    for (double v : g.values()) {
      sig_lo = std::min(sig_lo, v);
      sig_hi = std::max(sig_hi, v);
    }
  }
  const double s = seconds_since(t0);
  const bool ok = worst_sum <= 1e-9 && sig_lo > 0.0 && sig_hi < 1.0 && s < 5.0;
  return {ok, fmt("1000 draws: max |sum-1| %.1e, sigmoid range [%.3g, %.17g], %.2f s (< 5 s)", worst_sum, sig_lo,
                  sig_hi, s)};
}

Outcome subsequence_relation() {
  struct Case {
    std::size_t n;
    double alpha;
  };
  std::string detail;
  bool ok = true;
  for (std::size_t total : {90u, 300u}) {
    for (const Case& c : {Case{5, 0.5}, Case{3, 0.0}, Case{9, 0.75}}) {
      const auto w = subsequence_windows(total, {c.n, c.alpha});
      const double span = 1.0 + (1.0 - c.alpha) * static_cast<double>(c.n - 1);
      const std::size_t len = w.front().length;
      // Documented flooring: len = floor(T / span), stride = floor(len (1 - alpha)).
      bool case_ok = w.size() == c.n && len * span <= total + 1e-9 && (len + 1) * span > total;
      const auto stride = static_cast<std::size_t>(std::floor(len * (1.0 - c.alpha) + 1e-9));
      for (std::size_t k = 0; k < w.size(); ++k) {
        case_ok = case_ok && w[k].length == len && w[k].start + len <= total;
        if (k + 1 < w.size()) case_ok = case_ok && w[k].start == k * stride;
        if (k > 0) case_ok = case_ok && w[k].start >= w[k - 1].start;
      }
      case_ok = case_ok && w.front().start == 0 && w.back().start + len == total;
      ok = ok && case_ok;
      detail += fmt("%sT=%zu n=%zu a=%.2g: len %zu stride %zu last@%zu", detail.empty() ? "" : "; ", total, c.n,
                    c.alpha, len, stride, w.back().start);
    }
  }
  return {ok, detail};
}

PipelineConfig desk_pipeline(std::uint64_t init_seed) {
  PipelineConfig pc;
  pc.image_size = 56;
  pc.network = nn::NetworkConfig::desk_scale(nn::Arch::glan, 4, 16, 56);
  pc.init_seed = init_seed;
  return pc;
}

Outcome desk_learning() {
  SynthConfig sc;  // 4 classes x 20 sequences, T = 120, seed 1, clean
  DatasetManifest m = synth_generate(sc);
  for (auto& s : m.samples) s.split = Split::train;
  ActionModel model(desk_pipeline(1), m.topology, m.class_names);
  TrainConfig tc;
  tc.stop_at_train_accuracy = 0.95;
  const auto log = curriculum_train(model, m, {{0.0, 200}}, tc);
  const bool ok = log.final_train_accuracy >= 0.95 && log.epochs <= 200 && log.seconds < 600.0;
  return {ok, fmt("%zu sequences, training accuracy %.4f after %zu epochs, %.1f s (< 600 s)", m.samples.size(),
                  log.final_train_accuracy, log.epochs, log.seconds)};
}

Outcome ordering_advantage() {
  double tssi_sum = 0.0, chain_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.seed = seed;
    sc.noise.coord_noise = 0.02;
    const auto m = synth_generate(sc);
    double acc[2];
    for (int variant = 0; variant < 2; ++variant) {
      PipelineConfig pc = desk_pipeline(seed);
      if (variant == 1) {
        pc.order = OrderKind::chain;
        pc.chain = random_chain(m.topology.joint_count, 1000 + seed);
      }
      ActionModel model(pc, m.topology, m.class_names);
      TrainConfig tc;
      tc.stop_at_train_accuracy = 0.95;
      curriculum_train(model, m, {{0.0, 200}}, tc);
      acc[variant] = evaluate(model, m, Split::test).top1;
    }
    tssi_sum += acc[0];
    chain_sum += acc[1];
    per_seed += fmt("%s%.3f/%.3f", per_seed.empty() ? "" : " ", acc[0], acc[1]);
  }
  const double tssi = tssi_sum / 5.0, chain = chain_sum / 5.0;
  return {tssi >= chain - 1e-12,
          fmt("mean test accuracy TSSI %.4f vs random chain %.4f (per seed %s)", tssi, chain, per_seed.c_str())};
}

Outcome curriculum_monotonicity() {
  SynthConfig sc;
  sc.classes = 4;
  sc.per_class = 15;
  sc.frames = 40;
  sc.seed = 9;
  sc.noise = {0.0, 0.2, 0.05, 0.3};
  const auto m = synth_generate(sc);
  const auto train = m.split(Split::train);
  std::size_t low = 0;
  for (const Sample* s : train) low += s->mean_confidence < 0.5 ? 1 : 0;

  PipelineConfig pc;
  pc.image_size = 28;
  pc.network = nn::NetworkConfig::desk_scale(nn::Arch::glan, 4, 16, 28);
  ActionModel model(pc, m.topology, m.class_names);
  const auto schedule = default_schedule(1);
  const auto log = curriculum_train(model, m, schedule, {});

  bool ok = low > 0 && low < train.size() && log.stages.size() == schedule.size();
  std::string sizes;
  for (std::size_t i = 0; ok && i < log.stages.size(); ++i) {
    std::size_t expected = 0;
    for (const Sample* s : train) expected += s->mean_confidence >= schedule[i].threshold ? 1 : 0;
    ok = ok && log.stages[i].samples == expected;
    if (i > 0) ok = ok && log.stages[i].samples >= log.stages[i - 1].samples;
    sizes += fmt("%s%zu", sizes.empty() ? "" : ",", log.stages[i].samples);
  }
  DatasetManifest train_only = m;
  train_only.samples.clear();
  for (const Sample* s : train) train_only.samples.push_back(*s);
  for (const auto& s : filter_by_confidence(train_only, schedule.front().threshold).samples) {
    ok = ok && s.mean_confidence >= 0.5;
  }
  return {ok, fmt("stage sizes %s of %zu train samples (%zu below 0.5), thresholds 0.5,0.3,0.1,0", sizes.c_str(),
                  train.size(), low)};
}

Outcome reporting_fidelity() {
  std::mt19937_64 gen(60);
  const std::size_t classes = 60;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("A" + std::to_string(c + 1));
  std::vector<std::size_t> labels, preds;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t n = 3 + gen() % 20;
    const double p = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back(c);
      preds.push_back(std::uniform_real_distribution<double>(0, 1)(gen) < p ? c : gen() % classes);
    }
  }
  const auto r = make_report(labels, preds, names);
  bool ok = r.ranked.size() == 4;
  std::size_t mismatches = 0;
  for (const auto& entry : r.ranked) {
    std::vector<bool> used_hi(classes, false), used_lo(classes, false);
    double hi = 0.0, lo = 0.0;
    for (std::size_t pick = 0; pick < entry.k; ++pick) {
      std::size_t bi = classes, wi = classes;
      for (std::size_t c = 0; c < classes; ++c) {
        const double a = r.per_class[c].accuracy;
        if (!used_hi[c] && (bi == classes || a > r.per_class[bi].accuracy)) bi = c;
        if (!used_lo[c] && (wi == classes || a < r.per_class[wi].accuracy)) wi = c;
      }
      used_hi[bi] = used_lo[wi] = true;
      hi += r.per_class[bi].accuracy;
      lo += r.per_class[wi].accuracy;
    }
    mismatches += (entry.best != hi / entry.k) + (entry.worst != lo / entry.k);
  }
  ok = ok && mismatches == 0;
  return {ok, fmt("60 classes, k in {1,3,5,10}: %zu mismatches; top-1 %.4f, best-1 %.4f, worst-1 %.4f", mismatches,
                  r.top1, r.ranked[0].best, r.ranked[0].worst)};
}

}  // namespace

int main() {
  report("tssi-order-exactness", tssi_order);
  report("euler-tour-adjacency", random_tree_adjacency);
  report("gradient-suite", gradient_suite_check);
  report("shape-contracts", shape_contracts);
  report("mask-normalization", mask_normalization);
  report("subsequence-relation", subsequence_relation);
  report("desk-scale-learning", desk_learning);
  report("ordering-advantage", ordering_advantage);
  report("curriculum-monotonicity", curriculum_monotonicity);
  report("reporting-fidelity", reporting_fidelity);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
