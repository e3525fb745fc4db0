// tssi: encode, synthesize, train, evaluate and check gradients from the shell.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tssi/harness/grad_suite.hpp"
#include "tssi/harness/synth.hpp"
#include "tssi/harness/train.hpp"

using namespace tssi;
using namespace tssi::harness;

namespace {

struct EncodeArgs {
  std::string input, output, order = "tssi", sample;
  std::size_t size = 224, subimages = 1;
  double overlap = 0.0;
  std::uint64_t chain_seed = 0;
};

int run_encode(const EncodeArgs& a) {
  const auto m = load_canonical(a.input);
  JointOrder order;
  if (a.order == "tssi") {
    order = euler_tour(m.topology);
  } else {
    order = a.chain_seed == 0 ? identity_chain(m.topology)
                              : chain_order(m.topology, random_chain(m.topology.joint_count, a.chain_seed));
  }
  std::vector<SkeletonImage> images;
  for (const auto& s : m.samples) {
    if (!a.sample.empty() && s.id != a.sample) continue;
    for (const auto& p : s.persons) {
      if (a.subimages > 1) {
        for (auto& img : encode_subimages(p, order, {a.subimages, a.overlap}, a.size)) images.push_back(std::move(img));
      } else {
        images.push_back(encode(p, order, a.size));
      }
    }
  }
  if (images.empty()) throw std::invalid_argument("no sample matched '" + a.sample + "'");
  write_image_dump(a.output, images);
  std::printf("wrote %zu image(s) of %zux%zux%zu to %s\n", images.size(), images[0].height(), images[0].width(),
              images[0].channels(), a.output.c_str());
  return 0;
}

int run_synth(const SynthConfig& cfg, const std::string& output) {
  const auto m = synth_generate(cfg);
  save_canonical(m, output);
  std::printf("wrote %zu samples (%zu train, %zu val, %zu test) to %s\n", m.samples.size(),
              m.split(Split::train).size(), m.split(Split::val).size(), m.split(Split::test).size(), output.c_str());
  return 0;
}

struct ImportArgs {
  std::string ntu_dir, keypoint_dir, protocol = "cross-subject", output;
};

int run_import(const ImportArgs& a) {
  std::vector<std::string> notes;
  DatasetManifest m;
  if (!a.ntu_dir.empty()) {
    m = load_ntu_directory(a.ntu_dir, a.protocol, &notes);
  } else {
    m = load_keypoint_json(a.keypoint_dir, &notes);
  }
  for (const auto& n : notes) std::fprintf(stderr, "note: %s\n", n.c_str());
  save_canonical(m, a.output);
  std::printf("wrote %zu samples, %zu classes to %s\n", m.samples.size(), m.class_count(), a.output.c_str());
  return 0;
}

struct TrainArgs {
  std::string data, checkpoint = "model.ckpt", arch = "glan", order = "tssi", schedule, attention = "softmax",
                    log_json;
  bool ssan = false;
  std::size_t epochs = 10, size = 56, width_divisor = 16, subimages = 5, hidden = 32, batch = 16;
  double overlap = 0.5, lr = 0.01, momentum = 0.9, stop_at = 0.0;
  std::uint64_t seed = 1, chain_seed = 0;
};

int run_train(const TrainArgs& a) {
  const auto m = load_canonical(a.data);
  PipelineConfig pc;
  pc.image_size = a.size;
  pc.network = nn::NetworkConfig::desk_scale(nn::arch_from_string(a.arch), m.class_count(), a.width_divisor, a.size);
  pc.init_seed = a.seed;
  if (a.order == "chain") {
    pc.order = OrderKind::chain;
    if (a.chain_seed != 0) pc.chain = random_chain(m.topology.joint_count, a.chain_seed);
  }
  pc.use_ssan = a.ssan;
  pc.ssan.subimages = a.subimages;
  pc.ssan.overlap = a.overlap;
  pc.ssan.hidden = a.hidden;
  pc.ssan.mode = ssan::attention_mode_from_string(a.attention);
  ActionModel model(pc, m.topology, m.class_names);

  const CurriculumSchedule schedule = a.schedule.empty() ? default_schedule(a.epochs) : parse_schedule(a.schedule);
  TrainConfig tc;
  tc.sgd = {a.lr, a.momentum};
  tc.batch_size = a.batch;
  tc.shuffle_seed = a.seed;
  tc.stop_at_train_accuracy = a.stop_at;
  tc.log = [](const std::string& line) { std::printf("%s\n", line.c_str()); };
  const TrainLog log = curriculum_train(model, m, schedule, tc);

  nlohmann::json extra;
  extra["train_log"] = to_json(log);
  model.save(a.checkpoint, extra);
  if (!a.log_json.empty()) std::ofstream(a.log_json) << to_json(log).dump(2) << '\n';
  std::printf("%zu steps in %.1f s, training accuracy %.4f; checkpoint %s\n", log.steps, log.seconds,
              log.final_train_accuracy, a.checkpoint.c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", report;
};

int run_eval(const EvalArgs& a) {
  const auto model = ActionModel::load(a.checkpoint);
  const auto m = load_canonical(a.data);
  if (m.class_names != model->class_names()) {
    throw std::invalid_argument("dataset classes differ from the checkpoint's classes");
  }
  const auto r = evaluate(*model, m, split_from_string(a.split));
  std::cout << format_report(r);
  if (!a.report.empty()) {
    std::ofstream os(a.report);
    if (!os) throw std::runtime_error("cannot write " + a.report);
    os << to_json(r).dump(2) << '\n';
  }
  return 0;
}

int run_gradcheck() {
  bool ok = true;
  for (const auto& c : gradient_suite()) {
    const auto r = c.run();
    const bool pass = r.max_rel_error < 1e-4;
    ok = ok && pass;
    std::printf("%-32s max rel error %.3e  (%zu entries)  %s\n", c.name.c_str(), r.max_rel_error, r.probed,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

int run_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::cout << format_report(report_from_json(nlohmann::json::parse(in)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skeleton-image action recognition toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults ([train] section etc.)");
  app.failure_message(CLI::FailureMessage::help);

  EncodeArgs enc;
  auto* encode_cmd = app.add_subcommand("encode", "Encode sequences of a canonical dataset into skeleton images");
  encode_cmd->add_option("input", enc.input, "Canonical dataset (JSON)")->required()->check(CLI::ExistingFile);
  encode_cmd->add_option("-o,--output", enc.output, "Image dump path")->required();
  encode_cmd->add_option("--order", enc.order, "Column order")->check(CLI::IsMember({"chain", "tssi"}));
  encode_cmd->add_option("--chain-seed", enc.chain_seed, "Random chain permutation seed (0: joints 1..N)");
  encode_cmd->add_option("--size", enc.size, "Output image side")->check(CLI::PositiveNumber);
  encode_cmd->add_option("--subimages", enc.subimages, "Number of overlapping sub-images")->check(CLI::PositiveNumber);
  encode_cmd->add_option("--overlap", enc.overlap, "Overlap rate between sub-images")->check(CLI::Range(0.0, 0.999));
  encode_cmd->add_option("--sample", enc.sample, "Only this sample id");

  SynthConfig syn;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic canonical dataset");
  synth_cmd->add_option("-o,--output", synth_out, "Output path")->required();
  synth_cmd->add_option("--classes", syn.classes)->capture_default_str();
  synth_cmd->add_option("--per-class", syn.per_class)->capture_default_str();
  synth_cmd->add_option("--frames", syn.frames)->capture_default_str();
  synth_cmd->add_option("--topology", syn.topology, "Shipped id or topology file")->capture_default_str();
  synth_cmd->add_option("--persons", syn.persons)->capture_default_str();
  synth_cmd->add_option("--noise", syn.noise.coord_noise, "Coordinate noise (fraction of body size)");
  synth_cmd->add_option("--confidence-min", syn.noise.confidence_min, "Lowest per-sample reliability")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--degraded-noise", syn.noise.degraded_noise, "Extra noise scaled by unreliability");
  synth_cmd->add_option("--dropout", syn.noise.dropout, "Joint loss rate scaled by unreliability");
  synth_cmd->add_option("--seed", syn.seed)->capture_default_str();

  ImportArgs imp;
  auto* import_cmd = app.add_subcommand("import", "Convert NTU .skeleton files or keypoint JSON to canonical form");
  auto* ntu_opt = import_cmd->add_option("--ntu", imp.ntu_dir, "Directory of .skeleton files")->check(CLI::ExistingDirectory);
  auto* kp_opt =
      import_cmd->add_option("--keypoints", imp.keypoint_dir, "Keypoint JSON directory")->check(CLI::ExistingDirectory);
  ntu_opt->excludes(kp_opt);
  import_cmd->add_option("--protocol", imp.protocol)->check(CLI::IsMember({"cross-subject", "cross-view"}));
  import_cmd->add_option("-o,--output", imp.output)->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train with the confidence curriculum");
  train_cmd->add_option("--data", tr.data, "Canonical dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint", tr.checkpoint, "Output checkpoint")->capture_default_str();
  train_cmd->add_option("--arch", tr.arch)->check(CLI::IsMember({"plain", "base-attn", "glan"}))->capture_default_str();
  train_cmd->add_flag("--ssan", tr.ssan, "Use the sub-sequence attention head");
  train_cmd->add_option("--attention", tr.attention, "SSAN mask mode")->check(CLI::IsMember({"softmax", "sigmoid"}));
  train_cmd->add_option("--subimages", tr.subimages)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--overlap", tr.overlap)->check(CLI::Range(0.0, 0.999))->capture_default_str();
  train_cmd->add_option("--hidden", tr.hidden, "LSTM width")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--order", tr.order)->check(CLI::IsMember({"chain", "tssi"}))->capture_default_str();
  train_cmd->add_option("--chain-seed", tr.chain_seed, "Random chain permutation seed (0: joints 1..N)");
  train_cmd->add_option("--schedule", tr.schedule, "Stages as threshold:epochs,... (default 0.5,0.3,0.1,0)");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs per stage of the default schedule")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--momentum", tr.momentum)->check(CLI::Range(0.0, 0.999))->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--size", tr.size, "Input image side")->capture_default_str();
  train_cmd->add_option("--width-divisor", tr.width_divisor, "Channel plan divisor")->capture_default_str();
  train_cmd->add_option("--stop-at", tr.stop_at, "Stop once training accuracy reaches this value")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--log-json", tr.log_json, "Write the training log as JSON");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  eval_cmd->add_option("--report", ev.report, "Write the metrics report as JSON");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");

  std::string report_path;
  auto* report_cmd = app.add_subcommand("report", "Print the per-class table of a JSON metrics report");
  report_cmd->add_option("input", report_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*encode_cmd) return run_encode(enc);
    if (*synth_cmd) return run_synth(syn, synth_out);
    if (*import_cmd) {
      if (imp.ntu_dir.empty() && imp.keypoint_dir.empty()) throw CLI::RequiredError("--ntu or --keypoints");
      return run_import(imp);
    }
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*grad_cmd) return run_gradcheck();
    if (*report_cmd) return run_report(report_path);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
