/* Copyright (c) 2026 VEPE Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "vepe/checkpoint.hpp"
#include "vepe/gradcheck_suite.hpp"
#include "vepe/kernels.hpp"
#include "vepe/pipeline.hpp"

namespace {

using namespace vepe;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, weight_decay, grad_clip, threshold, margin, tau, occlusion;
  std::optional<double> lambda_kpt, lambda_cls, lambda_ic;
  std::optional<std::size_t> batch, epochs, queries, frames, min_keep;
  std::optional<std::size_t> height, width, clip_length, persons_min, persons_max;
  bool no_stpe = false, no_icm = false, no_stdme = false, no_stpd = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "RunConfig JSON file");
    app->add_option("--seed", seed, "Run seed");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--weight-decay", weight_decay, "Decoupled weight decay");
    app->add_option("--grad-clip", grad_clip, "Global gradient norm clip (0 disables)");
    app->add_option("--batch", batch, "Frames per optimizer step");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--queries", queries, "Pose queries per frame");
    app->add_option("--frames", frames, "Frames per training clip (keyframe + references)");
    app->add_option("--threshold", threshold, "Pose query selection threshold");
    app->add_option("--min-keep", min_keep, "Queries kept when none pass the threshold");
    app->add_option("--margin", margin, "Instance consistency margin");
    app->add_option("--lambda-kpt", lambda_kpt, "Keypoint loss weight");
    app->add_option("--lambda-cls", lambda_cls, "Classification loss weight");
    app->add_option("--lambda-ic", lambda_ic, "Instance consistency loss weight");
    app->add_option("--tau", tau, "AP distance threshold relative to person scale");
    app->add_option("--height", height, "Synthetic frame height");
    app->add_option("--width", width, "Synthetic frame width");
    app->add_option("--clip-length", clip_length, "Synthetic frames per clip");
    app->add_option("--persons-min", persons_min, "Fewest persons per clip");
    app->add_option("--persons-max", persons_max, "Most persons per clip");
    app->add_option("--occlusion", occlusion, "Roaming occluder probability");
    app->add_flag("--no-stpe", no_stpe, "Disable the pose-query encoder");
    app->add_flag("--no-icm", no_icm, "Disable instance queries, mask and consistency loss");
    app->add_flag("--no-stdme", no_stdme, "Disable the deformable memory encoder");
    app->add_flag("--no-stpd", no_stpd, "Disable the cascaded decoder");
  }

  RunConfig resolve(const std::string& fallback_path = {}) const {
    RunConfig c;
    if (!config_path.empty()) {
      c = load_config(config_path);
    } else if (!fallback_path.empty() && std::filesystem::exists(fallback_path)) {
      c = load_config(fallback_path);
    }
    if (seed) c.seed = *seed;
    if (lr) c.optimizer.lr = *lr;
    if (weight_decay) c.optimizer.weight_decay = *weight_decay;
    if (grad_clip) c.optimizer.grad_clip = *grad_clip;
    if (batch) c.optimizer.batch = *batch;
    if (epochs) c.optimizer.epochs = *epochs;
    if (queries) c.spatial.queries = *queries;
    if (frames) c.spatial.attention.frames = *frames;
    if (threshold) c.temporal.threshold = *threshold;
    if (min_keep) c.temporal.min_keep = *min_keep;
    if (margin) c.margin = *margin;
    if (lambda_kpt) c.loss.keypoint = *lambda_kpt;
    if (lambda_cls) c.loss.classification = *lambda_cls;
    if (lambda_ic) c.loss.instance = *lambda_ic;
    if (tau) c.tau = *tau;
    if (height) c.synth.height = *height;
    if (width) c.synth.width = *width;
    if (clip_length) c.synth.frames = *clip_length;
    if (persons_min) c.synth.persons.first = *persons_min;
    if (persons_max) c.synth.persons.second = *persons_max;
    if (occlusion) c.synth.occlusion = *occlusion;
    if (no_stpe) c.temporal.use_stpe = false;
    if (no_icm) c.temporal.use_icm = false;
    if (no_stdme) c.temporal.use_stdme = false;
    if (no_stpd) c.temporal.use_stpd = false;
    c.validate();
    return c;
  }
};

std::string sidecar(const std::string& ckpt) { return ckpt + ".json"; }

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video pose estimation with spatio-temporal pose queries"};
  app.require_subcommand(1);

  Overrides ov;
  std::string out, data, init, log_path, eval_data, ckpt, clip_path;
  std::string train_mode = "spatial", eval_mode = "temporal", splits = "clean";
  std::size_t count = 10;
  double min_score = 0.5;
  bool corrupt = false;
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5};

  auto* gen = app.add_subcommand("generate", "Write synthetic clips and a manifest");
  ov.attach(gen);
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--count", count, "Number of clips");
  gen->add_option("--split", splits, "clean|blur|occlusion|fast, comma separated round-robin");

  auto* tr = app.add_subcommand("train", "Train a checkpoint");
  ov.attach(tr);
  tr->add_option("--data", data, "Dataset directory with manifest.json")->required();
  tr->add_option("--out", out, "Output checkpoint")->required();
  tr->add_option("--mode", train_mode, "spatial|temporal|joint")->capture_default_str();
  tr->add_option("--init", init, "Spatial checkpoint (required for temporal mode)");
  tr->add_option("--log", log_path, "Structured log file (default stdout)");
  tr->add_option("--eval-data", eval_data, "Dataset evaluated after every epoch");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ov.attach(ev);
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--mode", eval_mode, "spatial|temporal")->capture_default_str();
  ev->add_option("--out", out, "Report file (default stdout)");

  auto* sw = app.add_subcommand("sweep-threshold", "Pose query selection threshold sweep");
  ov.attach(sw);
  sw->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sw->add_option("--data", data, "Dataset directory")->required();
  sw->add_option("--thresholds", thresholds, "Thresholds")->delimiter(',');
  sw->add_option("--out", out, "Table file (default stdout)");

  auto* inf = app.add_subcommand("infer", "Overlay images and pose file for one clip");
  ov.attach(inf);
  inf->add_option("--ckpt", ckpt, "Checkpoint")->required();
  inf->add_option("--clip", clip_path, "Clip file")->required();
  inf->add_option("--out", out, "Output directory")->required();
  inf->add_option("--min-score", min_score, "Overlay score threshold");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_flag("--corrupt-fixture", corrupt, "Include an operator with a wrong backward");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    check_reference_defaults();
    if (deterministic_mode()) kernels::select(kernels::Isa::kScalar);

    if (gen->parsed()) {
      const RunConfig cfg = ov.resolve();
      std::vector<Split> list;
      for (const std::string& s : split_list(splits)) list.push_back(parse_split(s));
      generate_dataset(out, cfg.synth, list, count, cfg.seed);
      std::cout << "generated " << count << " clips in " << out << '\n';
    } else if (tr->parsed()) {
      const TrainMode m = parse_train_mode(train_mode);
      if (m == TrainMode::kTemporal && init.empty()) {
        std::cerr << "error: temporal mode needs a spatial checkpoint (--init)\n";
        return kUsage;
      }
      if (!init.empty() && !std::filesystem::exists(init)) {
        std::cerr << "error: spatial checkpoint " << init << " not found\n";
        return kUsage;
      }
      const RunConfig cfg = ov.resolve(init.empty() ? std::string() : sidecar(init));
      const Dataset train_set = load_dataset(data);
      std::optional<Dataset> eval_set;
      if (!eval_data.empty()) eval_set = load_dataset(eval_data);
      VepeModel model(cfg);
      if (!init.empty()) {
        load_checkpoint_prefix(init, model.params, "spatial.");
        if (m == TrainMode::kJoint) load_checkpoint_prefix(init, model.params, "temporal.");
      }
      std::ofstream log_file;
      if (!log_path.empty()) {
        log_file.open(log_path, std::ios::binary);
        if (!log_file) throw std::runtime_error("cannot write " + log_path);
      }
      TrainOptions opts;
      opts.log = log_path.empty() ? &std::cout : &log_file;
      opts.eval = eval_set ? &*eval_set : &train_set;
      train(model, train_set, m, opts);
      save_checkpoint(out, model.params);
      write_text(sidecar(out), config_to_json(cfg));
    } else if (ev->parsed()) {
      const EvalMode m = parse_eval_mode(eval_mode);
      const RunConfig cfg = ov.resolve(sidecar(ckpt));
      VepeModel model(cfg);
      load_checkpoint(ckpt, model.params);
      const EvalReport r = evaluate(model, load_dataset(data), m);
      write_text(out, r.to_text());
    } else if (sw->parsed()) {
      const RunConfig cfg = ov.resolve(sidecar(ckpt));
      VepeModel model(cfg);
      load_checkpoint(ckpt, model.params);
      write_text(out, sweep_table(sweep_threshold(model, load_dataset(data), thresholds)));
    } else if (inf->parsed()) {
      const RunConfig cfg = ov.resolve(sidecar(ckpt));
      VepeModel model(cfg);
      load_checkpoint(ckpt, model.params);
      write_inference(model, load_clip(clip_path), out, min_score);
      std::cout << "wrote overlays and poses.txt to " << out << '\n';
    } else if (gc->parsed()) {
      GradcheckSuiteOptions o;
      o.corrupt_fixture = corrupt;
      bool ok = true;
      for (const GradcheckReport& r : run_gradcheck_suite(o)) {
        std::cout << r.summary() << '\n';
        ok = ok && r.passed;
      }
      std::cout << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
      return ok ? kOk : kFailure;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
