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

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vepe/pipeline.hpp"

namespace vepe {

using nlohmann::json;

namespace {

json to_json(const AttentionConfig& c) {
  return {{"d_model", c.d_model}, {"heads", c.heads},   {"levels", c.levels},
          {"points", c.points},   {"frames", c.frames}, {"ffn_width", c.ffn_width}};
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["spatial"] = {{"attention", to_json(c.spatial.attention)},
                  {"queries", c.spatial.queries},
                  {"joints", c.spatial.joints},
                  {"encoder_layers", c.spatial.encoder_layers},
                  {"decoder_layers", c.spatial.decoder_layers},
                  {"channels", c.spatial.channels}};
  j["temporal"] = {{"stpe_layers", c.temporal.stpe_layers},
                   {"stdme_layers", c.temporal.stdme_layers},
                   {"stpd_layers", c.temporal.stpd_layers},
                   {"threshold", c.temporal.threshold},
                   {"min_keep", c.temporal.min_keep},
                   {"use_stpe", c.temporal.use_stpe},
                   {"use_icm", c.temporal.use_icm},
                   {"use_stdme", c.temporal.use_stdme},
                   {"use_stpd", c.temporal.use_stpd}};
  j["synth"] = {{"persons", {c.synth.persons.first, c.synth.persons.second}},
                {"speed", {c.synth.speed.first, c.synth.speed.second}},
                {"occlusion", c.synth.occlusion},
                {"blur", {c.synth.blur.first, c.synth.blur.second}},
                {"height", c.synth.height},
                {"width", c.synth.width},
                {"frames", c.synth.frames}};
  j["loss"] = {{"keypoint", c.loss.keypoint},
               {"classification", c.loss.classification},
               {"instance", c.loss.instance},
               {"margin", c.margin}};
  j["tau"] = c.tau;
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"grad_clip", c.optimizer.grad_clip},
                    {"batch", c.optimizer.batch},
                    {"epochs", c.optimizer.epochs}};
  return j;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void read_pair(const json& j, const char* key, std::pair<T, T>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError(std::string("config: '") + key + "' must be a two-element array");
  }
  out = {v[0].get<T>(), v[1].get<T>()};
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(std::string("config: unknown key '") + k + "' in " + where);
  }
}

}  // namespace

void RunConfig::validate() const {
  spatial.validate();
  temporal.validate();
  synth.validate();
  if (!(tau > 0.0)) throw ConfigError("config: tau must be positive");
  if (margin < 0.0) throw ConfigError("config: margin must be nonnegative");
  if (optimizer.batch == 0) throw ConfigError("config: batch must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (spatial.attention.frames < 1) throw ConfigError("config: frames must be >= 1");
}

std::string config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    reject_unknown(j, {"seed", "spatial", "temporal", "synth", "loss", "tau", "optimizer"},
                   "top level");
    read(j, "seed", c.seed);
    read(j, "tau", c.tau);
    if (j.contains("spatial")) {
      const json& s = j["spatial"];
      reject_unknown(s, {"attention", "queries", "joints", "encoder_layers", "decoder_layers",
                         "channels"},
                     "spatial");
      if (s.contains("attention")) {
        const json& a = s["attention"];
        reject_unknown(a, {"d_model", "heads", "levels", "points", "frames", "ffn_width"},
                       "spatial.attention");
        read(a, "d_model", c.spatial.attention.d_model);
        read(a, "heads", c.spatial.attention.heads);
        read(a, "levels", c.spatial.attention.levels);
        read(a, "points", c.spatial.attention.points);
        read(a, "frames", c.spatial.attention.frames);
        read(a, "ffn_width", c.spatial.attention.ffn_width);
      }
      read(s, "queries", c.spatial.queries);
      read(s, "joints", c.spatial.joints);
      read(s, "encoder_layers", c.spatial.encoder_layers);
      read(s, "decoder_layers", c.spatial.decoder_layers);
      read(s, "channels", c.spatial.channels);
    }
    if (j.contains("temporal")) {
      const json& t = j["temporal"];
      reject_unknown(t, {"stpe_layers", "stdme_layers", "stpd_layers", "threshold", "min_keep",
                         "use_stpe", "use_icm", "use_stdme", "use_stpd"},
                     "temporal");
      read(t, "stpe_layers", c.temporal.stpe_layers);
      read(t, "stdme_layers", c.temporal.stdme_layers);
      read(t, "stpd_layers", c.temporal.stpd_layers);
      read(t, "threshold", c.temporal.threshold);
      read(t, "min_keep", c.temporal.min_keep);
      read(t, "use_stpe", c.temporal.use_stpe);
      read(t, "use_icm", c.temporal.use_icm);
      read(t, "use_stdme", c.temporal.use_stdme);
      read(t, "use_stpd", c.temporal.use_stpd);
    }
    if (j.contains("synth")) {
      const json& s = j["synth"];
      reject_unknown(s, {"persons", "speed", "occlusion", "blur", "height", "width", "frames"},
                     "synth");
      read_pair(s, "persons", c.synth.persons);
      read_pair(s, "speed", c.synth.speed);
      read(s, "occlusion", c.synth.occlusion);
      read_pair(s, "blur", c.synth.blur);
      read(s, "height", c.synth.height);
      read(s, "width", c.synth.width);
      read(s, "frames", c.synth.frames);
    }
    if (j.contains("loss")) {
      const json& l = j["loss"];
      reject_unknown(l, {"keypoint", "classification", "instance", "margin"}, "loss");
      read(l, "keypoint", c.loss.keypoint);
      read(l, "classification", c.loss.classification);
      read(l, "instance", c.loss.instance);
      read(l, "margin", c.margin);
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      reject_unknown(o, {"lr", "weight_decay", "beta1", "beta2", "eps", "grad_clip", "batch",
                         "epochs"},
                     "optimizer");
      read(o, "lr", c.optimizer.lr);
      read(o, "weight_decay", c.optimizer.weight_decay);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "eps", c.optimizer.eps);
      read(o, "grad_clip", c.optimizer.grad_clip);
      read(o, "batch", c.optimizer.batch);
      read(o, "epochs", c.optimizer.epochs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void check_reference_defaults() {
  const RunConfig c;
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("default drifted from reference setup: " + what);
  };
  require(c.optimizer.lr == 2e-4, "learning rate 2e-4");
  require(c.optimizer.weight_decay == 1e-4, "weight decay 1e-4");
  require(c.optimizer.batch == 8, "batch size 8");
  require(c.optimizer.epochs == 20, "20 temporal epochs");
  require(c.spatial.attention.frames == 3, "3 frames per clip");
  require(c.spatial.queries == 100, "100 pose queries");
  require(c.spatial.joints == 15, "15 joints");
  require(c.temporal.stpd_layers == 3, "3 decoder layers");
  require(c.temporal.threshold == 0.3, "selection threshold 0.3");
}

}  // namespace vepe
