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

#include <cstdlib>
#include <map>
#include <string_view>

#include "vepe/checkpoint.hpp"
#include "vepe/pipeline.hpp"

namespace vepe {

VepeModel::VepeModel(const RunConfig& cfg) : config(cfg) {
  config.validate();
  Rng rng(config.seed);
  spatial = std::make_unique<SpatialModel>(params, config.spatial, rng);
  temporal = std::make_unique<TemporalModel>(params, config.spatial, config.temporal, rng);
}

void load_checkpoint_prefix(const std::filesystem::path& path, ParameterSet& params,
                            const std::string& prefix) {
  const auto entries = read_checkpoint(path.string());
  std::map<std::string_view, const CheckpointEntry*> by_name;
  for (const CheckpointEntry& e : entries) by_name[e.name] = &e;
  for (auto& p : params.entries()) {
    if (!p.name.starts_with(prefix)) continue;
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw CheckpointError("checkpoint " + path.string() + " lacks parameter " + p.name);
    }
    if (it->second->shape != p.tensor.shape()) {
      throw CheckpointError("checkpoint " + path.string() + ": parameter " + p.name +
                            " has shape " + shape_str(it->second->shape) + ", expected " +
                            shape_str(p.tensor.shape()));
    }
    std::copy(it->second->values.begin(), it->second->values.end(), p.tensor.data_mut().begin());
  }
}

bool deterministic_mode() {
  const char* env = std::getenv("VEPE_DETERMINISTIC");
  return env != nullptr && std::string_view(env) != "" && std::string_view(env) != "0";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "spatial") return TrainMode::kSpatial;
  if (name == "temporal") return TrainMode::kTemporal;
  if (name == "joint") return TrainMode::kJoint;
  throw ConfigError("unknown train mode '" + name + "' (spatial, temporal, joint)");
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSpatial: return "spatial";
    case TrainMode::kTemporal: return "temporal";
    case TrainMode::kJoint: return "joint";
  }
  return "?";
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "spatial") return EvalMode::kSpatial;
  if (name == "temporal") return EvalMode::kTemporal;
  throw ConfigError("unknown eval mode '" + name + "' (spatial, temporal)");
}

}  // namespace vepe
