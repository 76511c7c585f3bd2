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

#pragma once

#include <string>
#include <vector>

#include "vepe/params.hpp"

namespace vepe {

// On-disk layout:
//   VEPE-CKPT-1\n
//   params <count>\n
//   <name> <rank> <d0> ... <dn>\n      one line per parameter
//   data\n
//   raw little-endian float64 payloads, manifest order, no padding
inline constexpr const char* kCheckpointMagic = "VEPE-CKPT-1";

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ParameterSet& params);
// Every parameter in `params` must be present with an identical shape.
void load_checkpoint(const std::string& path, ParameterSet& params);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

}  // namespace vepe
