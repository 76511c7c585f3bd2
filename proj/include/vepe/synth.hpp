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

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vepe/annotation.hpp"
#include "vepe/tensor.hpp"

namespace vepe {

struct SynthConfig {
  std::pair<std::size_t, std::size_t> persons = {2, 6};
  // Fraction of frame width per frame.
  std::pair<double, double> speed = {0.0, 0.02};
  double occlusion = 0.0;
  // Box blur radius in pixels, drawn per frame.
  std::pair<std::size_t, std::size_t> blur = {0, 0};
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t frames = 8;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

enum class Split { kClean, kBlur, kOcclusion, kFast };

Split parse_split(const std::string& name);
std::string split_name(Split split);
// base with only the field named by the split changed.
SynthConfig split_config(Split split, const SynthConfig& base = {});

struct VideoClip {
  std::vector<Tensor> frames;  // [H x W x 3], multiples of 1/255
  std::vector<std::vector<PersonAnnotation>> annotations;
  std::string clip_id;
  std::uint64_t seed = 0;

  std::size_t size() const { return frames.size(); }
};

VideoClip generate_clip(const SynthConfig& config, std::uint64_t seed);

// RGB colour of the marker drawn at joint j.
std::array<double, 3> joint_color(std::size_t joint);

class ClipParseError : public std::runtime_error {
 public:
  ClipParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

std::string encode_clip(const VideoClip& clip);
VideoClip decode_clip(const std::string& bytes);
void save_clip(const VideoClip& clip, const std::filesystem::path& path);
VideoClip load_clip(const std::filesystem::path& path);

}  // namespace vepe
