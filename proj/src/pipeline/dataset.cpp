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
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "vepe/pipeline.hpp"

namespace vepe {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t clip_seed(std::uint64_t base, std::size_t index) { return mix_seed(base, index); }

std::size_t Dataset::frame_count() const {
  std::size_t n = 0;
  for (const VideoClip& c : clips) n += c.size();
  return n;
}

std::vector<ManifestEntry> generate_dataset(const std::filesystem::path& dir,
                                            const SynthConfig& base,
                                            const std::vector<Split>& splits,
                                            std::size_t count, std::uint64_t seed) {
  if (splits.empty()) throw ConfigError("generate: at least one split is required");
  base.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("generate: cannot create " + dir.string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  json clips = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const Split split = splits[i % splits.size()];
    ManifestEntry e;
    std::ostringstream name;
    name << "clip-" << std::setw(6) << std::setfill('0') << i << ".vclip";
    e.file = name.str();
    e.seed = clip_seed(seed, i);
    e.split = split_name(split);
    save_clip(generate_clip(split_config(split, base), e.seed), dir / e.file);
    clips.push_back({{"file", e.file}, {"seed", e.seed}, {"split", e.split}});
    entries.push_back(e);
  }
  json manifest = {{"format", "VEPE-MANIFEST-1"},
                   {"seed", seed},
                   {"count", count},
                   {"synth",
                    {{"persons", {base.persons.first, base.persons.second}},
                     {"speed", {base.speed.first, base.speed.second}},
                     {"occlusion", base.occlusion},
                     {"blur", {base.blur.first, base.blur.second}},
                     {"height", base.height},
                     {"width", base.width},
                     {"frames", base.frames}}},
                   {"clips", clips}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("generate: cannot write " + (dir / "manifest.json").string());
  return entries;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("no manifest at " + path.string());
  json manifest;
  try {
    manifest = json::parse(in);
    if (manifest.at("format") != "VEPE-MANIFEST-1") {
      throw std::runtime_error("unsupported manifest format in " + path.string());
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
  }
  Dataset data;
  for (const json& c : manifest.at("clips")) {
    ManifestEntry e{c.at("file").get<std::string>(), c.at("seed").get<std::uint64_t>(),
                    c.at("split").get<std::string>()};
    data.clips.push_back(load_clip(dir / e.file));
    data.entries.push_back(std::move(e));
  }
  return data;
}

}  // namespace vepe
