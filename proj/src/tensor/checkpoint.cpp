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

#include "vepe/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vepe {
namespace {

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i]))
            << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

std::string read_line(const std::string& bytes, std::size_t& pos) {
  const std::size_t end = bytes.find('\n', pos);
  if (end == std::string::npos) {
    throw CheckpointError("checkpoint: unterminated line at byte " +
                          std::to_string(pos));
  }
  std::string line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::string out = std::string(kCheckpointMagic) + "\n";
  out += "params " + std::to_string(entries.size()) + "\n";
  for (const auto& e : entries) {
    out += e.name + " " + std::to_string(e.shape.size());
    for (std::size_t d : e.shape) out += " " + std::to_string(d);
    out += "\n";
  }
  out += "data\n";
  for (const auto& e : entries) {
    for (double v : e.values) put_f64(out, v);
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  if (read_line(bytes, pos) != kCheckpointMagic) {
    throw CheckpointError(std::string("checkpoint: expected header ") +
                          kCheckpointMagic);
  }
  std::istringstream count_line(read_line(bytes, pos));
  std::string tag;
  std::size_t count = 0;
  if (!(count_line >> tag >> count) || tag != "params") {
    throw CheckpointError("checkpoint: bad parameter count line");
  }
  std::vector<CheckpointEntry> entries(count);
  std::size_t total = 0;
  for (auto& e : entries) {
    std::istringstream ls(read_line(bytes, pos));
    std::size_t rank = 0;
    if (!(ls >> e.name >> rank)) throw CheckpointError("checkpoint: bad manifest line");
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!(ls >> d)) throw CheckpointError("checkpoint: bad shape for " + e.name);
    }
    total += shape_numel(e.shape);
  }
  if (read_line(bytes, pos) != "data") {
    throw CheckpointError("checkpoint: missing data marker");
  }
  if (bytes.size() - pos != total * 8) {
    throw CheckpointError("checkpoint: payload holds " +
                          std::to_string(bytes.size() - pos) + " bytes, manifest needs " +
                          std::to_string(total * 8));
  }
  for (auto& e : entries) {
    e.values.resize(shape_numel(e.shape));
    for (double& v : e.values) {
      v = get_f64(bytes, pos);
      pos += 8;
    }
  }
  return entries;
}

void save_checkpoint(const std::string& path, const ParameterSet& params) {
  std::vector<CheckpointEntry> entries;
  for (const auto& p : params.entries()) {
    entries.push_back({p.name, p.tensor.shape(),
                       std::vector<double>(p.tensor.data().begin(),
                                           p.tensor.data().end())});
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("checkpoint: cannot write " + path);
  const std::string bytes = encode_checkpoint(entries);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

void load_checkpoint(const std::string& path, ParameterSet& params) {
  const auto entries = read_checkpoint(path);
  for (auto& p : params.entries()) {
    const CheckpointEntry* found = nullptr;
    for (const auto& e : entries) {
      if (e.name == p.name) found = &e;
    }
    if (!found) throw CheckpointError("checkpoint: missing parameter " + p.name);
    if (found->shape != p.tensor.shape()) {
      throw CheckpointError("checkpoint: shape mismatch for " + p.name + ": " +
                            shape_str(found->shape) + " vs " +
                            shape_str(p.tensor.shape()));
    }
    std::copy(found->values.begin(), found->values.end(),
              p.tensor.data_mut().begin());
  }
}

}  // namespace vepe
