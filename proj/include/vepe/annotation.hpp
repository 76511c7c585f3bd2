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

#include <cstdint>
#include <vector>

namespace vepe {

struct PersonAnnotation {
  std::int64_t track_id = 0;
  std::vector<double> keypoints;       // K_j (x, y) pairs, normalized
  std::vector<std::uint8_t> visible;   // K_j flags

  std::size_t joints() const { return visible.size(); }
  std::size_t visible_count() const {
    std::size_t n = 0;
    for (std::uint8_t v : visible) n += v != 0;
    return n;
  }
  bool operator==(const PersonAnnotation&) const = default;
};

}  // namespace vepe
