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
#include <cstddef>
#include <string_view>
#include <utility>

namespace vepe {

inline constexpr std::size_t kNumJoints = 15;

enum Joint : std::size_t {
  kNose = 0,
  kHeadBottom,
  kHeadTop,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "nose",       "head_bottom", "head_top",   "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist",   "left_hip",
    "right_hip",  "left_knee",   "right_knee", "left_ankle",    "right_ankle"};

inline constexpr std::size_t kNumLimbs = 15;
inline constexpr std::array<std::pair<std::size_t, std::size_t>, kNumLimbs> kLimbs = {{
    {kHeadTop, kNose},
    {kNose, kHeadBottom},
    {kHeadBottom, kLeftShoulder},
    {kHeadBottom, kRightShoulder},
    {kLeftShoulder, kLeftElbow},
    {kLeftElbow, kLeftWrist},
    {kRightShoulder, kRightElbow},
    {kRightElbow, kRightWrist},
    {kLeftShoulder, kLeftHip},
    {kRightShoulder, kRightHip},
    {kLeftHip, kRightHip},
    {kLeftHip, kLeftKnee},
    {kLeftKnee, kLeftAnkle},
    {kRightHip, kRightKnee},
    {kRightKnee, kRightAnkle},
}};

// Standing pose, unit height, centred on the origin, y pointing down.
inline constexpr std::array<std::pair<double, double>, kNumJoints> kCanonicalPose = {{
    {0.0, -0.40},    // nose
    {0.0, -0.30},    // head_bottom
    {0.0, -0.50},    // head_top
    {0.12, -0.27},   // left_shoulder
    {-0.12, -0.27},  // right_shoulder
    {0.17, -0.10},   // left_elbow
    {-0.17, -0.10},  // right_elbow
    {0.20, 0.06},    // left_wrist
    {-0.20, 0.06},   // right_wrist
    {0.08, 0.02},    // left_hip
    {-0.08, 0.02},   // right_hip
    {0.09, 0.25},    // left_knee
    {-0.09, 0.25},   // right_knee
    {0.10, 0.48},    // left_ankle
    {-0.10, 0.48},   // right_ankle
}};

// Report columns, left to right.
struct JointGroup {
  std::string_view name;
  std::array<std::size_t, 3> joints;
  std::size_t count;
};

inline constexpr std::array<JointGroup, 7> kJointGroups = {{
    {"Shoulder", {kLeftShoulder, kRightShoulder, 0}, 2},
    {"Head", {kNose, kHeadBottom, kHeadTop}, 3},
    {"Elbow", {kLeftElbow, kRightElbow, 0}, 2},
    {"Wrist", {kLeftWrist, kRightWrist, 0}, 2},
    {"Hip", {kLeftHip, kRightHip, 0}, 2},
    {"Ankle", {kLeftAnkle, kRightAnkle, 0}, 2},
    {"Knee", {kLeftKnee, kRightKnee, 0}, 2},
}};

}  // namespace vepe
