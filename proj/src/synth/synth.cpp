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

#include "vepe/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vepe/rng.hpp"
#include "vepe/skeleton.hpp"

namespace vepe {

void SynthConfig::validate() const {
  if (persons.first > persons.second) throw ConfigError("synth config: empty person range");
  if (speed.first < 0.0 || speed.first > speed.second) {
    throw ConfigError("synth config: speed range must be nonempty and nonnegative");
  }
  if (occlusion < 0.0 || occlusion > 1.0) {
    throw ConfigError("synth config: occlusion probability must lie in [0, 1]");
  }
  if (blur.first > blur.second) throw ConfigError("synth config: empty blur range");
  if (height < 16 || width < 16) throw ConfigError("synth config: image smaller than 16x16");
  if (frames == 0) throw ConfigError("synth config: frames must be >= 1");
}

Split parse_split(const std::string& name) {
  if (name == "clean") return Split::kClean;
  if (name == "blur") return Split::kBlur;
  if (name == "occlusion") return Split::kOcclusion;
  if (name == "fast") return Split::kFast;
  throw ConfigError("unknown split '" + name + "' (expected clean, blur, occlusion or fast)");
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kClean: return "clean";
    case Split::kBlur: return "blur";
    case Split::kOcclusion: return "occlusion";
    case Split::kFast: return "fast";
  }
  return "clean";
}

SynthConfig split_config(Split split, const SynthConfig& base) {
  SynthConfig c = base;
  switch (split) {
    case Split::kClean: break;
    case Split::kBlur: c.blur = {1, 2}; break;
    case Split::kOcclusion: c.occlusion = 0.5; break;
    case Split::kFast: c.speed = {0.04, 0.08}; break;
  }
  return c;
}

std::array<double, 3> joint_color(std::size_t joint) {
  static constexpr std::array<std::array<double, 3>, kNumJoints> palette = {{
      {1.00, 1.00, 1.00},  // nose
      {1.00, 1.00, 0.00},  // head_bottom
      {1.00, 0.50, 1.00},  // head_top
      {1.00, 0.00, 0.00},  // left_shoulder
      {0.00, 0.00, 1.00},  // right_shoulder
      {1.00, 0.50, 0.00},  // left_elbow
      {0.00, 0.50, 1.00},  // right_elbow
      {1.00, 0.75, 0.50},  // left_wrist
      {0.50, 0.75, 1.00},  // right_wrist
      {0.75, 0.00, 0.25},  // left_hip
      {0.25, 0.00, 0.75},  // right_hip
      {0.00, 1.00, 0.00},  // left_knee
      {0.00, 1.00, 1.00},  // right_knee
      {0.50, 1.00, 0.25},  // left_ankle
      {0.00, 0.50, 0.50},  // right_ankle
  }};
  return palette.at(joint);
}

namespace {

struct Actor {
  std::int64_t track = 0;
  double cx = 0, cy = 0;              // pixels
  double speed = 0, heading = 0;      // pixels per frame, radians
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // centre domain
  double h = 0;                       // body height in pixels
  double depth = 0;
  double phase = 0, omega = 0, arm_amp = 0, leg_amp = 0;
  std::array<double, 3> color{};
};

std::array<double, 3> hsv(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

// Reflects p into [lo, hi], flipping the velocity sign on each bounce.
void reflect(double& p, double& sign, double lo, double hi) {
  if (hi <= lo) {
    p = lo;
    return;
  }
  for (int guard = 0; guard < 64 && (p < lo || p > hi); ++guard) {
    if (p < lo) p = 2 * lo - p;
    if (p > hi) p = 2 * hi - p;
    sign = -sign;
  }
}

std::pair<double, double> rotate(double x, double y, double a) {
  return {x * std::cos(a) - y * std::sin(a), x * std::sin(a) + y * std::cos(a)};
}

// Joint positions in pixels at frame t.
std::array<std::pair<double, double>, kNumJoints> pose(const Actor& a, std::size_t t) {
  std::array<std::pair<double, double>, kNumJoints> p{};
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    p[j] = {kCanonicalPose[j].first * a.h, kCanonicalPose[j].second * a.h};
  }
  const double s = std::sin(a.phase + a.omega * static_cast<double>(t));
  auto swing = [&](std::size_t root, std::size_t mid, std::size_t tip, double angle) {
    const auto [rx, ry] = p[root];
    const auto m = rotate(p[mid].first - rx, p[mid].second - ry, angle);
    const auto e = rotate(p[tip].first - rx, p[tip].second - ry, angle);
    p[mid] = {rx + m.first, ry + m.second};
    p[tip] = {rx + e.first, ry + e.second};
  };
  swing(kLeftShoulder, kLeftElbow, kLeftWrist, -a.arm_amp * s);
  swing(kRightShoulder, kRightElbow, kRightWrist, -a.arm_amp * s);
  swing(kLeftHip, kLeftKnee, kLeftAnkle, a.leg_amp * s);
  swing(kRightHip, kRightKnee, kRightAnkle, -a.leg_amp * s);
  for (auto& q : p) {
    q.first += a.cx;
    q.second += a.cy;
  }
  return p;
}

double segment_distance(double px, double py, std::pair<double, double> a,
                        std::pair<double, double> b) {
  const double dx = b.first - a.first, dy = b.second - a.second;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a.first) * dx + (py - a.second) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.first + t * dx - px, ey = a.second + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void box_blur(std::vector<double>& img, std::size_t h, std::size_t w, std::size_t r) {
  if (r == 0) return;
  std::vector<double> tmp(img.size());
  const double norm = 1.0 / static_cast<double>(2 * r + 1);
  auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi); };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (long k = -static_cast<long>(r); k <= static_cast<long>(r); ++k) {
          const long xx = clampi(static_cast<long>(x) + k, static_cast<long>(w) - 1);
          s += img[(y * w + static_cast<std::size_t>(xx)) * 3 + c];
        }
        tmp[(y * w + x) * 3 + c] = s * norm;
      }
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (long k = -static_cast<long>(r); k <= static_cast<long>(r); ++k) {
          const long yy = clampi(static_cast<long>(y) + k, static_cast<long>(h) - 1);
          s += tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
        }
        img[(y * w + x) * 3 + c] = s * norm;
      }
    }
  }
}

}  // namespace

VideoClip generate_clip(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double W = static_cast<double>(config.width);
  const double H = static_cast<double>(config.height);
  const std::size_t count =
      config.persons.first + rng.index(config.persons.second - config.persons.first + 1);

  VideoClip clip;
  clip.seed = seed;
  clip.clip_id = "clip-" + std::to_string(seed);

  const std::array<double, 3> bg = {rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35),
                                    rng.uniform(0.05, 0.35)};
  const double gradient = rng.uniform(-0.08, 0.08);
  const double base_hue = rng.uniform();

  const std::size_t cols =
      count == 0 ? 1 : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
  const std::size_t rows = count == 0 ? 1 : (count + cols - 1) / cols;
  const double cell_w = W / static_cast<double>(cols);
  const double cell_h = H / static_cast<double>(rows);
  const double max_h = std::min(cell_h - 4.0, (cell_w - 4.0) / 0.8);

  std::vector<Actor> actors(count);
  for (std::size_t i = 0; i < count; ++i) {
    Actor& a = actors[i];
    a.track = static_cast<std::int64_t>(i) + 1;
    a.h = std::max(4.0, max_h * rng.uniform(0.75, 1.0));
    const bool roamer = rng.bernoulli(config.occlusion);
    const double hw = 0.4 * a.h + 2.0, hh = 0.5 * a.h + 2.0;
    double cx0 = 0, cx1 = W, cy0 = 0, cy1 = H;
    if (!roamer) {
      cx0 = static_cast<double>(i % cols) * cell_w;
      cx1 = cx0 + cell_w;
      cy0 = static_cast<double>(i / cols) * cell_h;
      cy1 = cy0 + cell_h;
    }
    a.x0 = cx0 + hw;
    a.x1 = std::max(a.x0, cx1 - hw);
    a.y0 = cy0 + hh;
    a.y1 = std::max(a.y0, cy1 - hh);
    if (cx1 - hw < a.x0) a.x0 = a.x1 = 0.5 * (cx0 + cx1);
    if (cy1 - hh < a.y0) a.y0 = a.y1 = 0.5 * (cy0 + cy1);
    a.cx = rng.uniform(a.x0, a.x1);
    a.cy = rng.uniform(a.y0, a.y1);
    a.speed = rng.uniform(config.speed.first, config.speed.second) * W;
    a.heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    a.depth = rng.uniform();
    a.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    a.omega = rng.uniform(0.2, 0.6);
    a.arm_amp = rng.uniform(0.1, 0.6);
    a.leg_amp = rng.uniform(0.1, 0.5);
    const double hue = std::fmod(
        base_hue + (static_cast<double>(i) + rng.uniform(-0.2, 0.2)) / static_cast<double>(count) + 1.0,
        1.0);
    a.color = hsv(hue, rng.uniform(0.6, 1.0), rng.uniform(0.7, 1.0));
  }
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return actors[a].depth > actors[b].depth;
  });

  const std::size_t npix = config.height * config.width;
  for (std::size_t t = 0; t < config.frames; ++t) {
    const std::size_t radius =
        config.blur.first + rng.index(config.blur.second - config.blur.first + 1);
    std::vector<double> img(npix * 3);
    for (std::size_t y = 0; y < config.height; ++y) {
      const double shade = gradient * (static_cast<double>(y) / H - 0.5);
      for (std::size_t x = 0; x < config.width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) img[(y * config.width + x) * 3 + c] = bg[c] + shade;
      }
    }
    std::vector<std::array<std::pair<double, double>, kNumJoints>> joints(count);
    std::vector<std::vector<std::uint8_t>> cover(count);
    for (std::size_t rank = 0; rank < count; ++rank) {
      const std::size_t i = order[rank];
      const Actor& a = actors[i];
      joints[i] = pose(a, t);
      const auto& p = joints[i];
      cover[i].assign(npix, 0);
      const double limb_r = std::max(0.6, 0.04 * a.h);
      const double mark_r = std::max(1.3, 0.05 * a.h);
      double bx0 = W, bx1 = 0, by0 = H, by1 = 0;
      for (const auto& q : p) {
        bx0 = std::min(bx0, q.first);
        bx1 = std::max(bx1, q.first);
        by0 = std::min(by0, q.second);
        by1 = std::max(by1, q.second);
      }
      const double pad = mark_r + 2.0;
      const auto ix0 = static_cast<std::size_t>(std::max(0.0, std::floor(bx0 - pad)));
      const auto ix1 = static_cast<std::size_t>(std::min(W - 1, std::ceil(bx1 + pad)));
      const auto iy0 = static_cast<std::size_t>(std::max(0.0, std::floor(by0 - pad)));
      const auto iy1 = static_cast<std::size_t>(std::min(H - 1, std::ceil(by1 + pad)));
      for (std::size_t y = iy0; y <= iy1; ++y) {
        for (std::size_t x = ix0; x <= ix1; ++x) {
          const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
          double alpha = 0;
          for (const auto& [ja, jb] : kLimbs) {
            alpha = std::max(alpha, std::clamp(limb_r + 0.5 - segment_distance(px, py, p[ja], p[jb]), 0.0, 1.0));
          }
          double* dst = &img[(y * config.width + x) * 3];
          for (std::size_t c = 0; c < 3; ++c) dst[c] = (1 - alpha) * dst[c] + alpha * a.color[c];
          double coverage = alpha;
          // Overlapping markers: the pixel belongs to the nearest joint.
          std::size_t nearest = kNumJoints;
          double nearest_d = 0.0;
          for (std::size_t j = 0; j < kNumJoints; ++j) {
            const double d = std::hypot(px - p[j].first, py - p[j].second);
            if (nearest == kNumJoints || d < nearest_d) {
              nearest = j;
              nearest_d = d;
            }
          }
          const double m = std::clamp(mark_r + 0.5 - nearest_d, 0.0, 1.0);
          if (m > 0) {
            const auto jc = joint_color(nearest);
            for (std::size_t c = 0; c < 3; ++c) dst[c] = (1 - m) * dst[c] + m * jc[c];
            coverage = std::max(coverage, m);
          }
          cover[i][y * config.width + x] = coverage >= 0.5;
        }
      }
    }
    box_blur(img, config.height, config.width, radius);
    Tensor frame({config.height, config.width, 3});
    auto f = frame.data_mut();
    for (std::size_t k = 0; k < img.size(); ++k) {
      f[k] = std::round(std::clamp(img[k], 0.0, 1.0) * 255.0) / 255.0;
    }
    clip.frames.push_back(frame);

    std::vector<PersonAnnotation> annots;
    for (std::size_t i = 0; i < count; ++i) {
      PersonAnnotation ann;
      ann.track_id = actors[i].track;
      ann.keypoints.resize(2 * kNumJoints);
      ann.visible.assign(kNumJoints, 1);
      const std::size_t my_rank =
          static_cast<std::size_t>(std::find(order.begin(), order.end(), i) - order.begin());
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        const auto [X, Y] = joints[i][j];
        ann.keypoints[2 * j] = X / W;
        ann.keypoints[2 * j + 1] = Y / H;
        const auto px = static_cast<std::size_t>(std::clamp(std::floor(X), 0.0, W - 1));
        const auto py = static_cast<std::size_t>(std::clamp(std::floor(Y), 0.0, H - 1));
        for (std::size_t r = my_rank + 1; r < count; ++r) {
          if (cover[order[r]][py * config.width + px]) ann.visible[j] = 0;
        }
      }
      annots.push_back(std::move(ann));
    }
    clip.annotations.push_back(std::move(annots));

    for (Actor& a : actors) {
      a.heading += rng.uniform(-0.25, 0.25);
      double sx = 1.0, sy = 1.0;
      double nx = a.cx + a.speed * std::cos(a.heading);
      double ny = a.cy + a.speed * std::sin(a.heading);
      reflect(nx, sx, a.x0, a.x1);
      reflect(ny, sy, a.y0, a.y1);
      if (sx < 0) a.heading = std::numbers::pi - a.heading;
      if (sy < 0) a.heading = -a.heading;
      a.cx = nx;
      a.cy = ny;
    }
  }
  return clip;
}

// ------------------------------------------------------------ file format

namespace {

constexpr const char* kClipHeader = "VEPE-CLIP-1";

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  std::size_t offset() const { return pos_; }

  std::string token() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\n') ++pos_;
    if (start == pos_) throw ClipParseError("expected token", start);
    return s_.substr(start, pos_ - start);
  }

  void expect(const std::string& word) {
    const std::size_t at = pos_;
    std::string got;
    try {
      got = token();
    } catch (const ClipParseError&) {
      throw ClipParseError("expected '" + word + "'", at);
    }
    if (got != word) throw ClipParseError("expected '" + word + "', found '" + got + "'", at);
  }

  void newline() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
    if (pos_ >= s_.size() || s_[pos_] != '\n') throw ClipParseError("expected end of line", pos_);
    ++pos_;
  }

  template <typename T>
  T number() {
    const std::size_t at = pos_;
    const std::string tok = token();
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw ClipParseError("malformed number '" + tok + "'", at);
    }
    return v;
  }

  std::string_view bytes(std::size_t n) {
    if (s_.size() - pos_ < n) {
      throw ClipParseError("payload truncated: need " + std::to_string(n) + " bytes", pos_);
    }
    const std::string_view out(s_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_clip(const VideoClip& clip) {
  std::ostringstream os;
  const std::size_t h = clip.frames.empty() ? 0 : clip.frames[0].dim(0);
  const std::size_t w = clip.frames.empty() ? 0 : clip.frames[0].dim(1);
  std::size_t joints = kNumJoints;
  for (const auto& frame : clip.annotations) {
    if (!frame.empty()) joints = frame.front().joints();
  }
  os << kClipHeader << '\n';
  os << "clip_id " << clip.clip_id << '\n';
  os << "seed " << clip.seed << '\n';
  os << "size " << h << ' ' << w << ' ' << clip.frames.size() << ' ' << joints << '\n';
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const auto& persons = clip.annotations.at(t);
    os << "frame " << t << ' ' << persons.size() << '\n';
    for (const PersonAnnotation& p : persons) {
      if (p.joints() != joints || p.keypoints.size() != 2 * joints) {
        throw ShapeError("encode_clip: inconsistent joint count");
      }
      os << "person " << p.track_id;
      for (double v : p.keypoints) os << ' ' << format_double(v);
      os << ' ';
      for (std::uint8_t v : p.visible) os << (v ? '1' : '0');
      os << '\n';
    }
  }
  const std::size_t nbytes = clip.frames.size() * h * w * 3;
  os << "payload " << nbytes << '\n';
  std::string payload(nbytes, '\0');
  std::size_t k = 0;
  for (const Tensor& f : clip.frames) {
    if (f.dim(0) != h || f.dim(1) != w || f.dim(2) != 3) {
      throw ShapeError("encode_clip: frames differ in shape");
    }
    for (double v : f.data()) {
      payload[k++] = static_cast<char>(
          static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
  }
  os << payload;
  return os.str();
}

VideoClip decode_clip(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.compare(0, std::string(kClipHeader).size(), kClipHeader) != 0) {
    throw ClipParseError(std::string("expected header ") + kClipHeader, 0);
  }
  r.expect(kClipHeader);
  r.newline();
  VideoClip clip;
  r.expect("clip_id");
  clip.clip_id = r.token();
  r.newline();
  r.expect("seed");
  clip.seed = r.number<std::uint64_t>();
  r.newline();
  r.expect("size");
  const auto h = r.number<std::size_t>();
  const auto w = r.number<std::size_t>();
  const auto frames = r.number<std::size_t>();
  const auto joints = r.number<std::size_t>();
  r.newline();
  for (std::size_t t = 0; t < frames; ++t) {
    r.expect("frame");
    const std::size_t at = r.offset();
    if (r.number<std::size_t>() != t) throw ClipParseError("frame index out of order", at);
    const auto persons = r.number<std::size_t>();
    r.newline();
    std::vector<PersonAnnotation> annots(persons);
    for (PersonAnnotation& p : annots) {
      r.expect("person");
      p.track_id = r.number<std::int64_t>();
      p.keypoints.resize(2 * joints);
      for (double& v : p.keypoints) v = r.number<double>();
      const std::size_t vat = r.offset();
      const std::string flags = r.token();
      if (flags.size() != joints ||
          flags.find_first_not_of("01") != std::string::npos) {
        throw ClipParseError("malformed visibility flags '" + flags + "'", vat);
      }
      for (char c : flags) p.visible.push_back(c == '1');
      r.newline();
    }
    clip.annotations.push_back(std::move(annots));
  }
  r.expect("payload");
  const std::size_t at = r.offset();
  const auto nbytes = r.number<std::size_t>();
  if (nbytes != frames * h * w * 3) {
    throw ClipParseError("payload size " + std::to_string(nbytes) + " does not match frames",
                         at);
  }
  r.newline();
  const std::string_view payload = r.bytes(nbytes);
  if (!r.done()) throw ClipParseError("trailing bytes after payload", r.offset());
  std::size_t k = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    Tensor f({h, w, 3});
    for (double& v : f.data_mut()) {
      v = static_cast<double>(static_cast<unsigned char>(payload[k++])) / 255.0;
    }
    clip.frames.push_back(f);
  }
  return clip;
}

void save_clip(const VideoClip& clip, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write clip file " + path.string());
  const std::string bytes = encode_clip(clip);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing clip file " + path.string());
}

VideoClip load_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read clip file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_clip(ss.str());
}

}  // namespace vepe
