// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "gruvd/errors.hpp"
#include "gruvd/random.hpp"

namespace gruvd {

namespace fs = std::filesystem;

std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::kDriftingTexture:
      return "drifting_texture";
    case SceneKind::kMovingShapes:
      return "moving_shapes";
    case SceneKind::kStatic:
      return "static";
  }
  return "static";
}

SceneKind parse_scene_kind(std::string_view s) {
  if (s == "drifting_texture") return SceneKind::kDriftingTexture;
  if (s == "moving_shapes") return SceneKind::kMovingShapes;
  if (s == "static") return SceneKind::kStatic;
  throw ConfigError("unknown scene kind '" + std::string(s) + "'");
}

void SyntheticSceneSpec::validate() const {
  if (frames < 1) throw ConfigError("scene frames must be >= 1, got " + std::to_string(frames));
  if (height < 1 || width < 1) throw ConfigError("scene resolution must be positive");
  if (height > 16384 || width > 16384) throw ConfigError("scene resolution too large");
  if (channels != 1 && channels != 3) {
    throw ConfigError("scene channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (!std::isfinite(motion_px_per_frame) || !std::isfinite(direction_deg)) {
    throw ConfigError("scene motion must be finite");
  }
  if (!(texture_sigma > 0.0) || !std::isfinite(texture_sigma)) {
    throw ConfigError("texture_sigma must be positive");
  }
}

void to_json(nlohmann::json& j, const SyntheticSceneSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"height", s.height},
                     {"width", s.width},
                     {"frames", s.frames},
                     {"channels", s.channels},
                     {"motion_px_per_frame", s.motion_px_per_frame},
                     {"direction_deg", s.direction_deg},
                     {"texture_sigma", s.texture_sigma},
                     {"texture_seed", s.texture_seed}};
}

void from_json(const nlohmann::json& j, SyntheticSceneSpec& s) {
  SyntheticSceneSpec d;
  s.kind = parse_scene_kind(j.value("kind", to_string(d.kind)));
  s.height = j.value("height", d.height);
  s.width = j.value("width", d.width);
  s.frames = j.value("frames", d.frames);
  s.channels = j.value("channels", d.channels);
  s.motion_px_per_frame = j.value("motion_px_per_frame", d.motion_px_per_frame);
  s.direction_deg = j.value("direction_deg", d.direction_deg);
  s.texture_sigma = j.value("texture_sigma", d.texture_sigma);
  s.texture_seed = j.value("texture_seed", d.texture_seed);
  s.validate();
}

// ---------------------------------------------------------------------------
// Scene synthesis

namespace {

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * w + j]; }
};

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + radius];
  }
  for (auto& e : k) e /= total;
  return k;
}

// Separable blur with clamped borders.
Plane blur(const Plane& src, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  Plane tmp{src.h, src.w, std::vector<double>(src.v.size())};
  for (int i = 0; i < src.h; ++i) {
    for (int j = 0; j < src.w; ++j) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * src.at(i, std::clamp(j + t, 0, src.w - 1));
      tmp.at(i, j) = acc;
    }
  }
  Plane out{src.h, src.w, std::vector<double>(src.v.size())};
  for (int i = 0; i < src.h; ++i) {
    for (int j = 0; j < src.w; ++j) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp.at(std::clamp(i + t, 0, src.h - 1), j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

double bilinear(const Plane& p, double y, double x) {
  const double fy0 = std::floor(y);
  const double fx0 = std::floor(x);
  const int y0 = std::clamp(static_cast<int>(fy0), 0, p.h - 1);
  const int x0 = std::clamp(static_cast<int>(fx0), 0, p.w - 1);
  const int y1 = std::min(y0 + 1, p.h - 1);
  const int x1 = std::min(x0 + 1, p.w - 1);
  const double fy = y - fy0;
  const double fx = x - fx0;
  const double top = (1.0 - fx) * p.at(y0, x0) + fx * p.at(y0, x1);
  const double bottom = (1.0 - fx) * p.at(y1, x0) + fx * p.at(y1, x1);
  return (1.0 - fy) * top + fy * bottom;
}

// Band-limited texture planes normalized jointly to [0.05, 0.95].
std::vector<Plane> make_texture(const SyntheticSceneSpec& spec, int h, int w) {
  auto noise_plane = [&](std::uint64_t stream) {
    Plane p{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = rng::normal(spec.texture_seed, stream, i);
    return blur(p, spec.texture_sigma);
  };
  const Plane base = noise_plane(100);
  std::vector<Plane> planes;
  for (int c = 0; c < spec.channels; ++c) {
    if (spec.channels == 1) {
      planes.push_back(base);
      continue;
    }
    Plane own = noise_plane(101 + static_cast<std::uint64_t>(c));
    for (std::size_t i = 0; i < own.v.size(); ++i) own.v[i] = 0.7 * base.v[i] + 0.3 * own.v[i];
    planes.push_back(std::move(own));
  }
  double lo = planes[0].v[0], hi = lo;
  for (const auto& p : planes) {
    const auto [mn, mx] = std::minmax_element(p.v.begin(), p.v.end());
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  for (auto& p : planes) {
    for (auto& e : p.v) e = 0.05 + 0.9 * (e - lo) / span;
  }
  return planes;
}

struct Shape2D {
  bool disc;
  double cy, cx, size, vy, vx;
  std::vector<double> color;
};

}  // namespace

TensorD generate_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  const int T = spec.frames, C = spec.channels, H = spec.height, W = spec.width;
  const bool moving = spec.kind == SceneKind::kDriftingTexture;
  const double travel = moving ? std::abs(spec.motion_px_per_frame) * (T - 1) : 0.0;
  const int margin = static_cast<int>(std::ceil(travel)) + 4;
  const auto texture = make_texture(spec, H + 2 * margin, W + 2 * margin);

  const double theta = spec.direction_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(theta);
  const double dy = std::sin(theta);

  std::vector<Shape2D> shapes;
  if (spec.kind == SceneKind::kMovingShapes) {
    rng::Stream st(spec.texture_seed, 200);
    const int count = 3 + static_cast<int>(st.below(3));
    for (int s = 0; s < count; ++s) {
      Shape2D sh;
      sh.disc = st.below(2) == 0;
      sh.cy = st.next_uniform() * H;
      sh.cx = st.next_uniform() * W;
      sh.size = (0.08 + 0.12 * st.next_uniform()) * std::min(H, W);
      const double ang = st.next_uniform() * 2.0 * std::numbers::pi;
      sh.vy = spec.motion_px_per_frame * std::sin(ang);
      sh.vx = spec.motion_px_per_frame * std::cos(ang);
      const double lum = 0.1 + 0.8 * st.next_uniform();
      for (int c = 0; c < C; ++c) sh.color.push_back(std::clamp(lum + 0.1 * (st.next_uniform() - 0.5), 0.0, 1.0));
      shapes.push_back(std::move(sh));
    }
  }

  std::vector<double> out(static_cast<std::size_t>(T) * C * H * W);
  for (int t = 0; t < T; ++t) {
    const double shift = moving ? spec.motion_px_per_frame * t : 0.0;
    for (int c = 0; c < C; ++c) {
      double* plane = out.data() + (static_cast<std::size_t>(t) * C + c) * H * W;
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          plane[static_cast<std::size_t>(i) * W + j] =
              bilinear(texture[c], margin + i + shift * dy, margin + j + shift * dx);
        }
      }
      for (const auto& sh : shapes) {
        const double cy = sh.cy + sh.vy * t;
        const double cx = sh.cx + sh.vx * t;
        for (int i = 0; i < H; ++i) {
          for (int j = 0; j < W; ++j) {
            const double py = i + 0.5 - cy;
            const double px = j + 0.5 - cx;
            const bool inside = sh.disc ? (py * py + px * px <= sh.size * sh.size)
                                        : (std::abs(py) <= sh.size && std::abs(px) <= sh.size);
            if (inside) plane[static_cast<std::size_t>(i) * W + j] = sh.color[c];
          }
        }
      }
    }
  }
  return TensorD(Shape{static_cast<std::size_t>(T), static_cast<std::size_t>(C),
                       static_cast<std::size_t>(H), static_cast<std::size_t>(W)},
                 std::move(out));
}

// ---------------------------------------------------------------------------
// Batches

TensorD frame_at(const TensorD& sequences, std::size_t t) {
  if (sequences.rank() != 5) {
    throw ShapeError("frame_at expects [B,T,C,H,W], got " + shape_string(sequences.shape()));
  }
  const auto& s = sequences.shape();
  if (t >= s[1]) throw ShapeError("frame index " + std::to_string(t) + " out of range");
  const std::size_t frame = s[2] * s[3] * s[4];
  std::vector<double> out(s[0] * frame);
  const auto v = sequences.data();
  for (std::size_t b = 0; b < s[0]; ++b) {
    std::copy_n(v.begin() + (b * s[1] + t) * frame, frame, out.begin() + b * frame);
  }
  return TensorD(Shape{s[0], s[2], s[3], s[4]}, std::move(out));
}

TensorD sequence_frame(const TensorD& sequence, std::size_t t) {
  if (sequence.rank() != 4) {
    throw ShapeError("sequence_frame expects [T,C,H,W], got " + shape_string(sequence.shape()));
  }
  const auto& s = sequence.shape();
  if (t >= s[0]) throw ShapeError("frame index " + std::to_string(t) + " out of range");
  const std::size_t frame = s[1] * s[2] * s[3];
  const auto v = sequence.data();
  return TensorD(Shape{1, s[1], s[2], s[3]},
                 std::vector<double>(v.begin() + t * frame, v.begin() + (t + 1) * frame));
}

TensorD stack_frames(std::span<const TensorD> frames) {
  if (frames.empty()) throw UsageError("stack_frames of zero frames");
  Shape fs = frames[0].shape();
  if (fs.size() == 4 && fs[0] == 1) fs.erase(fs.begin());
  if (fs.size() != 3) throw ShapeError("stack_frames expects [C,H,W] frames");
  std::vector<double> out;
  out.reserve(frames.size() * shape_numel(fs));
  for (const auto& f : frames) {
    if (f.numel() != shape_numel(fs)) throw ShapeError("stack_frames: inconsistent frame sizes");
    out.insert(out.end(), f.data().begin(), f.data().end());
  }
  Shape s{frames.size()};
  s.insert(s.end(), fs.begin(), fs.end());
  return TensorD(std::move(s), std::move(out));
}

TensorD noise_map(const NoiseParams& params, const TensorD& noisy) {
  if (noisy.rank() != 4) {
    throw ShapeError("noise_map expects [N,C,H,W], got " + shape_string(noisy.shape()));
  }
  const std::size_t N = noisy.dim(0), C = noisy.dim(1), HW = noisy.dim(2) * noisy.dim(3);
  const auto nv = noisy.data();
  std::vector<double> mean_obs(N * HW, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < HW; ++p) mean_obs[n * HW + p] += nv[(n * C + c) * HW + p];
    }
  }
  if (C > 1) {
    for (auto& m : mean_obs) m /= static_cast<double>(C);
  }
  return std_map(params, TensorD(Shape{N, 1, noisy.dim(2), noisy.dim(3)}, std::move(mean_obs)));
}

SequenceBatch make_batch(std::span<const TensorD> scenes, const SensorProfile& profile,
                         const BatchRequest& request) {
  profile.validate();
  if (scenes.empty()) throw ConfigError("make_batch needs at least one scene");
  if (request.batch < 1 || request.crop < 1 || request.seq_len < 1) {
    throw ConfigError("batch, crop and seq_len must be positive");
  }
  const std::size_t C = scenes[0].dim(1);
  for (const auto& s : scenes) {
    if (s.rank() != 4 || s.dim(1) != C) throw ConfigError("scenes must share a channel count");
    if (static_cast<std::size_t>(request.crop) > std::min(s.dim(2), s.dim(3))) {
      throw ConfigError("crop " + std::to_string(request.crop) + " exceeds scene size " +
                        shape_string(s.shape()));
    }
    if (static_cast<std::size_t>(request.seq_len) > s.dim(0)) {
      throw ConfigError("seq_len " + std::to_string(request.seq_len) + " exceeds scene length " +
                        std::to_string(s.dim(0)));
    }
  }
  std::vector<int> isos = request.iso_choices;
  if (isos.empty()) {
    for (const auto& [iso, _] : profile.table) isos.push_back(iso);
  }

  const std::size_t B = static_cast<std::size_t>(request.batch);
  const std::size_t T = static_cast<std::size_t>(request.seq_len);
  const std::size_t P = static_cast<std::size_t>(request.crop);
  const std::size_t frame = C * P * P;

  SequenceBatch batch;
  std::vector<double> clean(B * T * frame), noisy(B * T * frame), delta(B * T * P * P);
  for (std::size_t e = 0; e < B; ++e) {
    rng::Stream st(request.seed, e);
    const TensorD& scene = scenes[st.below(scenes.size())];
    const std::size_t t0 = st.below(scene.dim(0) - T + 1);
    const std::size_t y0 = st.below(scene.dim(2) - P + 1);
    const std::size_t x0 = st.below(scene.dim(3) - P + 1);
    const NoiseParams params = lookup_iso(profile, isos[st.below(isos.size())]);
    batch.params.push_back(params);

    const std::size_t H = scene.dim(2), W = scene.dim(3);
    const auto sv = scene.data();
    std::vector<double> crop(T * frame);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < P; ++i) {
          const double* src = sv.data() + (((t0 + t) * C + c) * H + y0 + i) * W + x0;
          std::copy_n(src, P, crop.data() + ((t * C + c) * P + i) * P);
        }
      }
    }
    const TensorD clean_e(Shape{T, C, P, P}, crop);
    const TensorD noisy_e = add_noise(params, clean_e, rng::hash(request.seed, e, 0x6e6f697365ULL),
                                      {profile.signal_min, profile.signal_max, false});
    std::copy(crop.begin(), crop.end(), clean.begin() + e * T * frame);
    std::copy(noisy_e.data().begin(), noisy_e.data().end(), noisy.begin() + e * T * frame);

    const TensorD d = noise_map(params, noisy_e);
    std::copy(d.data().begin(), d.data().end(), delta.begin() + e * T * P * P);
  }
  batch.clean = TensorD(Shape{B, T, C, P, P}, std::move(clean));
  batch.noisy = TensorD(Shape{B, T, C, P, P}, std::move(noisy));
  batch.delta = TensorD(Shape{B, T, 1, P, P}, std::move(delta));
  return batch;
}

SyntheticProvider::SyntheticProvider(std::vector<TensorD> scenes, SensorProfile profile,
                                     BatchRequest request)
    : scenes_(std::move(scenes)), profile_(std::move(profile)), request_(std::move(request)) {
  // Surface configuration errors at construction rather than mid-training.
  BatchRequest probe = request_;
  probe.batch = 1;
  make_batch(scenes_, profile_, probe);
}

std::optional<SequenceBatch> SyntheticProvider::batch_for_epoch(std::int64_t epoch) {
  BatchRequest r = request_;
  r.seed = rng::hash(request_.seed, 0x65706f6368ULL, static_cast<std::uint64_t>(epoch));
  return make_batch(scenes_, profile_, r);
}

std::optional<SequenceBatch> FixedProvider::batch_for_epoch(std::int64_t epoch) {
  if (epoch < 0 || static_cast<std::size_t>(epoch) >= batches_.size()) return std::nullopt;
  return batches_[static_cast<std::size_t>(epoch)];
}

// ---------------------------------------------------------------------------
// Files

std::uint32_t quantize(double v, std::uint32_t maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint32_t>(std::floor(c * maxval + 0.5));
}

namespace {

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_all(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

class PnmHeaderReader {
 public:
  PnmHeaderReader(const std::vector<char>& bytes, const fs::path& path)
      : bytes_(bytes), path_(path) {}

  std::size_t pos() const { return pos_; }

  // Skips whitespace and comments, then parses a decimal field.
  std::uint64_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(bytes_[pos_] - '0');
      if (v > (1ULL << 32)) fail(std::string(what) + " overflow", start);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what, start);
    return v;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("expected whitespace before raster", pos_);
    }
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t offset) const {
    throw ParseError(path_.string() + ": " + msg + " at offset " + std::to_string(offset));
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 2;
};

void put_u32le(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32le(const std::vector<char>& b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + i])) << (8 * i);
  return v;
}

}  // namespace

void write_frame(const fs::path& path, const TensorD& frame, int bits) {
  Shape s = frame.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() == 2) s.insert(s.begin(), 1);
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) {
    throw ShapeError("write_frame expects [C,H,W] with C in {1,3}, got " +
                     shape_string(frame.shape()));
  }
  if (bits != 8 && bits != 16) throw ConfigError("frame bit depth must be 8 or 16");
  const std::size_t C = s[0], H = s[1], W = s[2];
  const std::uint32_t maxval = bits == 8 ? 255 : 65535;
  const std::string header = std::string(C == 1 ? "P5" : "P6") + "\n" + std::to_string(W) + " " +
                             std::to_string(H) + "\n" + std::to_string(maxval) + "\n";
  std::vector<char> bytes(header.begin(), header.end());
  const auto v = frame.data();
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::uint32_t q = quantize(v[(c * H + i) * W + j], maxval);
        if (bits == 16) bytes.push_back(static_cast<char>(q >> 8));
        bytes.push_back(static_cast<char>(q & 0xFF));
      }
    }
  }
  write_all(path, bytes);
}

TensorD read_frame(const fs::path& path) {
  const auto bytes = read_all(path);
  PnmHeaderReader hdr(bytes, path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    hdr.fail("malformed magic (expected P5 or P6)", 0);
  }
  const std::size_t C = bytes[1] == '5' ? 1 : 3;
  const std::uint64_t W = hdr.number("width");
  const std::uint64_t H = hdr.number("height");
  const std::size_t maxval_off = hdr.pos();
  const std::uint64_t maxval = hdr.number("maxval");
  if (W == 0 || H == 0) hdr.fail("zero dimension", maxval_off);
  if (W * H > (1ULL << 28)) hdr.fail("dimension overflow", maxval_off);
  if (maxval == 0 || maxval > 65535) hdr.fail("maxval out of range", maxval_off);
  hdr.single_whitespace();
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t data_off = hdr.pos();
  const std::size_t needed = static_cast<std::size_t>(W * H) * C * sample_bytes;
  if (bytes.size() - data_off < needed) hdr.fail("truncated raster", bytes.size());

  std::vector<double> out(static_cast<std::size_t>(W * H) * C);
  std::size_t p = data_off;
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      for (std::size_t c = 0; c < C; ++c) {
        std::uint32_t q = static_cast<unsigned char>(bytes[p++]);
        if (sample_bytes == 2) q = (q << 8) | static_cast<unsigned char>(bytes[p++]);
        out[(c * H + i) * W + j] = static_cast<double>(q) / static_cast<double>(maxval);
      }
    }
  }
  return TensorD(Shape{C, static_cast<std::size_t>(H), static_cast<std::size_t>(W)}, std::move(out));
}

void write_sequence(const fs::path& path, const TensorD& sequence) {
  if (sequence.rank() != 4) {
    throw ShapeError("write_sequence expects [T,C,H,W], got " + shape_string(sequence.shape()));
  }
  std::vector<char> bytes{'G', 'V', 'S', 'Q'};
  for (auto d : sequence.shape()) put_u32le(bytes, static_cast<std::uint32_t>(d));
  bytes.reserve(bytes.size() + 2 * sequence.numel());
  for (double v : sequence.data()) {
    const std::uint32_t q = quantize(v, 65535);
    bytes.push_back(static_cast<char>(q & 0xFF));
    bytes.push_back(static_cast<char>(q >> 8));
  }
  write_all(path, bytes);
}

TensorD read_sequence(const fs::path& path) {
  const auto bytes = read_all(path);
  auto fail = [&](const std::string& msg, std::size_t off) {
    throw ParseError(path.string() + ": " + msg + " at offset " + std::to_string(off));
  };
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "GVSQ") {
    fail("malformed magic (expected GVSQ)", 0);
  }
  if (bytes.size() < 20) fail("truncated header", bytes.size());
  Shape s(4);
  std::uint64_t numel = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    s[i] = get_u32le(bytes, 4 + 4 * i);
    if (s[i] == 0) fail("zero dimension", 4 + 4 * i);
    numel *= s[i];
    if (numel > (1ULL << 32)) fail("dimension overflow", 4 + 4 * i);
  }
  if (bytes.size() - 20 < 2 * numel) fail("truncated samples", bytes.size());
  std::vector<double> out(numel);
  for (std::size_t i = 0; i < numel; ++i) {
    const std::uint32_t q = static_cast<unsigned char>(bytes[20 + 2 * i]) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[21 + 2 * i])) << 8);
    out[i] = static_cast<double>(q) / 65535.0;
  }
  return TensorD(std::move(s), std::move(out));
}

// ---------------------------------------------------------------------------
// Manifests

void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = nlohmann::json{{"scene", e.scene}, {"iso", e.iso}, {"seed", e.seed}, {"file", e.file}};
}

void from_json(const nlohmann::json& j, ManifestEntry& e) {
  e.scene = j.at("scene").get<SyntheticSceneSpec>();
  e.iso = j.value("iso", 1600);
  e.seed = j.value("seed", std::uint64_t{0});
  e.file = j.value("file", std::string());
}

void to_json(nlohmann::json& j, const Manifest& m) {
  j = nlohmann::json{{"profile", m.profile}, {"sequences", m.sequences}};
}

void from_json(const nlohmann::json& j, Manifest& m) {
  m.profile = j.contains("profile") ? j.at("profile").get<SensorProfile>() : default_profile();
  m.sequences = j.at("sequences").get<std::vector<ManifestEntry>>();
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j.get<Manifest>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << nlohmann::json(m).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Manifest synthesize_dataset(const fs::path& out_dir, Manifest manifest) {
  manifest.profile.validate();
  for (const auto& e : manifest.sequences) e.scene.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < manifest.sequences.size(); ++i) {
    auto& e = manifest.sequences[i];
    if (e.file.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "seq_%04zu.gvsq", i);
      e.file = name;
    }
    write_sequence(out_dir / e.file, generate_scene(e.scene));
  }
  write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

std::vector<TensorD> load_clean_sequences(const fs::path& manifest_path, const Manifest& manifest) {
  std::vector<TensorD> out;
  const fs::path base = manifest_path.parent_path();
  for (const auto& e : manifest.sequences) {
    if (e.file.empty()) throw ConfigError("manifest entry without a file");
    out.push_back(read_sequence(base / e.file));
  }
  return out;
}

}  // namespace gruvd
