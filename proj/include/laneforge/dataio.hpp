#pragma once

// Deterministic synthetic lane scenes, tvtLANE-style index ingestion with the
// stride sampling table, geometric augmentation, and binary P6/P5 rasters.

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "laneforge/common.hpp"

namespace laneforge {

// ---------------------------------------------------------------------------
// Images: float planes in [0,1], channel-major (c, y, x)
// ---------------------------------------------------------------------------

struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<float> pix;

  Image() = default;
  Image(int h_, int w_, int c_, float fill = 0.f) : h(h_), w(w_), c(c_), pix((std::size_t)h_ * w_ * c_, fill) {}

  float& at(int cc, int y, int x) { return pix[((std::size_t)cc * h + y) * w + x]; }
  float at(int cc, int y, int x) const { return pix[((std::size_t)cc * h + y) * w + x]; }
  std::size_t size() const { return pix.size(); }

  bool same_bytes(const Image& o) const { return h == o.h && w == o.w && c == o.c && pix == o.pix; }
};

struct Sample {
  std::vector<Image> frames;  // S RGB frames
  Image label;                // binary mask of the last frame
  std::string source_id;
  std::string category = "normal";
};

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

struct LaneCurve {
  double x_bottom = 0;  // lane center at the bottom row, pixels
  double x_top = 0;     // lane center at the top row
  double bow = 0;       // shared-quadratic bend, pixels at mid-height
  double thickness = 2.0;
  bool dashed = false;
  double dash_period = 14, dash_duty = 0.55, dash_phase = 0;
  float r = 0.9f, g = 0.9f, b = 0.8f;
};

struct ShadowQuad {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float darkness = 0.5f;
};

struct OcclusionRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float r = 0.3f, g = 0.3f, b = 0.32f;
};

struct SceneConfig {
  int height = 64, width = 128, frames = 5;
  std::vector<LaneCurve> lanes;
  double brightness = 1.0;
  double noise = 0.02;
  std::vector<ShadowQuad> shadows;
  std::vector<OcclusionRect> occlusions;
  bool blur = false;
  double ego_lateral = 0.0;       // lateral pixels per frame step
  double ego_longitudinal = 0.0;  // dash-phase pixels per frame step
  std::uint64_t seed = 0;
  std::string category = "normal";
};

namespace detail {

// Lane center at row y for a given lateral shift. The shared quadratic bow
// keeps lane ordering intact for every row (differences stay linear in y).
inline double lane_x(const LaneCurve& l, double y, int h, double shift) {
  double u = y / double(h - 1);  // 0 at top, 1 at bottom
  return l.x_top + (l.x_bottom - l.x_top) * u + l.bow * 4.0 * u * (1.0 - u) + shift;
}

inline bool dash_on(const LaneCurve& l, double y, double phase_shift) {
  if (!l.dashed) return true;
  double t = std::fmod(y + l.dash_phase + phase_shift, l.dash_period);
  if (t < 0) t += l.dash_period;
  return t < l.dash_duty * l.dash_period;
}

inline void box_blur3(Image& img) {
  Image src = img;
  for (int c = 0; c < img.c; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        float s = 0.f;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) continue;
            s += src.at(c, yy, xx);
            ++n;
          }
        img.at(c, y, x) = s / (float)n;
      }
}

}  // namespace detail

inline void validate_scene(const SceneConfig& cfg) {
  if (cfg.lanes.size() < 2 || cfg.lanes.size() > 5) throw DataError("scene needs 2..5 lanes");
  for (std::size_t i = 1; i < cfg.lanes.size(); ++i) {
    if (cfg.lanes[i].x_bottom <= cfg.lanes[i - 1].x_bottom + 1.0 ||
        cfg.lanes[i].x_top <= cfg.lanes[i - 1].x_top + 1.0)
      throw DataError("degenerate scene: lanes cross or touch");
  }
}

/// Renders a full S-frame sequence plus the last frame's binary mask.
/// Byte-deterministic in the config (the seed drives the static noise field).
inline Sample generate_sequence(const SceneConfig& cfg) {
  validate_scene(cfg);
  int h = cfg.height, w = cfg.width;

  // Static per-sequence noise so zero ego motion yields identical frames.
  Rng noise_rng(hash_combine(cfg.seed, 0x6e6f6973ULL));
  std::vector<float> noise((std::size_t)3 * h * w);
  for (auto& v : noise) v = (float)(cfg.noise * noise_rng.normal());

  Sample out;
  out.category = cfg.category;
  out.source_id = "synthetic:" + std::to_string(cfg.seed);
  for (int t = 0; t < cfg.frames; ++t) {
    double rel = double(t - (cfg.frames - 1));  // 0 at the labeled last frame
    double shift = cfg.ego_lateral * rel;
    double phase = cfg.ego_longitudinal * rel;

    Image f(h, w, 3);
    for (int y = 0; y < h; ++y) {
      float base = 0.25f + 0.20f * (float)y / (float)(h - 1);
      for (int x = 0; x < w; ++x) {
        std::size_t p = (std::size_t)y * w + x;
        f.at(0, y, x) = base + noise[p];
        f.at(1, y, x) = base + noise[(std::size_t)h * w + p];
        f.at(2, y, x) = base * 0.96f + noise[(std::size_t)2 * h * w + p];
      }
    }
    for (const auto& lane : cfg.lanes) {
      for (int y = 0; y < h; ++y) {
        if (!detail::dash_on(lane, y, phase)) continue;
        double xc = detail::lane_x(lane, y, h, shift);
        double half = lane.thickness / 2.0;
        int x0 = (int)std::floor(xc - half - 1), x1 = (int)std::ceil(xc + half + 1);
        for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) {
          double cov = std::min(1.0, std::max(0.0, half + 0.5 - std::abs(x - xc)));
          if (cov <= 0) continue;
          f.at(0, y, x) = (float)((1 - cov) * f.at(0, y, x) + cov * lane.r);
          f.at(1, y, x) = (float)((1 - cov) * f.at(1, y, x) + cov * lane.g);
          f.at(2, y, x) = (float)((1 - cov) * f.at(2, y, x) + cov * lane.b);
        }
      }
    }
    for (const auto& s : cfg.shadows)
      for (int y = std::max(0, s.y0); y < std::min(h, s.y1); ++y)
        for (int x = std::max(0, s.x0); x < std::min(w, s.x1); ++x)
          for (int c = 0; c < 3; ++c) f.at(c, y, x) *= (1.f - s.darkness);
    for (const auto& o : cfg.occlusions)
      for (int y = std::max(0, o.y0); y < std::min(h, o.y1); ++y)
        for (int x = std::max(0, o.x0); x < std::min(w, o.x1); ++x) {
          f.at(0, y, x) = o.r;
          f.at(1, y, x) = o.g;
          f.at(2, y, x) = o.b;
        }
    if (cfg.brightness != 1.0)
      for (auto& v : f.pix) v = (float)(v * cfg.brightness);
    if (cfg.blur) detail::box_blur3(f);
    for (auto& v : f.pix) v = std::min(1.f, std::max(0.f, v));
    out.frames.push_back(std::move(f));
  }

  // Geometric lane mask of the last frame (occlusions do not erase labels).
  Image label(h, w, 1);
  for (const auto& lane : cfg.lanes) {
    for (int y = 0; y < h; ++y) {
      if (!detail::dash_on(lane, y, 0.0)) continue;
      double xc = detail::lane_x(lane, y, h, 0.0);
      double half = lane.thickness / 2.0;
      for (int x = std::max(0, (int)std::floor(xc - half)); x <= std::min(w - 1, (int)std::ceil(xc + half)); ++x)
        if (std::abs(x - xc) <= half) label.at(0, y, x) = 1.f;
    }
  }
  out.label = std::move(label);
  return out;
}

inline double label_lane_fraction(const Image& label) {
  double s = 0;
  for (float v : label.pix) s += v;
  return s / (double)label.pix.size();
}

// ---------------------------------------------------------------------------
// Scene presets (desk-scale analogs of the challenge categories)
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& scene_presets() {
  static const std::vector<std::string> p = {"normal", "occlude", "shadow", "bright",
                                             "blur",   "curve",   "dirty",  "mix"};
  return p;
}

/// Draws a scene configuration for a preset. Lane geometry is sampled with
/// sorted, gapped endpoints and a shared bow so lanes cannot cross; thickness
/// is rescaled until the label fraction lands in [0.01, 0.08].
inline SceneConfig random_scene(const std::string& preset, int h, int w, int frames, std::uint64_t seed) {
  Rng rng(seed);
  std::string kind = preset;
  if (preset == "mix") {
    static const char* pool[] = {"normal", "normal", "normal", "shadow", "bright", "curve", "blur"};
    kind = pool[rng.uniform_int(0, 6)];
  } else {
    bool known = false;
    for (const auto& p : scene_presets()) known = known || p == kind;
    if (!known) throw ConfigError("unknown scene preset '" + preset + "'");
  }

  SceneConfig cfg;
  cfg.height = h;
  cfg.width = w;
  cfg.frames = frames;
  cfg.seed = seed;
  cfg.category = kind;
  cfg.noise = rng.uniform(0.015, 0.035);
  cfg.ego_lateral = rng.uniform(-0.8, 0.8);
  cfg.ego_longitudinal = rng.uniform(0.5, 2.5);

  int lanes = (int)rng.uniform_int(2, 4);
  double bow = rng.uniform(-0.06, 0.06) * w;
  if (kind == "curve") bow = (rng.uniform(0.0, 1.0) < 0.5 ? -1 : 1) * rng.uniform(0.14, 0.24) * w;
  double margin = 0.08 * w;
  double span = w - 2 * margin;
  double gap_b = span / lanes;
  double base_th = rng.uniform(1.6, 2.6) * (h / 64.0);
  for (int i = 0; i < lanes; ++i) {
    LaneCurve l;
    l.x_bottom = margin + gap_b * (i + 0.5) + rng.uniform(-0.2, 0.2) * gap_b;
    // perspective squeeze toward the top
    double squeeze = rng.uniform(0.55, 0.8);
    double center = w / 2.0 + rng.uniform(-0.05, 0.05) * w;
    l.x_top = center + (l.x_bottom - w / 2.0) * squeeze;
    l.bow = bow;
    l.thickness = base_th;
    l.dashed = rng.uniform(0.0, 1.0) < 0.45;
    l.dash_period = rng.uniform(10.0, 18.0);
    l.dash_duty = rng.uniform(0.45, 0.65);
    l.dash_phase = rng.uniform(0.0, l.dash_period);
    float warm = (float)rng.uniform(0.75, 0.95);
    l.r = warm;
    l.g = warm;
    l.b = warm * (float)rng.uniform(0.82, 1.0);
    cfg.lanes.push_back(l);
  }

  cfg.brightness = rng.uniform(0.9, 1.1);
  if (kind == "bright") cfg.brightness = rng.uniform(1.45, 1.8);
  if (kind == "shadow") {
    int n = (int)rng.uniform_int(2, 3);
    for (int i = 0; i < n; ++i) {
      ShadowQuad s;
      s.x0 = (int)rng.uniform_int(0, w - w / 4);
      s.y0 = (int)rng.uniform_int(0, h - h / 4);
      s.x1 = s.x0 + (int)rng.uniform_int(w / 5, w / 2);
      s.y1 = s.y0 + (int)rng.uniform_int(h / 5, h / 2);
      s.darkness = (float)rng.uniform(0.35, 0.6);
      cfg.shadows.push_back(s);
    }
  }
  if (kind == "occlude") {
    int n = (int)rng.uniform_int(1, 2);
    for (int i = 0; i < n; ++i) {
      OcclusionRect o;
      o.x0 = (int)rng.uniform_int(w / 8, w - w / 3);
      o.y0 = (int)rng.uniform_int(h / 3, h - h / 4);
      o.x1 = o.x0 + (int)rng.uniform_int(w / 8, w / 4);
      o.y1 = o.y0 + (int)rng.uniform_int(h / 8, h / 4);
      float g = (float)rng.uniform(0.15, 0.5);
      o.r = o.g = g;
      o.b = g * 1.05f;
      cfg.occlusions.push_back(o);
    }
  }
  if (kind == "dirty") {
    int n = (int)rng.uniform_int(10, 18);
    for (int i = 0; i < n; ++i) {
      OcclusionRect o;
      o.x0 = (int)rng.uniform_int(0, w - 4);
      o.y0 = (int)rng.uniform_int(0, h - 3);
      o.x1 = o.x0 + (int)rng.uniform_int(2, 5);
      o.y1 = o.y0 + (int)rng.uniform_int(1, 3);
      float g = (float)rng.uniform(0.1, 0.65);
      o.r = o.g = o.b = g;
      cfg.occlusions.push_back(o);
    }
    cfg.noise = rng.uniform(0.04, 0.06);
  }
  if (kind == "blur") {
    cfg.blur = true;
    cfg.noise = rng.uniform(0.03, 0.05);
  }

  // Land the label fraction inside [0.01, 0.08].
  for (int attempt = 0; attempt < 6; ++attempt) {
    double frac = label_lane_fraction(generate_sequence(cfg).label);
    if (frac >= 0.01 && frac <= 0.08) return cfg;
    double target = std::min(0.072, std::max(0.014, frac));
    double scale = frac > 0 ? target / frac : 2.0;
    for (auto& l : cfg.lanes) l.thickness = std::min(6.0, std::max(1.0, l.thickness * scale));
  }
  double frac = label_lane_fraction(generate_sequence(cfg).label);
  if (frac < 0.01 || frac > 0.08) throw DataError("degenerate scene config: lane fraction out of range");
  return cfg;
}

inline std::vector<Sample> make_synthetic_dataset(const std::string& preset, int count, int h, int w,
                                                  int frames, std::uint64_t base_seed) {
  std::vector<Sample> out;
  out.reserve((std::size_t)count);
  for (int i = 0; i < count; ++i) {
    auto cfg = random_scene(preset, h, w, frames, hash_combine(base_seed, (std::uint64_t)i));
    out.push_back(generate_sequence(cfg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Table-style stride sampling
// ---------------------------------------------------------------------------

/// Five 1-based frame indices ending at the labeled frame with a fixed stride:
/// {labeled - 4s, ..., labeled - s, labeled}.
inline std::array<int, 5> sample_frames(int labeled_at, int stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (labeled_at - 4 * stride < 1)
    throw ConfigError("stride " + std::to_string(stride) + " too large for labeled frame " +
                      std::to_string(labeled_at));
  std::array<int, 5> idx;
  for (int k = 0; k < 5; ++k) idx[(std::size_t)k] = labeled_at - (4 - k) * stride;
  return idx;
}

/// Stride-1 windows sliding until the segment is exhausted (challenge-set
/// convention): {1..5}, {2..6}, ...
inline std::vector<std::array<int, 5>> sliding_windows(int segment_len) {
  std::vector<std::array<int, 5>> out;
  for (int start = 1; start + 4 <= segment_len; ++start)
    out.push_back({start, start + 1, start + 2, start + 3, start + 4});
  return out;
}

// ---------------------------------------------------------------------------
// Dataset index files: one record per line, 5 input paths + 1 label path
// ---------------------------------------------------------------------------

struct IndexRecord {
  std::array<std::string, 5> inputs;
  std::string label;
};

struct DatasetIndex {
  std::vector<IndexRecord> records;
  std::string split;
  std::string base_dir;
};

inline DatasetIndex load_index(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open index '" + path + "'");
  DatasetIndex idx;
  idx.base_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  int lineno = 0;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_relative() && !idx.base_dir.empty()) fp = std::filesystem::path(idx.base_dir) / fp;
    return fp.string();
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 6)
      throw DataError("index line " + std::to_string(lineno) + ": expected 6 paths, got " +
                      std::to_string(tok.size()));
    IndexRecord rec;
    for (int k = 0; k < 5; ++k) rec.inputs[(std::size_t)k] = resolve(tok[(std::size_t)k]);
    rec.label = resolve(tok[5]);
    for (int k = 0; k < 5; ++k)
      if (!std::filesystem::exists(rec.inputs[(std::size_t)k]))
        throw DataError("index line " + std::to_string(lineno) + ": missing file " + rec.inputs[(std::size_t)k]);
    if (!std::filesystem::exists(rec.label))
      throw DataError("index line " + std::to_string(lineno) + ": missing file " + rec.label);
    idx.records.push_back(std::move(rec));
  }
  return idx;
}

inline void save_index(const DatasetIndex& idx, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write index '" + path + "'");
  for (const auto& r : idx.records) {
    for (const auto& p : r.inputs) os << p << ' ';
    os << r.label << '\n';
  }
}

// ---------------------------------------------------------------------------
// P6 / P5 rasters
// ---------------------------------------------------------------------------

inline void write_image(const Image& img, const std::string& path) {
  for (float v : img.pix)
    if (v < -1e-6f || v > 1.f + 1e-6f) throw IoError("image values must lie in [0,1] for writing");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << (img.c == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> buf((std::size_t)img.h * img.w * img.c);
  std::size_t i = 0;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.c; ++c)
        buf[i++] = (unsigned char)std::lround(std::min(1.f, std::max(0.f, img.at(c, y, x))) * 255.f);
  os.write(reinterpret_cast<const char*>(buf.data()), (std::streamsize)buf.size());
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline Image read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string magic;
  is >> magic;
  if (magic != "P6" && magic != "P5") throw IoError("bad raster magic in '" + path + "'");
  int w, h, maxval;
  is >> w >> h >> maxval;
  if (!is || w <= 0 || h <= 0) throw IoError("bad raster header in '" + path + "'");
  if (maxval != 255) throw IoError("only maxval 255 rasters are supported");
  is.get();  // single whitespace after header
  int c = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> buf((std::size_t)h * w * c);
  is.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)buf.size());
  if ((std::size_t)is.gcount() != buf.size()) throw IoError("truncated raster payload in '" + path + "'");
  Image img(h, w, c);
  std::size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int cc = 0; cc < c; ++cc) img.at(cc, y, x) = (float)buf[i++] / 255.f;
  return img;
}

/// Binarize a grayscale image in place (labels after interpolation).
inline void binarize(Image& img, float threshold = 0.5f) {
  for (auto& v : img.pix) v = v >= threshold ? 1.f : 0.f;
}

// ---------------------------------------------------------------------------
// Augmentation: the same geometric transform hits every frame and the label
// ---------------------------------------------------------------------------

struct Augment {
  enum class Op { hflip, rotate, crop_resize } op = Op::hflip;
  double angle_deg = 0.0;   // rotate, in [-5, 5]
  double crop_scale = 1.0;  // crop_resize, in (0, 1]
  double anchor_x = 0.5, anchor_y = 0.5;
};

namespace detail {

inline Image hflip_image(const Image& in) {
  Image out(in.h, in.w, in.c);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) out.at(c, y, x) = in.at(c, y, in.w - 1 - x);
  return out;
}

inline float bilinear(const Image& in, int c, double y, double x) {
  if (y < 0 || x < 0 || y > in.h - 1 || x > in.w - 1) return 0.f;
  int y0 = (int)std::floor(y), x0 = (int)std::floor(x);
  int y1 = std::min(y0 + 1, in.h - 1), x1 = std::min(x0 + 1, in.w - 1);
  double fy = y - y0, fx = x - x0;
  return (float)((1 - fy) * ((1 - fx) * in.at(c, y0, x0) + fx * in.at(c, y0, x1)) +
                 fy * ((1 - fx) * in.at(c, y1, x0) + fx * in.at(c, y1, x1)));
}

inline float nearest(const Image& in, int c, double y, double x) {
  int yi = (int)std::lround(y), xi = (int)std::lround(x);
  if (yi < 0 || xi < 0 || yi >= in.h || xi >= in.w) return 0.f;
  return in.at(c, yi, xi);
}

inline Image rotate_image(const Image& in, double deg, bool smooth) {
  if (deg == 0.0) return in;
  Image out(in.h, in.w, in.c);
  double rad = deg * 3.14159265358979323846 / 180.0;
  double cy = (in.h - 1) / 2.0, cx = (in.w - 1) / 2.0;
  double cs = std::cos(rad), sn = std::sin(rad);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) {
        double dy = y - cy, dx = x - cx;
        double sy = cy + (cs * dy - sn * dx);
        double sx = cx + (sn * dy + cs * dx);
        out.at(c, y, x) = smooth ? bilinear(in, c, sy, sx) : nearest(in, c, sy, sx);
      }
  return out;
}

inline Image crop_resize_image(const Image& in, double scale, double ax, double ay, bool smooth) {
  Image out(in.h, in.w, in.c);
  double ch = in.h * scale, cw = in.w * scale;
  double oy = (in.h - ch) * ay, ox = (in.w - cw) * ax;
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) {
        double sy = oy + (ch - 1) * (in.h > 1 ? (double)y / (in.h - 1) : 0);
        double sx = ox + (cw - 1) * (in.w > 1 ? (double)x / (in.w - 1) : 0);
        out.at(c, y, x) = smooth ? bilinear(in, c, sy, sx) : nearest(in, c, sy, sx);
      }
  return out;
}

}  // namespace detail

inline Sample augment(const Sample& s, const Augment& a) {
  Sample out;
  out.source_id = s.source_id;
  out.category = s.category;
  switch (a.op) {
    case Augment::Op::hflip:
      for (const auto& f : s.frames) out.frames.push_back(detail::hflip_image(f));
      out.label = detail::hflip_image(s.label);
      break;
    case Augment::Op::rotate:
      if (a.angle_deg < -5.0 || a.angle_deg > 5.0) throw ConfigError("rotation limited to +-5 degrees");
      for (const auto& f : s.frames) out.frames.push_back(detail::rotate_image(f, a.angle_deg, true));
      out.label = detail::rotate_image(s.label, a.angle_deg, false);
      binarize(out.label);
      break;
    case Augment::Op::crop_resize:
      if (!(a.crop_scale > 0.0 && a.crop_scale <= 1.0)) throw ConfigError("crop scale must lie in (0,1]");
      for (const auto& f : s.frames)
        out.frames.push_back(detail::crop_resize_image(f, a.crop_scale, a.anchor_x, a.anchor_y, true));
      out.label = detail::crop_resize_image(s.label, a.crop_scale, a.anchor_x, a.anchor_y, false);
      binarize(out.label);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Disk round trip
// ---------------------------------------------------------------------------

inline Sample load_sample(const IndexRecord& rec) {
  Sample s;
  for (const auto& p : rec.inputs) {
    Image img = read_image(p);
    if (img.c != 3) throw DataError("input frame '" + p + "' is not RGB");
    s.frames.push_back(std::move(img));
  }
  s.label = read_image(rec.label);
  if (s.label.c != 1) throw DataError("label '" + rec.label + "' is not grayscale");
  binarize(s.label);
  s.source_id = rec.label;
  return s;
}

/// Writes samples as P6/P5 files plus an index; returns the index path.
inline std::string write_dataset(const std::vector<Sample>& samples, const std::string& dir,
                                 const std::string& split) {
  std::filesystem::create_directories(dir);
  DatasetIndex idx;
  idx.split = split;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    IndexRecord rec;
    for (int k = 0; k < 5; ++k) {
      std::string p = dir + "/" + split + "_" + std::to_string(i) + "_f" + std::to_string(k + 1) + ".ppm";
      write_image(samples[i].frames[(std::size_t)k], p);
      rec.inputs[(std::size_t)k] = p;
    }
    rec.label = dir + "/" + split + "_" + std::to_string(i) + "_label.pgm";
    write_image(samples[i].label, rec.label);
    idx.records.push_back(std::move(rec));
  }
  std::string ipath = dir + "/" + split + ".index";
  save_index(idx, ipath);
  return ipath;
}

}  // namespace laneforge
