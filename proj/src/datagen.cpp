// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/datagen.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include <json.hpp>

#include "vqlm/errors.h"
#include "vqlm/log.h"

namespace fs = std::filesystem;

namespace vqlm::datagen {

using nlohmann::json;

DistortionKind kind_from_string(const std::string& s) {
  if (s == "block_quant") return DistortionKind::kBlockQuant;
  if (s == "gauss_blur") return DistortionKind::kGaussBlur;
  if (s == "add_noise") return DistortionKind::kAddNoise;
  throw ConfigError("unknown distortion kind '" + s + "'");
}

std::string to_string(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::kBlockQuant:
      return "block_quant";
    case DistortionKind::kGaussBlur:
      return "gauss_blur";
    case DistortionKind::kAddNoise:
      return "add_noise";
  }
  return "?";
}

DistortionTag make_tag(DistortionKind kind, int severity) {
  if (severity < 0) throw ConfigError("severity must be >= 0");
  DistortionTag tag;
  tag.kind = kind;
  tag.severity = severity;
  switch (kind) {
    case DistortionKind::kBlockQuant:
      tag.param = severity == 0 ? 0.0 : 2.0 + 2.5 * severity;  // quant step
      break;
    case DistortionKind::kGaussBlur:
      tag.param = 0.35 * severity;  // sigma
      break;
    case DistortionKind::kAddNoise:
      tag.param = 2.0 * severity;  // std on the 0..255 scale
      break;
  }
  return tag;
}

std::string tag_to_string(const DistortionTag& tag) {
  if (tag.severity == 0) return "original";
  return to_string(tag.kind) + ":" + std::to_string(tag.severity);
}

// ---- procedural sources ----

namespace {

struct Rgb {
  double r, g, b;
};

struct Palette {
  const char* name;
  Rgb a, b, c;
};

constexpr Palette kPalettes[] = {
    {"warm", {235, 140, 60}, {120, 30, 40}, {250, 220, 160}},
    {"cool", {40, 90, 180}, {20, 160, 170}, {210, 230, 250}},
    {"mono", {30, 30, 35}, {200, 200, 210}, {110, 110, 120}},
    {"vivid", {220, 40, 120}, {40, 200, 80}, {240, 230, 60}},
    {"dusk", {70, 40, 110}, {240, 120, 70}, {20, 20, 50}},
};

constexpr const char* kPatterns[] = {"sine grating", "checker weave", "radial ripple"};
constexpr const char* kShapes[] = {"disc", "rectangle", "ring"};

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

SourceClip synth_source(uint64_t seed, int height, int width, int n_frames) {
  if (height < 1 || width < 1 || n_frames < 1) {
    throw ConfigError("synth_source: dims and frame count must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SourceClip out;
  const Palette& pal = kPalettes[rng() % std::size(kPalettes)];
  const int pattern_idx = static_cast<int>(rng() % std::size(kPatterns));
  const int shape_idx = static_cast<int>(rng() % std::size(kShapes));
  out.params.palette = pal.name;
  out.params.pattern = kPatterns[pattern_idx];
  out.params.shape_kind = kShapes[shape_idx];
  out.params.n_shapes = 2 + static_cast<int>(rng() % 3);
  out.params.texture_freq = 3.0 + 9.0 * unit(rng);

  const double grad_angle = 2.0 * M_PI * unit(rng);
  const double tex_angle = 2.0 * M_PI * unit(rng);
  const double tex_amp = 18.0 + 22.0 * unit(rng);
  const double phase_step = 0.4 + 0.5 * unit(rng);

  struct Shape {
    double cy, cx, radius;
    Rgb color;
    double dy, dx;
  };
  std::vector<Shape> shapes;
  for (int i = 0; i < out.params.n_shapes; ++i) {
    Shape s;
    s.cy = unit(rng) * height;
    s.cx = unit(rng) * width;
    s.radius = (0.08 + 0.12 * unit(rng)) * std::min(height, width);
    s.color = i % 2 == 0 ? pal.c : pal.b;
    s.dy = (unit(rng) - 0.5) * 2.0;
    s.dx = (unit(rng) - 0.5) * 2.0;
    shapes.push_back(s);
  }

  out.mos = 1.5 + 3.3 * unit(rng);
  out.clip.source_id = "src_" + std::to_string(seed);
  out.clip.variant = "original";

  const double cg = std::cos(grad_angle), sg = std::sin(grad_angle);
  const double ct = std::cos(tex_angle), st = std::sin(tex_angle);
  const double freq = out.params.texture_freq;

  for (int f = 0; f < n_frames; ++f) {
    ImageU8 img(height, width);
    const double phase = f * phase_step;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double gy = static_cast<double>(y) / height;
        const double gx = static_cast<double>(x) / width;
        const double t = std::clamp(0.5 + 0.5 * (cg * (gx - 0.5) + sg * (gy - 0.5)) * 2.0, 0.0,
                                    1.0);
        double r = pal.a.r + (pal.b.r - pal.a.r) * t;
        double g = pal.a.g + (pal.b.g - pal.a.g) * t;
        double b = pal.a.b + (pal.b.b - pal.a.b) * t;

        double tex = 0.0;
        const double u = ct * gx + st * gy;
        const double v = -st * gx + ct * gy;
        switch (pattern_idx) {
          case 0:
            tex = std::sin(2.0 * M_PI * freq * u + phase);
            break;
          case 1:
            tex = std::sin(2.0 * M_PI * freq * u + phase) *
                  std::sin(2.0 * M_PI * freq * v - phase);
            break;
          default: {
            const double d = std::hypot(gx - 0.5, gy - 0.5);
            tex = std::sin(2.0 * M_PI * freq * d * 2.0 - phase);
            break;
          }
        }
        r += tex_amp * tex;
        g += tex_amp * tex;
        b += tex_amp * tex;

        for (const auto& s : shapes) {
          const double sy = s.cy + s.dy * f;
          const double sx = s.cx + s.dx * f;
          const double d = std::hypot(y - sy, x - sx);
          bool inside = false;
          switch (shape_idx) {
            case 0:
              inside = d <= s.radius;
              break;
            case 1:
              inside = std::abs(y - sy) <= s.radius && std::abs(x - sx) <= s.radius * 1.4;
              break;
            default:
              inside = d <= s.radius && d >= s.radius * 0.55;
              break;
          }
          if (inside) {
            r = 0.25 * r + 0.75 * s.color.r;
            g = 0.25 * g + 0.75 * s.color.g;
            b = 0.25 * b + 0.75 * s.color.b;
          }
        }
        img.at(y, x, 0) = static_cast<uint8_t>(std::clamp(std::lround(r), 0L, 255L));
        img.at(y, x, 1) = static_cast<uint8_t>(std::clamp(std::lround(g), 0L, 255L));
        img.at(y, x, 2) = static_cast<uint8_t>(std::clamp(std::lround(b), 0L, 255L));
      }
    }
    out.clip.frames.push_back(std::move(img));
  }
  return out;
}

// ---- distortions ----

namespace {

// Orthonormal 8x8 DCT-II basis.
const Eigen::Matrix<double, 8, 8>& dct_basis() {
  static const Eigen::Matrix<double, 8, 8> basis = [] {
    Eigen::Matrix<double, 8, 8> m;
    for (int k = 0; k < 8; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) {
        m(k, n) = scale * std::cos(M_PI * (2 * n + 1) * k / 16.0);
      }
    }
    return m;
  }();
  return basis;
}

ImageU8 block_quantize(const ImageU8& img, double step) {
  const auto& dct = dct_basis();
  ImageU8 out = img;
  for (int c = 0; c < 3; ++c) {
    for (int by = 0; by < img.h; by += 8) {
      for (int bx = 0; bx < img.w; bx += 8) {
        Eigen::Matrix<double, 8, 8> blk;
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            const int sy = std::min(by + y, img.h - 1);  // edge replicate
            const int sx = std::min(bx + x, img.w - 1);
            blk(y, x) = img.at(sy, sx, c) - 128.0;
          }
        }
        Eigen::Matrix<double, 8, 8> coeff = dct * blk * dct.transpose();
        coeff = (coeff / step).array().round() * step;
        blk = dct.transpose() * coeff * dct;
        for (int y = 0; y < 8 && by + y < img.h; ++y) {
          for (int x = 0; x < 8 && bx + x < img.w; ++x) {
            out.at(by + y, bx + x, c) =
                static_cast<uint8_t>(std::clamp(std::lround(blk(y, x) + 128.0), 0L, 255L));
          }
        }
      }
    }
  }
  return out;
}

ImageU8 gaussian_blur(const ImageU8& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  auto reflect = [](int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return std::clamp(i, 0, n - 1);
  };

  ImageF tmp(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<size_t>(i + radius)] * img.at(y, reflect(x + i, img.w), c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  ImageU8 out(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<size_t>(i + radius)] * tmp.at(reflect(y + i, img.h), x, c);
        }
        out.at(y, x, c) = static_cast<uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

// Severity-independent unit noise field scaled by std keeps the error ladder
// exactly monotone.
ImageU8 add_noise(const ImageU8& img, double stddev, uint64_t field_seed) {
  std::mt19937_64 rng(field_seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  ImageU8 out(img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const double noisy = img.data[i] + stddev * dist(rng);
    out.data[i] = static_cast<uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
  }
  return out;
}

}  // namespace

media::VideoClip apply_distortion(const media::VideoClip& clip, const DistortionTag& tag) {
  clip.validate();
  media::VideoClip out;
  out.source_id = clip.source_id;
  out.variant = tag_to_string(tag);
  if (tag.severity == 0) {
    out.frames = clip.frames;
    out.variant = "original";
    return out;
  }
  out.frames.reserve(clip.frames.size());
  for (size_t f = 0; f < clip.frames.size(); ++f) {
    switch (tag.kind) {
      case DistortionKind::kBlockQuant:
        out.frames.push_back(block_quantize(clip.frames[f], tag.param));
        break;
      case DistortionKind::kGaussBlur:
        out.frames.push_back(gaussian_blur(clip.frames[f], tag.param));
        break;
      case DistortionKind::kAddNoise:
        out.frames.push_back(
            add_noise(clip.frames[f], tag.param, fnv1a(clip.source_id) + 977 * f));
        break;
    }
  }
  return out;
}

double assign_pseudo_mos(double mos_orig, int severity, int max_severity) {
  if (severity < 0 || severity > max_severity) {
    throw InputError("assign_pseudo_mos: severity out of [0, S]");
  }
  return mos_orig - (static_cast<double>(severity) / max_severity) * (mos_orig - 1.0);
}

std::string template_caption(const SourceParams& params, double mos,
                             const std::optional<DistortionTag>& tag) {
  static const char* kBands[] = {"bad", "poor", "fair", "good", "excellent"};
  const int band = static_cast<int>(std::clamp(std::lround(mos), 1L, 5L));
  std::string s1 = "The video shows a " + params.palette + " " + params.pattern +
                   " backdrop with " + std::to_string(params.n_shapes) + " drifting " +
                   params.shape_kind + " shapes.";
  std::string s2 = "The style is procedurally generated abstract animation.";
  std::string s3 = "The technical quality is " + std::string(kBands[band - 1]);
  if (!tag.has_value() || tag->severity == 0) {
    s3 += " with no compression artifacts.";
  } else {
    const int sev = tag->severity;
    const char* strength = sev <= 5 ? "mild" : sev <= 10 ? "moderate" : sev <= 15 ? "strong"
                                                                                  : "severe";
    std::string artifact;
    switch (tag->kind) {
      case DistortionKind::kBlockQuant:
        artifact = "blocking artifacts";
        break;
      case DistortionKind::kGaussBlur:
        artifact = "blur that softens fine detail";
        break;
      case DistortionKind::kAddNoise:
        artifact = "noise and grain";
        break;
    }
    s3 += " with " + std::string(strength) + " " + artifact + ".";
  }
  return s1 + " " + s2 + " " + s3;
}

double clip_psnr(const media::VideoClip& original, const media::VideoClip& variant) {
  if (original.frame_count() != variant.frame_count()) {
    throw InputError("clip_psnr: frame counts differ");
  }
  double acc = 0.0;
  for (int f = 0; f < original.frame_count(); ++f) {
    acc += psnr(original.frames[static_cast<size_t>(f)], variant.frames[static_cast<size_t>(f)]);
  }
  return acc / original.frame_count();
}

// ---- manifest ----

void DatasetManifest::validate() const {
  std::map<std::string, const ManifestRecord*> originals;
  for (const auto& r : records) {
    if (r.is_original) {
      if (originals.count(r.source_id)) {
        throw InputError("manifest: duplicate original for source " + r.source_id);
      }
      originals[r.source_id] = &r;
    }
  }
  std::map<std::pair<std::string, std::string>, std::map<int, double>> ladders;
  for (const auto& r : records) {
    if (!originals.count(r.source_id)) {
      throw InputError("manifest: variant of unknown source " + r.source_id);
    }
    if (!r.is_original) {
      ladders[{r.source_id, r.kind}][r.severity] = r.mos;
      const auto* orig = originals[r.source_id];
      if (r.split != orig->split) {
        throw InputError("manifest: source " + r.source_id + " leaks across splits");
      }
    }
  }
  for (const auto& [key, ladder] : ladders) {
    double prev = originals[key.first]->mos;
    for (const auto& [sev, mos] : ladder) {  // std::map: ascending severity
      if (mos >= prev) {
        throw InputError("manifest: pseudo-MOS not strictly decreasing for " + key.first + "/" +
                         key.second + " at severity " + std::to_string(sev));
      }
      prev = mos;
    }
  }
}

media::VideoClip DatasetManifest::load_clip(size_t record_index) const {
  const ManifestRecord& r = records.at(record_index);
  const std::string dir = (fs::path(root_dir) / r.clip_path).string();
  return media::read_clip_dir(dir, r.source_id,
                             r.is_original ? "original" : r.kind + ":" + std::to_string(r.severity));
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  for (const auto& r : manifest.records) {
    json j{{"clip_path", r.clip_path}, {"source_id", r.source_id}, {"kind", r.kind},
           {"severity", r.severity},   {"mos", r.mos},             {"is_original", r.is_original},
           {"caption", r.caption},     {"split", r.split}};
    f << j.dump() << "\n";
  }
  if (!f) throw IoError("short write on manifest: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  DatasetManifest m;
  m.root_dir = fs::path(path).parent_path().string();
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("manifest " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    ManifestRecord r;
    r.clip_path = j.at("clip_path").get<std::string>();
    r.source_id = j.at("source_id").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.severity = j.at("severity").get<int>();
    r.mos = j.at("mos").get<double>();
    r.is_original = j.at("is_original").get<bool>();
    r.caption = j.at("caption").get<std::string>();
    r.split = j.at("split").get<std::string>();
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

media::VideoClip apply_external_encoder(const media::VideoClip& clip, int crf,
                                        const EncoderHook& hook, const std::string& work_dir) {
  if (!hook.enabled()) throw ConfigError("external encoder hook not configured");
  const std::string in_dir = (fs::path(work_dir) / "in").string();
  const std::string out_dir = (fs::path(work_dir) / "out").string();
  media::write_clip_dir(in_dir, clip);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::string cmd = hook.command_template;
  auto subst = [&cmd](const std::string& key, const std::string& value) {
    const std::string token = "{" + key + "}";
    for (size_t pos = cmd.find(token); pos != std::string::npos; pos = cmd.find(token, pos)) {
      cmd.replace(pos, token.size(), value);
      pos += value.size();
    }
  };
  subst("input", in_dir);
  subst("crf", std::to_string(crf));
  subst("output", out_dir);
  VQLM_INFO("external encoder: %s", cmd.c_str());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw IoError("external encoder failed (" + std::to_string(rc) + "): " + cmd);
  media::VideoClip out = media::read_clip_dir(out_dir, clip.source_id,
                                              "external_crf:" + std::to_string(crf));
  return out;
}

DatasetManifest build_corpus(const DatagenConfig& cfg, const std::string& out_dir,
                             const EncoderHook& hook) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "clips", ec);
  if (ec) throw IoError("cannot create corpus dir: " + out_dir);

  std::vector<DistortionKind> kinds;
  for (const auto& k : cfg.kinds) kinds.push_back(kind_from_string(k));

  DatasetManifest manifest;
  manifest.root_dir = out_dir;
  std::mt19937_64 seed_rng(cfg.seed);
  const int n_train = std::max(
      1, std::min(cfg.sources - (cfg.sources > 1 ? 1 : 0),
                  static_cast<int>(std::lround(cfg.train_fraction * cfg.sources))));

  for (int s = 0; s < cfg.sources; ++s) {
    const uint64_t source_seed = seed_rng();
    const SourceClip source = synth_source(source_seed, cfg.frame_h, cfg.frame_w, cfg.frames);
    const std::string split = s < n_train ? "train" : "test";
    const std::string src_dir = "clips/" + source.clip.source_id;

    ManifestRecord orig;
    orig.clip_path = src_dir + "/original";
    orig.source_id = source.clip.source_id;
    orig.kind = "original";
    orig.severity = 0;
    orig.mos = source.mos;
    orig.is_original = true;
    orig.caption = template_caption(source.params, source.mos, std::nullopt);
    orig.split = split;
    media::write_clip_dir((fs::path(out_dir) / orig.clip_path).string(), source.clip);
    manifest.records.push_back(orig);

    // One distortion kind per source keeps every ladder strictly ordered;
    // kinds rotate across sources.
    const DistortionKind kind = kinds[static_cast<size_t>(s) % kinds.size()];
    double prev_psnr = std::numeric_limits<double>::infinity();
    for (int sev = 1; sev <= cfg.levels; ++sev) {
      media::VideoClip variant;
      std::string kind_name;
      if (hook.enabled()) {
        const int crf = 13 + 2 * sev;  // severity 1..20 -> CRF 15..53
        variant = apply_external_encoder(
            source.clip, crf, hook,
            (fs::path(out_dir) / "tmp_encode" / source.clip.source_id).string());
        kind_name = "external";
      } else {
        const DistortionTag tag = make_tag(kind, sev);
        variant = apply_distortion(source.clip, tag);
        kind_name = to_string(kind);
        const double p = clip_psnr(source.clip, variant);
        if (p >= prev_psnr) {
          throw NumericError("distortion ladder not monotone for " + source.clip.source_id +
                             " kind " + kind_name + " at severity " + std::to_string(sev));
        }
        prev_psnr = p;
      }
      ManifestRecord rec;
      rec.clip_path = src_dir + "/" + kind_name + "_s" + std::to_string(sev);
      rec.source_id = source.clip.source_id;
      rec.kind = kind_name;
      rec.severity = sev;
      rec.mos = assign_pseudo_mos(source.mos, sev, cfg.levels);
      rec.is_original = false;
      // External variants are codec output; blocking is the honest caption.
      rec.caption = template_caption(
          source.params, rec.mos,
          make_tag(hook.enabled() ? DistortionKind::kBlockQuant : kind, sev));
      rec.split = split;
      media::write_clip_dir((fs::path(out_dir) / rec.clip_path).string(), variant);
      manifest.records.push_back(std::move(rec));
    }
  }
  if (fs::exists(fs::path(out_dir) / "tmp_encode")) {
    fs::remove_all(fs::path(out_dir) / "tmp_encode", ec);
  }
  manifest.validate();
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), manifest);
  return manifest;
}

}  // namespace vqlm::datagen
