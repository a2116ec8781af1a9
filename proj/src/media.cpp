// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/media.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "vqlm/errors.h"
#include "vqlm/log.h"

namespace fs = std::filesystem;

namespace vqlm::media {

void VideoClip::validate() const {
  if (frames.empty()) throw InputError("clip '" + source_id + "' has no frames");
  const int h = frames[0].h;
  const int w = frames[0].w;
  for (const auto& f : frames) {
    if (f.h != h || f.w != w) {
      throw InputError("clip '" + source_id + "' mixes frame shapes");
    }
  }
}

std::vector<int> key_frame_indices(int n_frames, int m) {
  if (n_frames < 1) throw InputError("key_frame_indices: empty clip");
  if (m < 1) throw InputError("key_frame_indices: m must be positive");
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) {
    idx[i] = static_cast<int>((static_cast<int64_t>(i) * n_frames) / m);
  }
  return idx;
}

std::vector<ImageU8> sample_key_frames(const VideoClip& clip, int m) {
  clip.validate();
  std::vector<ImageU8> out;
  out.reserve(m);
  for (int i : key_frame_indices(clip.frame_count(), m)) {
    out.push_back(clip.frames[i]);
  }
  return out;
}

ImageF high_level_view(const ImageU8& frame, int h_h, int w_h) {
  if (frame.empty()) throw InputError("high_level_view: empty frame");
  if (h_h <= 0 || w_h <= 0) throw ConfigError("high_level_view: non-positive target dims");
  return resize_bilinear(to_signed_unit(frame), h_h, w_h);
}

PatchGrid choose_patch_grid(int k, int h, int w) {
  if (k < 1) throw ConfigError("choose_patch_grid: k must be positive");
  const double target = static_cast<double>(h) / static_cast<double>(w);
  PatchGrid best;
  double best_score = 0.0;
  for (int rows = 1; rows <= k; ++rows) {
    if (k % rows != 0) continue;
    const int cols = k / rows;
    const double score = std::abs(static_cast<double>(rows) / cols - target);
    const bool better =
        best.rows == 0 || score < best_score - 1e-12 ||
        (std::abs(score - best_score) <= 1e-12 && cols > best.cols);
    if (better) {
      best = {rows, cols};
      best_score = score;
    }
  }
  return best;
}

PatchLayout plan_patch_layout(int frame_h, int frame_w, int box_h, int box_w, int patch, int k) {
  if (patch > box_h || patch > box_w) {
    throw ConfigError("patch size exceeds the fitting box");
  }
  // scale = min(box_h/H, box_w/W); the limiting dimension lands on the box
  // exactly, the other rounds.
  PatchLayout layout;
  const double sh = static_cast<double>(box_h) / frame_h;
  const double sw = static_cast<double>(box_w) / frame_w;
  if (sh <= sw) {
    layout.resized_h = box_h;
    layout.resized_w = std::max(
        1, static_cast<int>(std::lround(static_cast<double>(box_h) * frame_w / frame_h)));
  } else {
    layout.resized_w = box_w;
    layout.resized_h = std::max(
        1, static_cast<int>(std::lround(static_cast<double>(box_w) * frame_h / frame_w)));
  }
  layout.grid = choose_patch_grid(k, layout.resized_h, layout.resized_w);

  const int need_h = layout.grid.rows * patch;
  const int need_w = layout.grid.cols * patch;
  if (layout.resized_h < need_h || layout.resized_w < need_w) {
    const double up = std::max(static_cast<double>(need_h) / layout.resized_h,
                               static_cast<double>(need_w) / layout.resized_w);
    layout.resized_h = std::max(need_h, static_cast<int>(std::ceil(layout.resized_h * up)));
    layout.resized_w = std::max(need_w, static_cast<int>(std::ceil(layout.resized_w * up)));
    layout.upscaled = true;
  }

  // Patches centered in a rows x cols cell partition. Cell extent >= patch,
  // so consecutive tops differ by at least `patch`.
  const int r = layout.grid.rows;
  const int c = layout.grid.cols;
  layout.rects.reserve(k);
  for (int i = 0; i < r; ++i) {
    const double cy = (i + 0.5) * layout.resized_h / r;
    int top = static_cast<int>(std::lround(cy - patch / 2.0));
    top = std::clamp(top, 0, layout.resized_h - patch);
    for (int j = 0; j < c; ++j) {
      const double cx = (j + 0.5) * layout.resized_w / c;
      int left = static_cast<int>(std::lround(cx - patch / 2.0));
      left = std::clamp(left, 0, layout.resized_w - patch);
      layout.rects.push_back({top, left, patch});
    }
  }
  return layout;
}

std::vector<ImageF> patch_view(const ImageU8& frame, int box_h, int box_w, int patch, int k) {
  if (frame.empty()) throw InputError("patch_view: empty frame");
  const PatchLayout layout = plan_patch_layout(frame.h, frame.w, box_h, box_w, patch, k);
  if (layout.upscaled) {
    VQLM_DEBUG("patch_view: %dx%d frame upscaled to %dx%d to host a %dx%d grid of %d px patches",
               frame.h, frame.w, layout.resized_h, layout.resized_w, layout.grid.rows,
               layout.grid.cols, patch);
  }
  const ImageF resized = resize_bilinear(to_signed_unit(frame), layout.resized_h, layout.resized_w);
  std::vector<ImageF> patches;
  patches.reserve(k);
  for (const auto& rect : layout.rects) {
    ImageF p(patch, patch);
    for (int y = 0; y < patch; ++y) {
      for (int x = 0; x < patch; ++x) {
        for (int c = 0; c < 3; ++c) {
          p.at(y, x, c) = resized.at(rect.top + y, rect.left + x, c);
        }
      }
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

FrameBundle make_bundle(const VideoClip& clip, const MediaConfig& cfg) {
  FrameBundle bundle;
  bundle.key_frames = sample_key_frames(clip, cfg.key_frames_m);
  bundle.high_view.reserve(bundle.key_frames.size());
  bundle.patch_view.reserve(bundle.key_frames.size());
  for (const auto& frame : bundle.key_frames) {
    bundle.high_view.push_back(high_level_view(frame, cfg.high_h, cfg.high_w));
    bundle.patch_view.push_back(
        patch_view(frame, cfg.patch_box_h, cfg.patch_box_w, cfg.patch_size, cfg.patches_k));
  }
  return bundle;
}

namespace {
std::string frame_file(const std::string& dir, int i) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%04d.ppm", i);
  return (fs::path(dir) / name).string();
}
}  // namespace

void write_clip_dir(const std::string& dir, const VideoClip& clip) {
  clip.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create clip dir: " + dir);
  for (int i = 0; i < clip.frame_count(); ++i) {
    write_ppm(frame_file(dir, i), clip.frames[i]);
  }
}

VideoClip read_clip_dir(const std::string& dir, const std::string& source_id,
                        const std::string& variant) {
  VideoClip clip;
  clip.source_id = source_id.empty() ? fs::path(dir).filename().string() : source_id;
  clip.variant = variant;
  for (int i = 0;; ++i) {
    const std::string path = frame_file(dir, i);
    if (!fs::exists(path)) break;
    clip.frames.push_back(read_ppm(path));
  }
  if (clip.frames.empty()) throw IoError("no frame_*.ppm files in " + dir);
  clip.validate();
  return clip;
}

namespace {
std::string substitute(std::string tpl, const std::string& key, const std::string& value) {
  const std::string token = "{" + key + "}";
  for (size_t pos = tpl.find(token); pos != std::string::npos; pos = tpl.find(token, pos)) {
    tpl.replace(pos, token.size(), value);
    pos += value.size();
  }
  return tpl;
}
}  // namespace

VideoClip decode_with_command(const std::string& command_template, const std::string& input_path,
                              const std::string& work_dir) {
  if (!fs::exists(input_path)) throw IoError("decode input missing: " + input_path);
  std::error_code ec;
  fs::create_directories(work_dir, ec);
  if (ec) throw IoError("cannot create decode work dir: " + work_dir);
  std::string cmd = substitute(command_template, "input", input_path);
  cmd = substitute(cmd, "outdir", work_dir);
  VQLM_INFO("decoding via: %s", cmd.c_str());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw IoError("decode command failed (" + std::to_string(rc) + "): " + cmd);
  return read_clip_dir(work_dir, fs::path(input_path).stem().string());
}

}  // namespace vqlm::media
