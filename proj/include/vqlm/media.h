// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <string>
#include <vector>

#include "vqlm/image.h"

namespace vqlm::media {

// A decoded frame sequence with source metadata and distortion provenance.
// `variant` is "original" or a serialized distortion tag; media never
// interprets it.
struct VideoClip {
  std::vector<ImageU8> frames;
  std::string source_id;
  std::string variant = "original";

  int frame_count() const { return static_cast<int>(frames.size()); }
  void validate() const;  // all frames same shape, at least one frame
};

// Geometry of the two preprocessing pipelines.
struct MediaConfig {
  int key_frames_m = 5;  // M
  int high_h = 448;      // high-level view, aspect ignored
  int high_w = 448;
  int patch_box_h = 540;  // low-level view fits inside this box, aspect kept
  int patch_box_w = 1080;
  int patch_size = 224;  // square patches
  int patches_k = 8;     // K
};

// Per-key-frame pair of (high-level resized image, K low-level patches).
struct FrameBundle {
  std::vector<ImageU8> key_frames;                // M originals
  std::vector<ImageF> high_view;                  // M images, high_h x high_w
  std::vector<std::vector<ImageF>> patch_view;    // M sets of K patches
};

// Uniform sparse sampling: indices floor(i*N/m). Repeats when N < m.
std::vector<int> key_frame_indices(int n_frames, int m);
std::vector<ImageU8> sample_key_frames(const VideoClip& clip, int m);

// Bilinear resize to exactly h_h x w_h (aspect ratio not preserved), values
// scaled to [-1, 1].
ImageF high_level_view(const ImageU8& frame, int h_h, int w_h);

// Chosen grid for K patches: rows*cols == k, minimizing |rows/cols - h/w|,
// ties broken toward more columns.
struct PatchGrid {
  int rows = 0;
  int cols = 0;
};
PatchGrid choose_patch_grid(int k, int h, int w);

// Placement metadata, exposed for tests.
struct PatchLayout {
  PatchGrid grid;
  int resized_h = 0;  // after aspect-preserving fit (and upscale if needed)
  int resized_w = 0;
  bool upscaled = false;
  struct Rect {
    int top, left, size;
  };
  std::vector<Rect> rects;  // k non-overlapping patch rectangles
};
PatchLayout plan_patch_layout(int frame_h, int frame_w, int box_h, int box_w, int patch,
                              int k);

// Aspect-preserving fit into box first (scale = min(box_h/H, box_w/W)), then
// k non-overlapping patch x patch crops on a uniform grid. If the resized
// frame cannot host the grid it is minimally upscaled (logged), never an
// error. Values scaled to [-1, 1].
std::vector<ImageF> patch_view(const ImageU8& frame, int box_h, int box_w, int patch, int k);

// Runs both pipelines over the M key frames.
FrameBundle make_bundle(const VideoClip& clip, const MediaConfig& cfg);

// Clip directory format: frame_0000.ppm, frame_0001.ppm, ...
void write_clip_dir(const std::string& dir, const VideoClip& clip);
VideoClip read_clip_dir(const std::string& dir, const std::string& source_id = "",
                        const std::string& variant = "original");

// Narrow "decode to frames" hook: `command_template` contains {input} and
// {outdir} placeholders; the command must drop frame_*.ppm files into
// {outdir}. Optional; the synthetic path never needs it.
VideoClip decode_with_command(const std::string& command_template, const std::string& input_path,
                              const std::string& work_dir);

}  // namespace vqlm::media
