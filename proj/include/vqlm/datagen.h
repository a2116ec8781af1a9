// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vqlm/config.h"
#include "vqlm/media.h"

namespace vqlm::datagen {

enum class DistortionKind { kBlockQuant, kGaussBlur, kAddNoise };

DistortionKind kind_from_string(const std::string& s);
std::string to_string(DistortionKind kind);

// Severity plays the CRF role: 0 is the identity, higher never means less
// objective distortion.
struct DistortionTag {
  DistortionKind kind = DistortionKind::kGaussBlur;
  int severity = 0;  // 0..max_severity
  double param = 0.0;  // sigma / quant step / noise std, derived from severity
};

DistortionTag make_tag(DistortionKind kind, int severity);
std::string tag_to_string(const DistortionTag& tag);

// Procedural parameters that drive both rendering and captioning.
struct SourceParams {
  std::string palette;
  std::string pattern;
  std::string shape_kind;
  int n_shapes = 0;
  double texture_freq = 0.0;
};

struct SourceClip {
  media::VideoClip clip;
  double mos = 0.0;  // ground-truth MOS in [1.5, 4.8]
  SourceParams params;
};

// Deterministic procedural content: gradient backdrop, sine texture, shapes,
// slight per-frame drift. Same seed, same clip and mos.
SourceClip synth_source(uint64_t seed, int height, int width, int n_frames);

// Deterministic distortion at the tag's severity; severity 0 returns a
// pixel-identical copy.
media::VideoClip apply_distortion(const media::VideoClip& clip, const DistortionTag& tag);

// mos_orig - (severity/S) * (mos_orig - 1): strictly decreasing, pinned to
// [1, mos_orig]. Feeds only the ranking loss; only the ordering matters.
double assign_pseudo_mos(double mos_orig, int severity, int max_severity);

// Three sentences: content, style, technical quality (quality band per the
// 1-5 bad/poor/fair/good/excellent scale, artifact named from the tag).
std::string template_caption(const SourceParams& params, double mos,
                             const std::optional<DistortionTag>& tag);

// Mean over frames of per-frame PSNR against the original.
double clip_psnr(const media::VideoClip& original, const media::VideoClip& variant);

struct ManifestRecord {
  std::string clip_path;  // relative to the manifest's root dir
  std::string source_id;
  std::string kind = "original";  // distortion kind for variants
  int severity = 0;
  double mos = 0.0;  // true MOS for originals, pseudo-MOS for variants
  bool is_original = true;
  std::string caption;
  std::string split = "train";
};

struct DatasetManifest {
  std::string root_dir;
  std::vector<ManifestRecord> records;

  // Referential integrity + pseudo-MOS strictly decreasing per ladder.
  void validate() const;
  media::VideoClip load_clip(size_t record_index) const;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Optional external codec ladder: {input} {crf} {output} placeholders; input
// and output are clip directories of PPM frames.
struct EncoderHook {
  std::string command_template;
  bool enabled() const { return !command_template.empty(); }
};
media::VideoClip apply_external_encoder(const media::VideoClip& clip, int crf,
                                        const EncoderHook& hook, const std::string& work_dir);

// Originals plus full severity ladders, split by source, manifest written to
// <out_dir>/manifest.jsonl. Ladder monotonicity (PSNR strictly decreasing in
// severity) is verified for the synthetic kinds.
DatasetManifest build_corpus(const DatagenConfig& cfg, const std::string& out_dir,
                             const EncoderHook& hook = {});

}  // namespace vqlm::datagen
