// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/datagen.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "test_support.h"
#include "vqlm/errors.h"

namespace fs = std::filesystem;

namespace vqlm::datagen {
namespace {

TEST(SynthSource, DeterministicPerSeed) {
  const SourceClip a = synth_source(123, 48, 64, 3);
  const SourceClip b = synth_source(123, 48, 64, 3);
  EXPECT_EQ(a.mos, b.mos);
  EXPECT_EQ(a.clip.source_id, b.clip.source_id);
  ASSERT_EQ(a.clip.frame_count(), 3);
  for (int f = 0; f < 3; ++f) {
    EXPECT_EQ(a.clip.frames[f].data, b.clip.frames[f].data);
  }
  EXPECT_GE(a.mos, 1.5);
  EXPECT_LE(a.mos, 4.8);
}

TEST(SynthSource, DistinctSeedsDistinctSources) {
  const SourceClip a = synth_source(1, 32, 32, 1);
  const SourceClip b = synth_source(2, 32, 32, 1);
  EXPECT_NE(a.clip.source_id, b.clip.source_id);
  EXPECT_NE(a.clip.frames[0].data, b.clip.frames[0].data);
}

TEST(SynthSource, DegenerateSingleFrame) {
  const SourceClip tiny = synth_source(7, 64, 64, 1);
  EXPECT_EQ(tiny.clip.frame_count(), 1);
  tiny.clip.validate();
}

TEST(Distortion, SeverityZeroIsIdentity) {
  const SourceClip src = synth_source(11, 48, 64, 2);
  for (auto kind :
       {DistortionKind::kBlockQuant, DistortionKind::kGaussBlur, DistortionKind::kAddNoise}) {
    const media::VideoClip out = apply_distortion(src.clip, make_tag(kind, 0));
    for (int f = 0; f < 2; ++f) {
      EXPECT_EQ(out.frames[f].data, src.clip.frames[f].data);
    }
    EXPECT_EQ(out.variant, "original");
  }
}

TEST(Distortion, PsnrStrictlyMonotonePerKind) {
  // The dataset-level ladder assumption, verified on textured content.
  for (uint64_t seed : {21, 22, 23}) {
    const SourceClip src = synth_source(seed, 64, 96, 2);
    for (auto kind :
         {DistortionKind::kBlockQuant, DistortionKind::kGaussBlur, DistortionKind::kAddNoise}) {
      double prev = std::numeric_limits<double>::infinity();
      for (int sev = 1; sev <= 20; ++sev) {
        const media::VideoClip variant = apply_distortion(src.clip, make_tag(kind, sev));
        const double p = clip_psnr(src.clip, variant);
        EXPECT_LT(p, prev) << to_string(kind) << " severity " << sev << " seed " << seed;
        prev = p;
      }
    }
  }
}

TEST(Distortion, BlurReducesHighFrequencyEnergy) {
  const SourceClip src = synth_source(31, 64, 96, 1);
  double prev = mean_abs_laplacian(src.clip.frames[0]);
  for (int sev = 1; sev <= 20; ++sev) {
    const media::VideoClip variant =
        apply_distortion(src.clip, make_tag(DistortionKind::kGaussBlur, sev));
    const double e = mean_abs_laplacian(variant.frames[0]);
    EXPECT_LE(e, prev + 1e-9) << "severity " << sev;
    prev = e;
  }
}

TEST(Distortion, UnknownKindRejected) {
  EXPECT_THROW(kind_from_string("vhs"), ConfigError);
  EXPECT_THROW(make_tag(DistortionKind::kGaussBlur, -1), ConfigError);
}

TEST(PseudoMos, FormulaAndEndpoints) {
  EXPECT_NEAR(assign_pseudo_mos(4.2, 0, 20), 4.2, 1e-12);
  EXPECT_NEAR(assign_pseudo_mos(4.2, 20, 20), 1.0, 1e-12);
  EXPECT_NEAR(assign_pseudo_mos(4.0, 10, 20), 2.5, 1e-12);
  EXPECT_THROW(assign_pseudo_mos(4.0, 21, 20), InputError);
  double prev = 3.7;
  for (int sev = 1; sev <= 20; ++sev) {
    const double m = assign_pseudo_mos(3.7, sev, 20);
    EXPECT_LT(m, prev);
    EXPECT_GE(m, 1.0);
    prev = m;
  }
}

TEST(Caption, BandsAndArtifacts) {
  SourceParams params{"warm", "sine grating", "disc", 3, 5.0};
  const std::string excellent = template_caption(params, 4.5, std::nullopt);
  EXPECT_NE(excellent.find("excellent"), std::string::npos);
  EXPECT_NE(excellent.find("no compression artifacts"), std::string::npos);

  const std::string blocky =
      template_caption(params, 1.4, make_tag(DistortionKind::kBlockQuant, 18));
  EXPECT_NE(blocky.find("blocking artifacts"), std::string::npos);
  EXPECT_NE(blocky.find("severe"), std::string::npos);
  EXPECT_NE(blocky.find("bad"), std::string::npos);

  // Deterministic and three sentences.
  EXPECT_EQ(blocky, template_caption(params, 1.4, make_tag(DistortionKind::kBlockQuant, 18)));
  EXPECT_EQ(std::count(blocky.begin(), blocky.end(), '.'), 3);
}

DatagenConfig small_config() {
  DatagenConfig cfg;
  cfg.sources = 4;
  cfg.levels = 5;
  cfg.seed = 99;
  cfg.frame_h = 40;
  cfg.frame_w = 56;
  cfg.frames = 2;
  cfg.train_fraction = 0.75;
  return cfg;
}

TEST(Corpus, CountsSplitAndDeterminism) {
  vqlm::testing::TempDir dir("corpus");
  const DatagenConfig cfg = small_config();
  const DatasetManifest manifest = build_corpus(cfg, dir.str());
  // 4 originals + 4 * 5 variants.
  EXPECT_EQ(manifest.records.size(), 24u);

  std::set<std::string> train_sources, test_sources;
  int originals = 0;
  for (const auto& r : manifest.records) {
    if (r.is_original) ++originals;
    (r.split == "train" ? train_sources : test_sources).insert(r.source_id);
  }
  EXPECT_EQ(originals, 4);
  EXPECT_EQ(train_sources.size(), 3u);
  EXPECT_EQ(test_sources.size(), 1u);
  for (const auto& s : train_sources) EXPECT_FALSE(test_sources.count(s));

  // Same seed, same manifest bytes.
  vqlm::testing::TempDir dir2("corpus2");
  build_corpus(cfg, dir2.str());
  std::ifstream f1((dir.path() / "manifest.jsonl").string());
  std::ifstream f2((dir2.path() / "manifest.jsonl").string());
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  EXPECT_EQ(s1.str(), s2.str());
  EXPECT_FALSE(s1.str().empty());
}

TEST(Corpus, ManifestRoundTripAndClipLoading) {
  vqlm::testing::TempDir dir("corpus_rt");
  const DatasetManifest manifest = build_corpus(small_config(), dir.str());
  const DatasetManifest back = read_manifest((dir.path() / "manifest.jsonl").string());
  ASSERT_EQ(back.records.size(), manifest.records.size());
  for (size_t i = 0; i < back.records.size(); ++i) {
    EXPECT_EQ(back.records[i].clip_path, manifest.records[i].clip_path);
    EXPECT_EQ(back.records[i].mos, manifest.records[i].mos);
    EXPECT_EQ(back.records[i].caption, manifest.records[i].caption);
  }
  const media::VideoClip clip = back.load_clip(1);
  EXPECT_EQ(clip.frame_count(), 2);
  EXPECT_EQ(clip.frames[0].h, 40);
}

TEST(Corpus, ValidateCatchesBrokenLadders) {
  DatasetManifest m;
  m.records.push_back({"a/original", "src", "original", 0, 4.0, true, "cap", "train"});
  m.records.push_back({"a/v1", "src", "gauss_blur", 1, 3.5, false, "cap", "train"});
  m.records.push_back({"a/v2", "src", "gauss_blur", 2, 3.6, false, "cap", "train"});  // rises
  EXPECT_THROW(m.validate(), InputError);

  DatasetManifest orphan;
  orphan.records.push_back({"b/v1", "ghost", "gauss_blur", 1, 3.5, false, "cap", "train"});
  EXPECT_THROW(orphan.validate(), InputError);
}

TEST(ExternalEncoder, HookWiring) {
  vqlm::testing::TempDir dir("hook");
  const SourceClip src = synth_source(55, 32, 32, 2);
  const std::string crf_log = (dir.path() / "crf.txt").string();
  EncoderHook hook;
  hook.command_template = "cp {input}/*.ppm {output}/ && echo {crf} >> " + crf_log;
  const media::VideoClip out =
      apply_external_encoder(src.clip, 31, hook, (dir.path() / "work").string());
  EXPECT_EQ(out.frame_count(), 2);
  EXPECT_EQ(out.frames[0].data, src.clip.frames[0].data);
  std::ifstream log(crf_log);
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, "31");

  EncoderHook off;
  EXPECT_THROW(apply_external_encoder(src.clip, 31, off, dir.str()), ConfigError);
}

}  // namespace
}  // namespace vqlm::datagen
