// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "vqlm/errors.h"
#include "vqlm/log.h"
#include "vqlm/tokenizer.h"

namespace vqlm::training {

using nn::Matrix;
using nn::Tensor;

double loss_rank(const std::vector<RankSample>& batch, double margin) {
  if (batch.empty()) throw InputError("loss_rank: empty batch");
  double acc = 0.0;
  for (const auto& s : batch) {
    acc += std::max(0.0, -(s.q1 - s.q2) * (s.q1_hat - s.q2_hat) + margin);
  }
  return acc / static_cast<double>(batch.size());
}

double loss_mse(const std::vector<MseSample>& batch) {
  if (batch.empty()) throw InputError("loss_mse: empty batch");
  double acc = 0.0;
  int n = 0;
  for (const auto& s : batch) {
    if (s.first_is_original) {
      const double d = s.q1 - s.q1_hat;
      acc += d * d;
      ++n;
    }
  }
  return acc / static_cast<double>(std::max(n, 1));
}

double loss_text(const std::vector<TextSample>& batch, bool* clamped) {
  if (batch.empty()) throw InputError("loss_text: empty batch");
  double acc = 0.0;
  int64_t total_tokens = 0;
  for (const auto& s : batch) {
    if (s.token_probs.empty()) throw InputError("loss_text: empty target sequence");
    total_tokens += static_cast<int64_t>(s.token_probs.size());
    for (double p : s.token_probs) {
      if (p < kTextProbEpsilon) {
        if (clamped) *clamped = true;
        p = kTextProbEpsilon;
      }
      acc -= std::log(p);
    }
  }
  return acc / static_cast<double>(total_tokens);
}

double total_loss(double l1, double l2, double l3, double w1, double w2, double w3) {
  if (w1 < 0 || w2 < 0 || w3 < 0) throw InputError("total_loss: weights must be non-negative");
  return w1 * l1 + w2 * l2 + w3 * l3;
}

// ---- batch assembly ----

DatasetIndex DatasetIndex::build(const datagen::DatasetManifest& manifest,
                                 const std::string& split) {
  DatasetIndex index;
  index.manifest = &manifest;
  std::map<std::string, size_t> by_source;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (split != "all" && r.split != split) continue;
    auto it = by_source.find(r.source_id);
    if (it == by_source.end()) {
      it = by_source.emplace(r.source_id, index.sources.size()).first;
      index.sources.push_back({r.source_id, -1, {}});
    }
    Source& src = index.sources[it->second];
    if (r.is_original) {
      src.original = static_cast<int>(i);
    } else {
      src.variants_by_severity.push_back(static_cast<int>(i));
    }
  }
  for (auto& src : index.sources) {
    std::sort(src.variants_by_severity.begin(), src.variants_by_severity.end(),
              [&](int a, int b) {
                return manifest.records[static_cast<size_t>(a)].severity <
                       manifest.records[static_cast<size_t>(b)].severity;
              });
    if (src.original < 0) {
      throw InputError("dataset index: source " + src.id + " lacks an original");
    }
  }
  if (index.sources.empty()) throw InputError("dataset index: split '" + split + "' is empty");
  return index;
}

int DatasetIndex::record_count() const {
  int n = 0;
  for (const auto& s : sources) n += 1 + static_cast<int>(s.variants_by_severity.size());
  return n;
}

namespace {

std::vector<int> caption_target_ids(const std::string& caption) {
  std::vector<int> ids = ByteTokenizer::encode(caption);
  ids.push_back(ByteTokenizer::kEos);
  return ids;
}

}  // namespace

std::vector<QualityPair> assemble_batch(const DatasetIndex& index, int batch_size, double mix,
                                        std::mt19937_64& rng) {
  if (batch_size < 1) throw InputError("assemble_batch: batch_size must be >= 1");
  const auto& records = index.manifest->records;
  const int n_pairwise = static_cast<int>(std::lround(mix * batch_size));
  std::uniform_int_distribution<size_t> src_dist(0, index.sources.size() - 1);

  std::vector<QualityPair> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int slot = 0; slot < batch_size; ++slot) {
    QualityPair qp;
    if (slot < n_pairwise) {
      // Same-source pair with distinct severities (original counts as
      // severity 0); slot order randomized.
      for (int attempt = 0;; ++attempt) {
        const auto& src = index.sources[src_dist(rng)];
        std::vector<int> pool = src.variants_by_severity;
        pool.push_back(src.original);
        if (pool.size() < 2) {
          VQLM_WARN("source %s has a single variant; resampling", src.id.c_str());
          if (attempt > 256) {
            throw InputError("assemble_batch: no source offers two variants");
          }
          continue;
        }
        std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
        const size_t ia = pick(rng);
        size_t ib = pick(rng);
        while (records[static_cast<size_t>(pool[ib])].severity ==
               records[static_cast<size_t>(pool[ia])].severity) {
          ib = pick(rng);
        }
        qp.record_a = pool[ia];
        qp.record_b = pool[ib];
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5) {
          std::swap(qp.record_a, qp.record_b);
        }
        qp.kind = PairKind::kPairwise;
        break;
      }
    } else {
      const auto& src = index.sources[src_dist(rng)];
      qp.record_a = src.original;
      qp.record_b = src.original;
      qp.kind = PairKind::kSingle;
    }
    const auto& ra = records[static_cast<size_t>(qp.record_a)];
    const auto& rb = records[static_cast<size_t>(qp.record_b)];
    qp.q_a = ra.mos;
    qp.q_b = rb.mos;
    qp.a_is_original = ra.is_original;
    qp.caption_target = caption_target_ids(ra.caption);
    batch.push_back(std::move(qp));
  }
  return batch;
}

// ---- trainer ----

void apply_trainability(nn::ParamStore& params, const TrainingConfig& cfg) {
  using encoders::FreezeMode;
  auto encoder_trainable = [](FreezeMode mode, bool is_proj) {
    switch (mode) {
      case FreezeMode::kFrozen:
        return false;
      case FreezeMode::kHead:
        return is_proj;
      case FreezeMode::kAll:
        return true;
    }
    return true;
  };
  for (int i = 0; i < params.size(); ++i) {
    nn::Param& p = params.at(i);
    switch (p.group) {
      case nn::ParamGroup::kEncoderHighBackbone:
        p.trainable = encoder_trainable(cfg.freeze_high, false);
        break;
      case nn::ParamGroup::kEncoderHighProj:
        p.trainable = encoder_trainable(cfg.freeze_high, true);
        break;
      case nn::ParamGroup::kEncoderLowBackbone:
        p.trainable = encoder_trainable(cfg.freeze_low, false);
        break;
      case nn::ParamGroup::kEncoderLowProj:
        p.trainable = encoder_trainable(cfg.freeze_low, true);
        break;
      case nn::ParamGroup::kDecoderBase:
        p.trainable = cfg.decoder_mode == DecoderTrainMode::kFull;
        break;
      case nn::ParamGroup::kDecoderLora:
        p.trainable = cfg.decoder_mode != DecoderTrainMode::kFrozen;
        break;
      case nn::ParamGroup::kQualityHead:
        p.trainable = true;
        break;
    }
  }
}

Trainer::Trainer(Model& model, const AppConfig& cfg, const datagen::DatasetManifest& manifest)
    : model_(&model),
      cfg_(cfg),
      manifest_(&manifest),
      train_index_(DatasetIndex::build(manifest, "train")),
      adam_(cfg.training.learning_rate),
      rng_(cfg.training.seed),
      bundles_(manifest.records.size()) {
  cfg_.training.validate();
  apply_trainability(model_->params(), cfg_.training);
  prompt_ids_ = {ByteTokenizer::kBos};
  const auto body = ByteTokenizer::encode(cfg_.training.prompt);
  prompt_ids_.insert(prompt_ids_.end(), body.begin(), body.end());
}

const media::FrameBundle& Trainer::bundle_for(int record_index) {
  auto& slot = bundles_[static_cast<size_t>(record_index)];
  if (!slot.has_value()) {
    slot = media::make_bundle(manifest_->load_clip(static_cast<size_t>(record_index)),
                              model_->config().media);
  }
  return *slot;
}

double Trainer::score_record(int record_index) {
  return model_->score_bundle(bundle_for(record_index)).raw;
}

Trainer::SampleLossResult Trainer::sample_loss(nn::Tape& tape, const QualityPair& sample,
                                               int batch_size, int mse_denom, int text_denom) {
  const TrainingConfig& tc = cfg_.training;
  const bool single = sample.kind == PairKind::kSingle;

  auto pairs_a = encoders::encode_video(tape, model_->encoder_high(), model_->encoder_low(),
                                        bundle_for(sample.record_a),
                                        model_->config().media.patches_k);
  const Tensor q_a_hat = model_->head().score_video(tape, pairs_a);

  decltype(pairs_a) pairs_b;
  Tensor q_b_hat;
  if (!single) {
    pairs_b = encoders::encode_video(tape, model_->encoder_high(), model_->encoder_low(),
                                     bundle_for(sample.record_b),
                                     model_->config().media.patches_k);
    q_b_hat = model_->head().score_video(tape, pairs_b);
  }

  SampleLossResult result;
  std::vector<Tensor> terms;

  // Eq. 1 contribution: hinge / B. Singles have q1 == q2, identically zero.
  if (!single && tc.loss_w1 > 0.0) {
    const Tensor pred_diff = nn::sub(q_a_hat, q_b_hat);
    Tensor hinge = nn::scale(pred_diff, -(sample.q_a - sample.q_b));
    if (tc.margin != 0.0) {
      hinge = nn::add(hinge, Tensor::scalar(tc.margin));
    }
    hinge = nn::relu(hinge);
    result.hinge = hinge.item();
    terms.push_back(nn::scale(hinge, tc.loss_w1 / batch_size));
  }

  // Eq. 2 contribution: indicator on the first slot only.
  if (sample.a_is_original && tc.loss_w2 > 0.0) {
    const Tensor err = nn::sub(Tensor::scalar(sample.q_a), q_a_hat);
    const Tensor sq = nn::square(err);
    result.sq = sq.item();
    terms.push_back(nn::scale(sq, tc.loss_w2 / mse_denom));
  }

  // Eq. 3 contribution: cross-entropy over the first video's caption.
  if (tc.loss_w3 > 0.0) {
    std::vector<encoders::EmbeddingSequence> visuals;
    visuals.reserve(pairs_a.size() * 4);
    auto append_video = [&visuals](const decltype(pairs_a)& pairs, bool padding) {
      for (const auto& [u, v] : pairs) {
        encoders::EmbeddingSequence cu = u;
        encoders::EmbeddingSequence cv = v;
        cu.is_padding = padding;
        cv.is_padding = padding;
        visuals.push_back(std::move(cu));
        visuals.push_back(std::move(cv));
      }
    };
    append_video(pairs_a, false);
    // Case II reuses the first video's blocks as masked padding.
    append_video(single ? pairs_a : pairs_b, single);

    const decoder::PrefixSequence seq = model_->lm().build_prefix_sequence(
        tape, visuals, prompt_ids_, sample.caption_target);
    const Tensor hidden = model_->lm().forward_hidden(tape, seq.embeddings, seq.mask_bias);
    // Row prefix_len-1 predicts the first target token.
    const Tensor logits =
        model_->lm().logits_rows(tape, hidden, seq.prefix_len - 1, seq.target_len);
    const Tensor logp = nn::log_softmax_rows(logits);
    bool clamped = false;
    const Tensor nll = nn::pick_nll(logp, sample.caption_target,
                                    -std::log(kTextProbEpsilon), &clamped);
    result.text_clamped = clamped;
    result.nll = nll.item();
    result.n_text_tokens = static_cast<int>(sample.caption_target.size());
    terms.push_back(nn::scale(nll, tc.loss_w3 / text_denom));
  }

  if (terms.empty()) {
    result.loss = Tensor::scalar(0.0);
  } else {
    result.loss = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) result.loss = nn::add(result.loss, terms[i]);
  }
  return result;
}

StepStats Trainer::compute_gradients(const std::vector<QualityPair>& batch) {
  const TrainingConfig& tc = cfg_.training;
  const int batch_size = static_cast<int>(batch.size());
  int n_orig = 0;
  int text_tokens = 0;
  for (const auto& s : batch) {
    if (s.a_is_original) ++n_orig;
    text_tokens += static_cast<int>(s.caption_target.size());
  }
  const int mse_denom = std::max(n_orig, 1);
  const int text_denom = std::max(text_tokens, 1);

  // Pre-warm bundle cache on the main thread; workers then only read.
  for (const auto& s : batch) {
    bundle_for(s.record_a);
    bundle_for(s.record_b);
  }

  const int workers = std::max(1, std::min(tc.workers, batch_size));
  std::vector<nn::Tape> tapes;
  tapes.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) tapes.emplace_back(model_->params());

  struct WorkerOut {
    double hinge = 0, sq = 0, nll = 0;
    bool clamped = false;
    std::vector<std::string> offenders;
  };
  std::vector<WorkerOut> outs(static_cast<size_t>(workers));

  auto run_range = [&](int w, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const QualityPair& s = batch[static_cast<size_t>(i)];
      SampleLossResult r = sample_loss(tapes[static_cast<size_t>(w)], s, batch_size, mse_denom,
                                       text_denom);
      const double value = r.loss.item();
      if (!std::isfinite(value)) {
        outs[static_cast<size_t>(w)].offenders.push_back(
            manifest_->records[static_cast<size_t>(s.record_a)].clip_path);
        continue;
      }
      nn::backward(r.loss);
      outs[static_cast<size_t>(w)].hinge += r.hinge;
      outs[static_cast<size_t>(w)].sq += r.sq;
      outs[static_cast<size_t>(w)].nll += r.nll;
      outs[static_cast<size_t>(w)].clamped |= r.text_clamped;
    }
  };

  if (workers == 1) {
    run_range(0, 0, batch_size);
  } else {
    std::vector<std::thread> threads;
    const int per = (batch_size + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int begin = w * per;
      const int end = std::min(batch_size, begin + per);
      if (begin >= end) break;
      threads.emplace_back(run_range, w, begin, end);
    }
    for (auto& t : threads) t.join();
  }

  // Deterministic reduction: worker order is fixed by the static partition.
  model_->params().zero_grads();
  std::vector<Matrix> sink(static_cast<size_t>(model_->params().size()));
  for (const auto& tape : tapes) tape.collect(sink);
  for (int i = 0; i < model_->params().size(); ++i) {
    if (sink[static_cast<size_t>(i)].size() != 0) {
      model_->params().at(i).grad = sink[static_cast<size_t>(i)];
    }
  }

  StepStats stats;
  stats.step = step_;
  stats.lr = adam_.lr();
  double hinge = 0, sq = 0, nll = 0;
  for (const auto& o : outs) {
    hinge += o.hinge;
    sq += o.sq;
    nll += o.nll;
    stats.text_clamped |= o.clamped;
    stats.offenders.insert(stats.offenders.end(), o.offenders.begin(), o.offenders.end());
  }
  stats.l1 = hinge / batch_size;
  stats.l2 = sq / mse_denom;
  stats.l3 = tc.loss_w3 > 0.0 ? nll / text_denom : 0.0;
  stats.total = total_loss(stats.l1, stats.l2, stats.l3, tc.loss_w1, tc.loss_w2, tc.loss_w3);
  stats.non_finite = !stats.offenders.empty() || !std::isfinite(stats.total);
  return stats;
}

StepStats Trainer::step() {
  const std::vector<QualityPair> batch =
      assemble_batch(train_index_, cfg_.training.batch_size, cfg_.training.single_pair_mix, rng_);
  StepStats stats = compute_gradients(batch);
  ++step_;
  stats.step = step_;
  if (stats.non_finite) {
    VQLM_ERROR("step %d: non-finite loss, update skipped", step_);
    return stats;
  }
  adam_.step(model_->params());
  return stats;
}

void Trainer::train(const std::string& log_path) {
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::app);
    if (!log) throw IoError("cannot open training log: " + log_path);
    log << "step,l1,l2,l3,total,lr\n";
  }
  for (int s = 0; s < cfg_.training.steps; ++s) {
    const StepStats stats = step();
    if (stats.non_finite) {
      std::string ids;
      for (const auto& o : stats.offenders) ids += (ids.empty() ? "" : ", ") + o;
      throw NumericError("non-finite loss at step " + std::to_string(stats.step) +
                         " (samples: " + ids + ")");
    }
    if (!log_path.empty()) {
      log << stats.step << "," << stats.l1 << "," << stats.l2 << "," << stats.l3 << ","
          << stats.total << "," << stats.lr << "\n";
      log.flush();
    }
    if (cfg_.training.log_every > 0 && stats.step % cfg_.training.log_every == 0) {
      VQLM_INFO("step %d: l1=%.4f l2=%.4f l3=%.4f total=%.4f", stats.step, stats.l1, stats.l2,
                stats.l3, stats.total);
    }
  }
}

}  // namespace vqlm::training
