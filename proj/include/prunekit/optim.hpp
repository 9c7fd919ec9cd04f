#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prunekit/model.hpp"
#include "prunekit/params.hpp"
#include "prunekit/seqio.hpp"

namespace prunekit {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 2000;
};

/// Linear warmup then inverse-square-root decay:
/// lr * min(step / warmup, sqrt(warmup / step)) for step >= 1.
/// With warmup_steps == 0 the rate is constant.
double scheduled_lr(const AdamWConfig& cfg, std::size_t step);

struct OptimizerState {
  OptimizerState() = default;
  OptimizerState(LayoutPtr layout, AdamWConfig hyper);

  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  LayoutPtr layout;
  AdamWConfig hyper;
};

/// One decoupled-weight-decay Adam update with the scheduled rate for step+1.
/// Throws NonFiniteGradient (state untouched) and ShapeError.
void adamw_step(ParamVector& params, const GradVector& grad, OptimizerState& state);

struct TrainOptions {
  AdamWConfig optimizer;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double mask_rate = 0.15;
  std::size_t workers = 1;
};

struct TrainResult {
  ParamVector params;
  std::vector<double> epoch_losses;  // mean per-sample loss seen during each epoch
  std::size_t steps = 0;
};

/// Masked-LM training from init_params(cfg, opts.seed). EmptyCorpus on an empty corpus.
TrainResult train(const std::vector<TokenSequence>& corpus, const ModelConfig& cfg, const TrainOptions& opts);

/// Masked-LM training starting from `params`, restricted to the corpus
/// indices in `ids` (all samples when ids is empty). Each epoch draws fresh
/// masks and a fresh visiting order from (opts.seed, epoch). Batch gradients
/// are reduced in sample order, so results do not depend on opts.workers.
TrainResult train_from(const MlmModel& model, ParamVector params, const std::vector<TokenSequence>& corpus,
                       std::span<const std::size_t> ids, const TrainOptions& opts);

/// Mean masked-LM loss over `ids` (all when empty) with masks from mask_seed.
double mean_mlm_loss(const MlmModel& model, const ParamVector& params, const std::vector<TokenSequence>& corpus,
                     std::span<const std::size_t> ids, double mask_rate, std::uint64_t mask_seed);

}  // namespace prunekit
