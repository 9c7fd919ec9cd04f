#include "prunekit/optim.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "prunekit/error.hpp"
#include "prunekit/parallel.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/simd.hpp"

namespace prunekit {

namespace {
constexpr std::uint64_t kMaskStream = 0x6d61736bULL;
constexpr std::uint64_t kOrderStream = 0x6f726472ULL;
}  // namespace

double scheduled_lr(const AdamWConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0) return cfg.lr;
  const double t = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.lr * std::min(t / w, std::sqrt(w / t));
}

OptimizerState::OptimizerState(LayoutPtr layout_in, AdamWConfig hyper_in)
    : m(layout_in->total_size(), 0.0),
      v(layout_in->total_size(), 0.0),
      layout(std::move(layout_in)),
      hyper(hyper_in) {}

void adamw_step(ParamVector& params, const GradVector& grad, OptimizerState& state) {
  require_same_layout(params.layout(), grad.layout(), "adamw_step");
  if (!state.layout) state = OptimizerState(params.layout(), state.hyper);
  require_same_layout(params.layout(), state.layout, "adamw_step state");
  if (!all_finite(grad.values())) throw Error(ErrorCode::NonFiniteGradient, "gradient has non-finite entries");

  const std::size_t t = state.step + 1;
  const auto& h = state.hyper;
  simd::AdamWCoeffs c;
  c.lr = scheduled_lr(h, t);
  c.beta1 = h.beta1;
  c.beta2 = h.beta2;
  c.eps = h.eps;
  c.weight_decay = h.weight_decay;
  c.bias_correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  c.bias_correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  // beta == 0 makes the correction exactly 1; beta == 1 would divide by zero.
  if (c.bias_correction1 == 0.0) c.bias_correction1 = 1.0;
  if (c.bias_correction2 == 0.0) c.bias_correction2 = 1.0;
  simd::active().adamw_update(params.values().data(), state.m.data(), state.v.data(), grad.values().data(),
                              params.size(), c);
  state.step = t;
}

TrainResult train(const std::vector<TokenSequence>& corpus, const ModelConfig& cfg, const TrainOptions& opts) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "training corpus is empty");
  MlmModel model(cfg);
  return train_from(model, init_params(cfg, opts.seed), corpus, {}, opts);
}

TrainResult train_from(const MlmModel& model, ParamVector params, const std::vector<TokenSequence>& corpus,
                       std::span<const std::size_t> ids, const TrainOptions& opts) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "training corpus is empty");
  if (opts.batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  std::vector<std::size_t> order(ids.begin(), ids.end());
  if (order.empty()) {
    order.resize(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  for (const auto i : order) {
    if (i >= corpus.size()) throw Error(ErrorCode::IdNotInCorpus, "training id " + std::to_string(i));
  }

  TrainResult result{std::move(params), {}, 0};
  OptimizerState state(model.layout(), opts.optimizer);
  const std::size_t workers = std::max<std::size_t>(opts.workers, 1);
  std::vector<GradVector> slots(std::min(opts.batch_size, order.size()), GradVector(model.layout()));
  std::vector<double> slot_loss(slots.size());
  GradVector batch_grad(model.layout());

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng order_rng(derive_seed(opts.seed, epoch, kOrderStream));
    order_rng.shuffle(order);
    const std::uint64_t mask_seed = derive_seed(opts.seed, epoch, kMaskStream);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t count = std::min(opts.batch_size, order.size() - start);
      parallel_for(count, workers, [&](std::size_t b, std::size_t) {
        const auto ex = mask_tokens(corpus[order[start + b]], opts.mask_rate, mask_seed);
        slot_loss[b] = model.loss_and_grad(result.params, ex, slots[b]);
      });
      batch_grad.fill(0.0);
      for (std::size_t b = 0; b < count; ++b) {
        simd::axpy(1.0, slots[b].values(), batch_grad.values());
        epoch_loss += slot_loss[b];
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& g : batch_grad.values()) g *= inv;
      adamw_step(result.params, batch_grad, state);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  result.steps = state.step;
  return result;
}

double mean_mlm_loss(const MlmModel& model, const ParamVector& params, const std::vector<TokenSequence>& corpus,
                     std::span<const std::size_t> ids, double mask_rate, std::uint64_t mask_seed) {
  double total = 0.0;
  std::size_t n = 0;
  auto visit = [&](std::size_t i) {
    total += model.forward_loss(params, mask_tokens(corpus.at(i), mask_rate, mask_seed));
    ++n;
  };
  if (ids.empty()) {
    for (std::size_t i = 0; i < corpus.size(); ++i) visit(i);
  } else {
    for (const auto i : ids) visit(i);
  }
  if (n == 0) throw Error(ErrorCode::EmptyCorpus, "no samples to evaluate");
  return total / static_cast<double>(n);
}

}  // namespace prunekit
