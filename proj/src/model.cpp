#include "prunekit/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/simd.hpp"

namespace prunekit {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) fail("init_scale must be a finite value >= 0");
  if (kind == ModelKind::MlmTiny) {
    if (vocab_size <= kFirstSymbolId) fail("vocab_size must exceed the 3 special tokens");
    if (embed_dim == 0 || hidden_dim == 0) fail("embed_dim and hidden_dim must be >= 1");
    if (context_window == 0 || context_window % 2 == 0) fail("context_window must be odd and >= 1");
  } else {
    if (n_classes < 2) fail("probe needs at least 2 classes");
    if (kmer == 0) fail("kmer must be >= 1");
    if (probe_features() == 0) fail("probe needs at least one feature");
    if (!(l2_reg >= 0.0)) fail("l2_reg must be >= 0");
  }
}

std::size_t ModelConfig::output_classes() const {
  return kind == ModelKind::MlmTiny ? vocab_size - kFirstSymbolId : n_classes;
}

std::size_t ModelConfig::probe_features() const {
  if (n_features != 0) return n_features;
  if (vocab_size <= kFirstSymbolId) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < kmer; ++i) n *= vocab_size - kFirstSymbolId;
  return n;
}

LayoutPtr make_layout(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.kind == ModelKind::MlmTiny) {
    const std::size_t out = cfg.output_classes();
    return Layout::make({{"embed", {cfg.vocab_size, cfg.embed_dim}},
                         {"w1", {cfg.hidden_dim, cfg.embed_dim}},
                         {"b1", {cfg.hidden_dim}},
                         {"w2", {out, cfg.hidden_dim}},
                         {"b2", {out}}});
  }
  if (!cfg.probe_bias) return Layout::make({{"weight", {cfg.n_classes, cfg.probe_features()}}});
  return Layout::make({{"weight", {cfg.n_classes, cfg.probe_features()}}, {"bias", {cfg.n_classes}}});
}

ParamVector init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamVector params(make_layout(cfg));
  Rng rng(seed);
  for (const auto& t : params.layout()->tensors()) {
    if (t.shape.size() < 2) continue;  // biases stay zero
    auto view = params.tensor(t.name);
    for (auto& v : view) v = rng.uniform(-cfg.init_scale, cfg.init_scale);
  }
  return params;
}

// --------------------------------------------------------------------- MLM

MlmModel::MlmModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.kind != ModelKind::MlmTiny) throw Error(ErrorCode::InvalidConfig, "MlmModel needs kind MLM_TINY");
  layout_ = make_layout(cfg_);
  n_out_ = cfg_.output_classes();
}

void MlmModel::check(const ParamVector& params) const {
  require_same_layout(params.layout(), layout_, "MlmModel");
}

namespace {

struct MlmViews {
  std::span<const double> embed, w1, b1, w2, b2;
};

MlmViews views(const ParamVector& p) {
  return {p.tensor("embed"), p.tensor("w1"), p.tensor("b1"), p.tensor("w2"), p.tensor("b2")};
}

bool is_context_token(TokenId t) { return t != kPadId && t != kMaskId; }

/// Fills ctx with the mean context embedding; returns the number of context tokens.
std::size_t context_mean(std::span<const TokenId> input, std::size_t p, std::size_t half,
                         std::span<const double> embed, std::size_t de, std::size_t vocab,
                         std::span<double> ctx) {
  std::fill(ctx.begin(), ctx.end(), 0.0);
  const std::size_t lo = p >= half ? p - half : 0;
  const std::size_t hi = std::min(input.size() - 1, p + half);
  std::size_t count = 0;
  for (std::size_t j = lo; j <= hi; ++j) {
    if (j == p || !is_context_token(input[j]) || input[j] >= vocab) continue;
    simd::axpy(1.0, embed.subspan(input[j] * de, de), ctx);
    ++count;
  }
  if (count > 1) {
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& c : ctx) c *= inv;
  }
  return count;
}

}  // namespace

template <bool kWithGrad>
double MlmModel::run(const ParamVector& params, const MaskedExample& ex, GradVector* grad) const {
  check(params);
  if (ex.mask_positions.size() != ex.targets.size()) {
    throw Error(ErrorCode::ShapeError, "mask_positions and targets differ in length");
  }
  const auto& k = simd::active();
  const std::size_t de = cfg_.embed_dim;
  const std::size_t dh = cfg_.hidden_dim;
  const std::size_t vocab = cfg_.vocab_size;
  const std::size_t half = cfg_.context_window / 2;
  const MlmViews w = views(params);

  std::size_t scorable = 0;
  for (const auto t : ex.targets) {
    if (t >= kFirstSymbolId && t < vocab) ++scorable;
  }
  if constexpr (kWithGrad) grad->fill(0.0);
  if (scorable == 0) return 0.0;
  const double inv_count = 1.0 / static_cast<double>(scorable);

  std::vector<double> ctx(de), hidden(dh), logits(n_out_), dlogits(n_out_), dh_buf(dh), dctx(de);
  std::span<double> g_embed, g_w1, g_b1, g_w2, g_b2;
  if constexpr (kWithGrad) {
    g_embed = grad->tensor("embed");
    g_w1 = grad->tensor("w1");
    g_b1 = grad->tensor("b1");
    g_w2 = grad->tensor("w2");
    g_b2 = grad->tensor("b2");
  }

  double total = 0.0;
  for (std::size_t m = 0; m < ex.mask_positions.size(); ++m) {
    const TokenId target = ex.targets[m];
    if (target < kFirstSymbolId || target >= vocab) continue;
    const std::size_t p = ex.mask_positions[m];
    if (p >= ex.input.size()) throw Error(ErrorCode::ShapeError, "mask position out of range");

    const std::size_t count = context_mean(ex.input, p, half, w.embed, de, vocab, ctx);
    k.gemv(w.w1.data(), dh, de, ctx.data(), w.b1.data(), hidden.data());
    for (auto& h : hidden) h = std::tanh(h);
    k.gemv(w.w2.data(), n_out_, dh, hidden.data(), w.b2.data(), logits.data());

    const double peak = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (const double l : logits) z += std::exp(l - peak);
    const double lse = peak + std::log(z);
    const std::size_t cls = target - kFirstSymbolId;
    total += lse - logits[cls];

    if constexpr (kWithGrad) {
      for (std::size_t c = 0; c < n_out_; ++c) {
        dlogits[c] = std::exp(logits[c] - lse) * inv_count;
      }
      dlogits[cls] -= inv_count;
      simd::axpy(1.0, dlogits, g_b2);
      k.rank1_update(g_w2.data(), n_out_, dh, dlogits.data(), hidden.data());

      std::fill(dh_buf.begin(), dh_buf.end(), 0.0);
      k.gemv_t_accumulate(w.w2.data(), n_out_, dh, dlogits.data(), dh_buf.data());
      for (std::size_t i = 0; i < dh; ++i) dh_buf[i] *= 1.0 - hidden[i] * hidden[i];
      simd::axpy(1.0, dh_buf, g_b1);
      k.rank1_update(g_w1.data(), dh, de, dh_buf.data(), ctx.data());

      if (count > 0) {
        std::fill(dctx.begin(), dctx.end(), 0.0);
        k.gemv_t_accumulate(w.w1.data(), dh, de, dh_buf.data(), dctx.data());
        const double share = 1.0 / static_cast<double>(count);
        const std::size_t lo = p >= half ? p - half : 0;
        const std::size_t hi = std::min(ex.input.size() - 1, p + half);
        for (std::size_t j = lo; j <= hi; ++j) {
          const TokenId t = ex.input[j];
          if (j == p || !is_context_token(t) || t >= vocab) continue;
          simd::axpy(share, dctx, g_embed.subspan(t * de, de));
        }
      }
    }
  }
  return total * inv_count;
}

double MlmModel::forward_loss(const ParamVector& params, const MaskedExample& ex) const {
  return run<false>(params, ex, nullptr);
}

double MlmModel::loss_and_grad(const ParamVector& params, const MaskedExample& ex, GradVector& grad) const {
  if (!same_layout(grad.layout(), layout_)) grad = GradVector(layout_);
  return run<true>(params, ex, &grad);
}

std::pair<double, GradVector> MlmModel::per_sample_grad(const ParamVector& params, const MaskedExample& ex) const {
  GradVector grad(layout_);
  const double loss = loss_and_grad(params, ex, grad);
  return {loss, std::move(grad)};
}

std::vector<double> MlmModel::embed(const ParamVector& params, const TokenSequence& seq) const {
  check(params);
  const auto& k = simd::active();
  const std::size_t de = cfg_.embed_dim;
  const std::size_t dh = cfg_.hidden_dim;
  const MlmViews w = views(params);
  std::vector<double> pooled(dh, 0.0), ctx(de), hidden(dh);
  if (seq.tokens.empty()) return pooled;
  for (std::size_t p = 0; p < seq.tokens.size(); ++p) {
    context_mean(seq.tokens, p, cfg_.context_window / 2, w.embed, de, cfg_.vocab_size, ctx);
    k.gemv(w.w1.data(), dh, de, ctx.data(), w.b1.data(), hidden.data());
    for (std::size_t i = 0; i < dh; ++i) pooled[i] += std::tanh(hidden[i]);
  }
  const double inv = 1.0 / static_cast<double>(seq.tokens.size());
  for (auto& v : pooled) v *= inv;
  return pooled;
}

template double MlmModel::run<false>(const ParamVector&, const MaskedExample&, GradVector*) const;
template double MlmModel::run<true>(const ParamVector&, const MaskedExample&, GradVector*) const;

// ------------------------------------------------------------------- probe

void ProbeDataset::add(std::span<const double> x, std::size_t label) {
  if (x.size() != n_features) throw Error(ErrorCode::ShapeError, "feature row has the wrong width");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

ProbeDataset ProbeDataset::subset(std::span<const std::size_t> ids) const {
  ProbeDataset out;
  out.n_features = n_features;
  for (const auto i : ids) out.add(row(i), labels.at(i));
  return out;
}

ProbeDataset ProbeDataset::without(std::size_t id) const {
  ProbeDataset out;
  out.n_features = n_features;
  for (std::size_t i = 0; i < size(); ++i) {
    if (i != id) out.add(row(i), labels[i]);
  }
  return out;
}

ProbeDataset kmer_features(const std::vector<TokenSequence>& seqs, const std::vector<std::size_t>& labels,
                           std::size_t symbol_count, std::size_t k) {
  if (seqs.size() != labels.size()) throw Error(ErrorCode::ShapeError, "one label per sequence required");
  if (k == 0 || symbol_count == 0) throw Error(ErrorCode::InvalidConfig, "kmer order and alphabet must be >= 1");
  std::size_t width = 1;
  for (std::size_t i = 0; i < k; ++i) width *= symbol_count;
  ProbeDataset data;
  data.n_features = width;
  std::vector<double> row(width);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    std::fill(row.begin(), row.end(), 0.0);
    const auto& toks = seqs[s].tokens;
    std::size_t valid = 0;
    for (std::size_t i = 0; i + k <= toks.size(); ++i) {
      std::size_t index = 0;
      bool ok = true;
      for (std::size_t j = 0; j < k; ++j) {
        const TokenId t = toks[i + j];
        if (t < kFirstSymbolId || t >= kFirstSymbolId + symbol_count) {
          ok = false;
          break;
        }
        index = index * symbol_count + (t - kFirstSymbolId);
      }
      if (!ok) continue;
      row[index] += 1.0;
      ++valid;
    }
    if (valid > 0) {
      for (auto& v : row) v /= static_cast<double>(valid);
    }
    data.add(row, labels[s]);
  }
  return data;
}

ConvexProbe::ConvexProbe(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.kind != ModelKind::ConvexProbe) throw Error(ErrorCode::InvalidConfig, "ConvexProbe needs kind CONVEX_PROBE");
  layout_ = make_layout(cfg_);
  n_features_ = cfg_.probe_features();
  n_classes_ = cfg_.n_classes;
}

void ConvexProbe::check(const ParamVector& params, std::span<const double> x) const {
  require_same_layout(params.layout(), layout_, "ConvexProbe");
  if (x.size() != n_features_) throw Error(ErrorCode::ShapeError, "feature row has the wrong width");
}

void ConvexProbe::logits(const ParamVector& params, std::span<const double> x, std::span<double> out) const {
  const double* bias = cfg_.probe_bias ? params.tensor("bias").data() : nullptr;
  simd::active().gemv(params.tensor("weight").data(), n_classes_, n_features_, x.data(), bias, out.data());
}

std::vector<double> ConvexProbe::probabilities(const ParamVector& params, std::span<const double> x) const {
  check(params, x);
  std::vector<double> p(n_classes_);
  logits(params, x, p);
  const double peak = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) {
    v = std::exp(v - peak);
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

std::size_t ConvexProbe::predict(const ParamVector& params, std::span<const double> x) const {
  const auto p = probabilities(params, x);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double ConvexProbe::loss(const ParamVector& params, std::span<const double> x, std::size_t label) const {
  check(params, x);
  if (label >= n_classes_) throw Error(ErrorCode::ShapeError, "label out of range");
  std::vector<double> l(n_classes_);
  logits(params, x, l);
  const double peak = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (const double v : l) z += std::exp(v - peak);
  double nll = peak + std::log(z) - l[label];
  if (cfg_.l2_reg > 0.0) nll += 0.5 * cfg_.l2_reg * simd::dot(params.values(), params.values());
  return nll;
}

double ConvexProbe::loss_and_grad(const ParamVector& params, std::span<const double> x, std::size_t label,
                                  GradVector& grad) const {
  check(params, x);
  if (label >= n_classes_) throw Error(ErrorCode::ShapeError, "label out of range");
  if (!same_layout(grad.layout(), layout_)) grad = GradVector(layout_);
  std::vector<double> l(n_classes_);
  logits(params, x, l);
  const double peak = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (const double v : l) z += std::exp(v - peak);
  const double lse = peak + std::log(z);
  double nll = lse - l[label];

  std::vector<double> dl(n_classes_);
  for (std::size_t c = 0; c < n_classes_; ++c) dl[c] = std::exp(l[c] - lse);
  dl[label] -= 1.0;

  auto gw = grad.tensor("weight");
  std::fill(gw.begin(), gw.end(), 0.0);
  simd::active().rank1_update(gw.data(), n_classes_, n_features_, dl.data(), x.data());
  if (cfg_.probe_bias) {
    auto gb = grad.tensor("bias");
    std::copy(dl.begin(), dl.end(), gb.begin());
  }
  if (cfg_.l2_reg > 0.0) {
    nll += 0.5 * cfg_.l2_reg * simd::dot(params.values(), params.values());
    simd::axpy(cfg_.l2_reg, params.values(), grad.values());
  }
  return nll;
}

void ConvexProbe::accumulate_hessian(const ParamVector& params, std::span<const double> x, double scale,
                                     std::span<double> hessian) const {
  const std::size_t d = layout_->total_size();
  if (hessian.size() != d * d) throw Error(ErrorCode::ShapeError, "hessian buffer must be d x d");
  const auto p = probabilities(params, x);
  const std::size_t f = n_features_;
  const std::size_t C = n_classes_;
  // Augmented feature (x, 1): feature j == f addresses the bias of class c.
  const std::size_t last = cfg_.probe_bias ? f : f - 1;
  auto index = [&](std::size_t c, std::size_t j) { return j < f ? c * f + j : C * f + c; };
  auto feat = [&](std::size_t j) { return j < f ? x[j] : 1.0; };
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t c2 = 0; c2 < C; ++c2) {
      const double cov = (c == c2 ? p[c] : 0.0) - p[c] * p[c2];
      if (cov == 0.0) continue;
      for (std::size_t j = 0; j <= last; ++j) {
        const double xj = feat(j);
        if (xj == 0.0) continue;
        const std::size_t row = index(c, j);
        for (std::size_t j2 = 0; j2 <= last; ++j2) {
          const double xj2 = feat(j2);
          if (xj2 == 0.0) continue;
          hessian[row * d + index(c2, j2)] += scale * cov * xj * xj2;
        }
      }
    }
  }
  if (cfg_.l2_reg > 0.0) {
    for (std::size_t i = 0; i < d; ++i) hessian[i * d + i] += scale * cfg_.l2_reg;
  }
}

double ConvexProbe::mean_loss(const ParamVector& params, const ProbeDataset& data) const {
  if (data.size() == 0) throw Error(ErrorCode::EmptyCorpus, "probe dataset is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += loss(params, data.row(i), data.labels[i]);
  return total / static_cast<double>(data.size());
}

double ConvexProbe::mean_loss_and_grad(const ParamVector& params, const ProbeDataset& data, GradVector& grad) const {
  if (data.size() == 0) throw Error(ErrorCode::EmptyCorpus, "probe dataset is empty");
  grad = GradVector(layout_);
  GradVector g(layout_);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += loss_and_grad(params, data.row(i), data.labels[i], g);
    simd::axpy(1.0, g.values(), grad.values());
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  for (auto& v : grad.values()) v *= inv;
  return total * inv;
}

// --------------------------------------------------------- finite differences

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                                     std::span<const double> theta, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorCode::InvalidStep, "finite-difference step must be > 0");
  }
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(theta[i]));
    point[i] = theta[i] + step;
    const double up = loss(point);
    point[i] = theta[i] - step;
    const double down = loss(point);
    point[i] = theta[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

GradVector finite_diff_grad(const MlmModel& model, const ParamVector& params, const MaskedExample& ex, double h) {
  ParamVector probe_point = params;
  auto values = finite_diff_grad(
      [&](std::span<const double> theta) {
        std::copy(theta.begin(), theta.end(), probe_point.values().begin());
        return model.forward_loss(probe_point, ex);
      },
      params.values(), h);
  return GradVector(params.layout(), std::move(values));
}

GradVector finite_diff_grad(const ConvexProbe& probe, const ParamVector& params, std::span<const double> x,
                            std::size_t label, double h) {
  ParamVector probe_point = params;
  auto values = finite_diff_grad(
      [&](std::span<const double> theta) {
        std::copy(theta.begin(), theta.end(), probe_point.values().begin());
        return probe.loss(probe_point, x, label);
      },
      params.values(), h);
  return GradVector(params.layout(), std::move(values));
}

}  // namespace prunekit
