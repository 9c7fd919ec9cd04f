#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "prunekit/params.hpp"
#include "prunekit/seqio.hpp"

namespace prunekit {

enum class ModelKind { MlmTiny, ConvexProbe };

struct ModelConfig {
  ModelKind kind = ModelKind::MlmTiny;
  std::size_t vocab_size = 7;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t context_window = 5;  // symmetric, odd
  double init_scale = 0.02;
  // CONVEX_PROBE only.
  std::size_t kmer = 1;
  std::size_t n_features = 0;  // 0: derived as (vocab_size - 3)^kmer
  std::size_t n_classes = 2;
  double l2_reg = 0.0;
  bool probe_bias = true;

  /// Throws InvalidConfig on violated invariants.
  void validate() const;
  std::size_t output_classes() const;  // alphabet tokens for the MLM, labels for the probe
  std::size_t probe_features() const;
};

LayoutPtr make_layout(const ModelConfig& cfg);

/// Weights uniform in [-init_scale, init_scale]; biases zero.
ParamVector init_params(const ModelConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// MLM_TINY: windowed bag-of-embeddings masked-token predictor.
//
// For every masked position p whose target is a residue token:
//   c      = mean of embed[input[j]] over |j - p| <= w/2, j != p, input[j] not PAD/MASK
//            (zero vector when no such j exists)
//   h      = tanh(w1 c + b1)
//   logits = w2 h + b2           (one logit per residue token, ids >= 3)
//   loss_p = logsumexp(logits) - logits[target - 3]
// The sample loss is the mean of loss_p. Masked positions whose target is UNK
// carry no loss; an example without any scorable position has loss 0.
// ---------------------------------------------------------------------------
class MlmModel {
 public:
  explicit MlmModel(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  const LayoutPtr& layout() const noexcept { return layout_; }

  double forward_loss(const ParamVector& params, const MaskedExample& ex) const;
  /// Overwrites grad; the returned loss is bitwise equal to forward_loss.
  double loss_and_grad(const ParamVector& params, const MaskedExample& ex, GradVector& grad) const;
  std::pair<double, GradVector> per_sample_grad(const ParamVector& params, const MaskedExample& ex) const;

  /// Mean over positions of the hidden activation computed from each
  /// position's unmasked context window. Frozen representation for probes.
  std::vector<double> embed(const ParamVector& params, const TokenSequence& seq) const;

 private:
  template <bool kWithGrad>
  double run(const ParamVector& params, const MaskedExample& ex, GradVector* grad) const;
  void check(const ParamVector& params) const;

  ModelConfig cfg_;
  LayoutPtr layout_;
  std::size_t n_out_;
};

// ---------------------------------------------------------------------------
// CONVEX_PROBE: multinomial logistic regression on dense features,
// per-sample loss NLL + (l2_reg / 2) * ||theta||^2 over all parameters.
// ---------------------------------------------------------------------------
struct ProbeDataset {
  std::size_t n_features = 0;
  std::vector<double> features;      // row-major, size() x n_features
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * n_features, n_features);
  }
  void add(std::span<const double> x, std::size_t label);
  ProbeDataset subset(std::span<const std::size_t> ids) const;
  ProbeDataset without(std::size_t id) const;
};

/// k-mer frequency features (counts divided by the number of k-mers without
/// UNK) over the residue alphabet; feature count symbol_count^k.
ProbeDataset kmer_features(const std::vector<TokenSequence>& seqs, const std::vector<std::size_t>& labels,
                           std::size_t symbol_count, std::size_t k);

class ConvexProbe {
 public:
  explicit ConvexProbe(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  const LayoutPtr& layout() const noexcept { return layout_; }
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t n_classes() const noexcept { return n_classes_; }

  double loss(const ParamVector& params, std::span<const double> x, std::size_t label) const;
  double loss_and_grad(const ParamVector& params, std::span<const double> x, std::size_t label,
                       GradVector& grad) const;
  std::vector<double> probabilities(const ParamVector& params, std::span<const double> x) const;
  std::size_t predict(const ParamVector& params, std::span<const double> x) const;

  /// hessian (row-major d x d) += scale * per-sample Hessian, regularizer included.
  void accumulate_hessian(const ParamVector& params, std::span<const double> x, double scale,
                          std::span<double> hessian) const;

  double mean_loss(const ParamVector& params, const ProbeDataset& data) const;
  /// Mean per-sample gradient over the dataset; returns the mean loss.
  double mean_loss_and_grad(const ParamVector& params, const ProbeDataset& data, GradVector& grad) const;

 private:
  void check(const ParamVector& params, std::span<const double> x) const;
  void logits(const ParamVector& params, std::span<const double> x, std::span<double> out) const;

  ModelConfig cfg_;
  LayoutPtr layout_;
  std::size_t n_features_;
  std::size_t n_classes_;
};

struct ProbeFitOptions {
  double grad_tol = 1e-10;
  std::size_t max_iter = 200;
};

struct ProbeFitResult {
  ParamVector params;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
};

/// Damped Newton with backtracking to the unique minimizer of the mean loss
/// (requires l2_reg > 0 or separable-free data). Also stops when no step can
/// lower the loss in floating point while the gradient norm is <= 1e-6.
/// DidNotConverge if the gradient norm stays above grad_tol after max_iter steps.
ProbeFitResult fit_probe(const ConvexProbe& probe, const ProbeDataset& data, ParamVector start,
                         const ProbeFitOptions& opts = {});

/// Central differences, coordinate by coordinate, with step h * max(1, |theta_i|).
/// InvalidStep unless h > 0.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                                     std::span<const double> theta, double h);
GradVector finite_diff_grad(const MlmModel& model, const ParamVector& params, const MaskedExample& ex,
                            double h);
GradVector finite_diff_grad(const ConvexProbe& probe, const ParamVector& params,
                            std::span<const double> x, std::size_t label, double h);

}  // namespace prunekit
