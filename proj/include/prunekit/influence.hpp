#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prunekit/model.hpp"
#include "prunekit/optim.hpp"
#include "prunekit/params.hpp"
#include "prunekit/seqio.hpp"

namespace prunekit {

struct ScoringConfig {
  double subset_fraction = 0.05;
  std::size_t adapt_epochs = 1;
  double adapt_lr = 1e-5;
  std::size_t adapt_warmup = 50;
  double adapt_weight_decay = 0.01;
  std::size_t adapt_batch_size = 16;
  double damping_rel = 1e-8;
  double mask_rate = 0.15;
  std::size_t mask_samples = 1;  // scores average over this many masks per sample
  std::uint64_t mask_seed = 0;
  std::uint64_t subset_seed = 0;
  std::size_t workers = 1;
  std::size_t fisher_chunk = 64;  // samples per Fisher partial sum

  void validate() const;  // InvalidConfig
};

/// Diagonal of the empirical Fisher: mean of g * g over a gradient stream.
struct FisherDiagonal {
  LayoutPtr layout;
  std::vector<double> values;
  std::size_t sample_count = 0;

  double mean() const;
  double max() const;
  double median() const;
};

/// values[i] = 1 / (fisher[i] + damping).
struct PrecisionDiagonal {
  LayoutPtr layout;
  std::vector<double> values;
  double damping = 0.0;
};

struct InfluenceRecord {
  std::size_t sample_id = 0;
  double score = 0.0;
  double grad_norm = 0.0;
  std::size_t seq_length = 0;
};

/// max(1, round(fraction * n)) distinct ids, sorted. Uniform without replacement.
std::vector<std::size_t> draw_subset(std::size_t n, double fraction, std::uint64_t seed);

/// Streaming accumulator. Gradients are summed sequentially inside chunks of
/// `chunk` samples; chunk partials are folded into the total in chunk order,
/// so the result depends only on stream order and chunk size.
class FisherAccumulator {
 public:
  explicit FisherAccumulator(LayoutPtr layout, std::size_t chunk = 64);

  void add(const GradVector& grad);
  /// Folds a precomputed chunk partial (sum of squares over `count` samples).
  void add_partial(std::span<const double> sum_of_squares, std::size_t count);
  FisherDiagonal finish();

 private:
  void flush();

  LayoutPtr layout_;
  std::size_t chunk_;
  std::vector<double> total_;
  std::vector<double> partial_;
  std::size_t in_partial_ = 0;
  std::size_t count_ = 0;
};

/// ShapeError on layout mismatch, NonFiniteGradient on non-finite entries,
/// EmptySubset on an empty stream.
FisherDiagonal accumulate_fisher(std::span<const GradVector> grads, std::size_t chunk = 64);

/// lambda = damping_rel * mean(fisher) when that mean is > 0, else damping_rel.
PrecisionDiagonal precision_from_fisher(const FisherDiagonal& fisher, double damping_rel);
/// Same formula with an absolute damping value.
PrecisionDiagonal precision_with_damping(const FisherDiagonal& fisher, double damping);

/// sum_i grad_i^2 * precision_i.
double self_influence_score(const GradVector& grad, const PrecisionDiagonal& precision);

/// Per-sample gradients at fixed parameters; the scoring pipeline's view of a model + dataset.
class GradientSource {
 public:
  virtual ~GradientSource() = default;
  virtual LayoutPtr layout() const = 0;
  virtual std::size_t size() const = 0;
  virtual std::size_t sample_length(std::size_t i) const = 0;
  virtual std::size_t variants() const { return 1; }
  virtual double loss_and_grad(const ParamVector& params, std::size_t i, std::size_t variant,
                               GradVector& grad) const = 0;
};

/// Masked-LM gradients. Variant 0 uses mask_seed; variant r > 0 uses a seed derived from (mask_seed, r).
class MlmGradientSource final : public GradientSource {
 public:
  MlmGradientSource(const MlmModel& model, const std::vector<TokenSequence>& corpus, double mask_rate,
                    std::uint64_t mask_seed, std::size_t mask_samples = 1);

  LayoutPtr layout() const override { return model_.layout(); }
  std::size_t size() const override { return corpus_.size(); }
  std::size_t sample_length(std::size_t i) const override { return corpus_[i].length(); }
  std::size_t variants() const override { return mask_samples_; }
  double loss_and_grad(const ParamVector& params, std::size_t i, std::size_t variant,
                       GradVector& grad) const override;
  MaskedExample example(std::size_t i, std::size_t variant) const;

 private:
  const MlmModel& model_;
  const std::vector<TokenSequence>& corpus_;
  double mask_rate_;
  std::uint64_t mask_seed_;
  std::size_t mask_samples_;
};

class ProbeGradientSource final : public GradientSource {
 public:
  ProbeGradientSource(const ConvexProbe& probe, const ProbeDataset& data) : probe_(probe), data_(data) {}

  LayoutPtr layout() const override { return probe_.layout(); }
  std::size_t size() const override { return data_.size(); }
  std::size_t sample_length(std::size_t) const override { return data_.n_features; }
  double loss_and_grad(const ParamVector& params, std::size_t i, std::size_t variant,
                       GradVector& grad) const override;

 private:
  const ConvexProbe& probe_;
  const ProbeDataset& data_;
};

/// Memory accounting for the streaming passes: the largest number of
/// parameter-sized buffers alive at once.
struct StreamStats {
  std::size_t peak_buffers = 0;
  std::size_t buffer_doubles = 0;
  std::size_t peak_bytes() const { return peak_buffers * buffer_doubles * sizeof(double); }
};

/// Diagonal Fisher over the listed samples (all variants), computed at params.
/// Chunks run concurrently; the fold order is fixed, so any worker count
/// yields bitwise-identical output.
FisherDiagonal fisher_over(const GradientSource& source, const ParamVector& params,
                           std::span<const std::size_t> ids, std::size_t workers, std::size_t chunk = 64,
                           StreamStats* stats = nullptr);

/// One record per sample, in sample order. Never stores per-sample gradients.
std::vector<InfluenceRecord> score_samples(const GradientSource& source, const ParamVector& params,
                                           const PrecisionDiagonal& precision, std::size_t workers,
                                           StreamStats* stats = nullptr);

/// Mean gradient over ids (variant 0) and its norm.
double mean_gradient_norm(const GradientSource& source, const ParamVector& params,
                          std::span<const std::size_t> ids);

struct AdaptResult {
  ParamVector params;
  double loss_before = 0.0;     // subset mean loss with the scoring masks
  double loss_after = 0.0;
  double grad_norm_after = 0.0; // norm of the subset mean gradient at the adapted params
  std::vector<double> epoch_losses;
};

/// Masked-LM fine-tuning restricted to subset_ids (A.5-style hyperparameters
/// from cfg). adapt_epochs == 0 returns params unchanged. EmptySubset on an empty subset.
AdaptResult adapt_model(const MlmModel& model, ParamVector params, const std::vector<TokenSequence>& corpus,
                        std::span<const std::size_t> subset_ids, const ScoringConfig& cfg);

/// Convex-probe adaptation: fits the subset empirical risk to its unique
/// minimizer when adapt_epochs > 0.
AdaptResult adapt_probe(const ConvexProbe& probe, ParamVector params, const ProbeDataset& data,
                        std::span<const std::size_t> subset_ids, const ScoringConfig& cfg);

struct ScoreResult {
  std::vector<InfluenceRecord> records;
  std::vector<std::size_t> subset_ids;
  ParamVector adapted;
  FisherDiagonal fisher;
  double damping = 0.0;
  AdaptResult adapt_audit;  // params moved into `adapted`
  StreamStats stats;
};

/// Subset draw, adaptation, Fisher at the adapted params, precision, and a
/// score for every corpus sample (subset members included).
ScoreResult score_corpus(const MlmModel& model, ParamVector params, const std::vector<TokenSequence>& corpus,
                         const ScoringConfig& cfg);
ScoreResult score_probe(const ConvexProbe& probe, ParamVector params, const ProbeDataset& data,
                        const ScoringConfig& cfg);

/// scores.tsv: header then one row per record sorted by sample_id, reals with 17 significant digits.
void write_scores(std::ostream& out, std::vector<InfluenceRecord> records);
std::vector<InfluenceRecord> read_scores(std::istream& in);
void write_scores_file(const std::string& path, const std::vector<InfluenceRecord>& records);
std::vector<InfluenceRecord> read_scores_file(const std::string& path);

}  // namespace prunekit
