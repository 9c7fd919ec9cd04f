#pragma once

// Small-scale ground truth for the diagonal-Fisher scores: dense Hessian
// self-influence, leave-one-out retraining, and rank agreement between them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prunekit/influence.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

inline constexpr std::size_t kMaxDenseDim = 2000;

/// Symmetrized mean-loss Hessian, row-major.
struct DenseHessian {
  std::size_t dim = 0;
  std::vector<double> matrix;
  std::string at_params;       // SHA-256 of the parameter bytes
  std::string dataset_digest;

  double at(std::size_t i, std::size_t j) const { return matrix[i * dim + j]; }
  double mean_diagonal() const;
  /// max |H - H^T| / max |H|.
  double asymmetry() const;
};

/// Closed-form probe Hessian over the dataset. TooLarge when d > kMaxDenseDim.
DenseHessian exact_hessian(const ConvexProbe& probe, const ParamVector& params, const ProbeDataset& data);
/// Central differences of the analytic mean gradient, step h per coordinate.
DenseHessian exact_hessian(const MlmModel& model, const ParamVector& params,
                           std::span<const MaskedExample> examples, double h = 1e-4);
/// Generic central-difference Jacobian of a gradient map, symmetrized.
DenseHessian finite_diff_hessian(const std::function<void(std::span<const double>, std::span<double>)>& grad,
                                 std::span<const double> theta, double h);

struct SelfInfluenceSolve {
  double value = 0.0;
  double ridge = 0.0;
  int attempts = 0;
};

/// g^T (H + ridge I)^{-1} g via Cholesky. A negative ridge selects the default
/// 1e-6 * mean diag(H) (or 1e-6 if that is not positive); on factorization
/// failure the ridge grows x10, at most 6 attempts, then NotPositiveDefinite.
SelfInfluenceSolve exact_self_influence_solve(std::span<const double> grad, const DenseHessian& hessian,
                                              double ridge = -1.0);
double exact_self_influence(std::span<const double> grad, const DenseHessian& hessian, double ridge = -1.0);

/// Classical influence of a training point on a validation set:
/// mean_m g_m^T (H + ridge I)^{-1} g_tr.
double validation_influence(std::span<const GradVector> validation_grads, std::span<const double> train_grad,
                            const DenseHessian& hessian, double ridge = -1.0);

struct LooOptions {
  double grad_tol = 1e-8;
  std::size_t max_iter = 200;
  std::size_t max_samples = 1000;
};

/// Leave-one-out excess training loss on a convex probe.
class LooOracle {
 public:
  /// Fits the full-data optimum. TooLarge when the dataset exceeds opts.max_samples.
  LooOracle(const ConvexProbe& probe, const ProbeDataset& data, const LooOptions& opts = {});

  const ParamVector& optimum() const noexcept { return optimum_; }
  /// sum over the full dataset of loss(theta without z) - loss(theta*).
  double delta(std::size_t leave_out) const;

 private:
  const ConvexProbe& probe_;
  const ProbeDataset& data_;
  LooOptions opts_;
  ParamVector optimum_;
  std::vector<double> base_losses_;
};

double loo_delta(const ConvexProbe& probe, const ProbeDataset& data, std::size_t leave_out,
                 const LooOptions& opts = {});

/// Rank correlation with average ranks for ties. Sorted neighbours closer than
/// tie_tolerance * max|v| are chained into one tie group. ShapeError on length
/// mismatch or fewer than 2 values; ConstantInput when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b, double tie_tolerance = 0.0);

struct ProbeInstanceConfig {
  std::size_t n_samples = 200;
  std::size_t n_classes = 4;
  std::size_t n_features = 12;
  double duplicate_fraction = 0.5;  // share of samples that are near copies of a few prototypes
  std::size_t n_prototypes = 4;
  double feature_noise = 0.1;       // jitter added to duplicated prototypes
  double label_noise = 0.1;         // share of unique samples with a random label
  double l2_reg = 1e-2;
  std::uint64_t seed = 0;
};

struct ProbeInstance {
  ProbeDataset data;
  ModelConfig model;
  std::vector<bool> is_duplicate;
};

/// Unique samples: Gaussian class clusters. Duplicates: small perturbations of
/// a few prototypes. Deterministic per seed.
ProbeInstance make_probe_instance(const ProbeInstanceConfig& cfg);

/// Orthogonal-support instance: one-hot features, no bias column, two
/// classes, identical sample groups on disjoint features. Its Hessian is block
/// diagonal with each sample gradient an eigenvector of its block, so the
/// diagonal and exact scores order samples identically.
ProbeInstance make_orthogonal_instance(std::size_t n_groups = 8, std::size_t group_size = 10,
                                       double l2_reg = 1e-2);

struct OracleConfig {
  ScoringConfig scoring;
  LooOptions loo;
  bool with_loo = true;
  std::size_t max_samples = 500;
  std::size_t max_dim = 200;
  double tie_tolerance = 1e-9;  // scores equal in exact arithmetic differ by rounding only

  OracleConfig() { scoring.subset_fraction = 0.5; }
};

struct OracleRow {
  std::size_t sample_id = 0;
  double approx_score = 0.0;
  double exact_score = 0.0;
  double loo_delta = 0.0;
  bool in_subset = false;
};

struct OracleReport {
  std::vector<OracleRow> rows;
  double spearman_approx_vs_exact = 0.0;
  double spearman_approx_vs_loo = 0.0;
  double spearman_exact_vs_loo = 0.0;
  double curvature_spread = 0.0;  // max / median Fisher entry (diagnostic only)
  double damping = 0.0;
  double ridge = 0.0;
  std::size_t subset_size = 0;
  double subset_grad_norm = 0.0;
};

/// Diagonal-Fisher scores, exact subset-Hessian self-influence (same adapted
/// params, same subset, same damping) and, if enabled, LOO deltas.
OracleReport run_oracle_report(const ProbeDataset& data, const ModelConfig& probe_cfg, const OracleConfig& cfg);

void write_oracle_report(std::ostream& out, const OracleReport& report);
OracleReport read_oracle_report(std::istream& in);

}  // namespace prunekit
