#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prunekit/influence.hpp"

namespace prunekit {

enum class Strategy { TopI, Cci, Random };

std::string_view strategy_name(Strategy s) noexcept;  // "top_i", "cci", "random"
/// InvalidConfig on unknown names; case-insensitive.
Strategy parse_strategy(std::string_view name);

struct SelectionConfig {
  Strategy strategy = Strategy::Cci;
  double alpha = 0.90;  // pruning rate
  double beta = 0.05;   // hard cutoff rate
  std::size_t k = 50;   // strata
  std::uint64_t seed = 0;

  /// InvalidConfig unless 0 < alpha < 1, 0 <= beta and k >= 1;
  /// BetaExceedsComplement when beta > 1 - alpha.
  void validate() const;
};

/// round(n * (1 - alpha)).
std::size_t coreset_budget(std::size_t n, double alpha);
/// floor(n * beta), guarded against representation error just below an integer.
std::size_t hard_cutoff_count(std::size_t n, double beta);

struct Stratum {
  std::size_t index = 0;
  double lo = 0.0;
  double hi = 0.0;  // exclusive except for the last stratum
  bool closed = false;
  std::vector<std::size_t> member_ids;  // ascending
};

struct Stratification {
  std::vector<std::size_t> pruned_ids;  // ascending
  std::vector<Stratum> strata;
};

struct Allocation {
  std::size_t iteration = 0;
  std::size_t stratum = 0;
  std::size_t stratum_size = 0;
  std::size_t strata_left = 0;    // |B| before removal
  std::size_t budget_before = 0;  // m before the decrement
  std::size_t taken = 0;          // m_B
};

struct Coreset {
  std::vector<std::size_t> ids;  // ascending, distinct
  SelectionConfig config;
  std::size_t budget = 0;
  std::size_t pool_size = 0;
  std::string score_digest;   // digest of the source score file, when known
  std::string corpus_digest;  // digest of the scored corpus, when known
  std::vector<std::size_t> pruned_ids;
  std::vector<Allocation> allocations;
};

/// Records ordered by descending score, ties by ascending sample_id.
std::vector<std::size_t> rank_by_score(std::span<const InfluenceRecord> records);

/// InvalidBudget unless 1 <= m <= |records|.
Coreset select_top_i(std::span<const InfluenceRecord> records, std::size_t m);
/// Uniform without replacement, deterministic per seed. InvalidBudget unless 1 <= m <= |ids|.
Coreset select_random(std::span<const std::size_t> ids, std::size_t m, std::uint64_t seed);

/// Removes the floor(n * beta) highest-scoring records (ranked as in
/// rank_by_score), then splits [s_min, s_max] of the rest into k equal-width
/// strata. A zero-width span places every record in the last stratum.
/// EmptyAfterCutoff when nothing survives the cutoff.
Stratification stratify(std::span<const InfluenceRecord> records, double beta, std::size_t k);

/// Coverage-centric selection. Repeatedly takes the smallest remaining stratum
/// (ties: lower range start), samples min(size, floor(m / strata_left)) of its
/// members with seed derive_seed(cfg.seed, stratum index), and decrements m.
/// InvalidBudget when round(n(1 - alpha)) == 0; InfeasibleBudget when the
/// budget exceeds the post-cutoff pool.
Coreset select_cci(std::span<const InfluenceRecord> records, const SelectionConfig& cfg);

/// Dispatches on cfg.strategy with budget coreset_budget(n, cfg.alpha).
Coreset select(std::span<const InfluenceRecord> records, const SelectionConfig& cfg);

/// '#key\tvalue' header lines, then one id per line.
void write_coreset(std::ostream& out, const Coreset& c);
Coreset read_coreset(std::istream& in);
void write_allocations(std::ostream& out, const Coreset& c);
/// Writes path and, for CCI, path + ".alloc.tsv".
void write_coreset_file(const std::string& path, const Coreset& c);
Coreset read_coreset_file(const std::string& path);

}  // namespace prunekit
