#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prunekit/coreset.hpp"
#include "prunekit/influence.hpp"
#include "prunekit/model.hpp"
#include "prunekit/optim.hpp"
#include "prunekit/oracle.hpp"
#include "prunekit/synthetic.hpp"

namespace prunekit {

struct EvalConfig {
  double mask_rate = 0.15;
  std::uint64_t mask_seed = 0x65766121;  // fixed across checkpoints so losses are paired
  double probe_l2 = 1e-2;
  double probe_train_fraction = 0.5;
  std::vector<std::uint64_t> probe_seeds{0, 1, 2};
};

struct OracleCommandConfig {
  std::string instance = "default";  // default | orthogonal
  ProbeInstanceConfig probe;
  std::size_t orthogonal_groups = 8;
  std::size_t orthogonal_group_size = 10;
  OracleConfig oracle;
};

/// Every tunable of the command-line pipeline. Keys are flat and dotted
/// ("train.lr"); see PipelineConfig::keys() for the full list.
struct PipelineConfig {
  std::optional<std::uint64_t> seed;  // global seed; per-stage seeds fall back to it
  std::size_t workers = 1;
  std::string alphabet = "rna";
  std::size_t max_len = 512;
  bool t_to_u = false;

  ModelConfig model;
  SyntheticCorpusConfig gen;
  ScoringConfig score;
  SelectionConfig select;
  TrainOptions train;
  EvalConfig eval;
  OracleCommandConfig oracle;

  std::optional<std::uint64_t> gen_seed, score_seed, select_seed, train_seed, oracle_seed;

  /// UnknownConfigKey for keys outside keys(); InvalidConfig for unparseable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// seed, else PRUNEKIT_SEED, else 0. InvalidConfig for an unparseable variable.
  std::uint64_t global_seed() const;
  std::uint64_t resolve(const std::optional<std::uint64_t>& stage) const {
    return stage ? *stage : global_seed();
  }

  /// Copies the seeds and workers settings into the stage configs.
  void finalize();
};

/// key = value lines; '#' starts a comment; blank lines ignored.
void load_config(std::istream& in, PipelineConfig& cfg);
void load_config_file(const std::string& path, PipelineConfig& cfg);
/// "key=value" assignment, as given on the command line.
void apply_assignment(std::string_view assignment, PipelineConfig& cfg);
/// Sorted key=value lines for provenance records.
void write_config(std::ostream& out, const PipelineConfig& cfg, std::string_view prefix = "");

}  // namespace prunekit
