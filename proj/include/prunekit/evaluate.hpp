#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "prunekit/config.hpp"
#include "prunekit/model.hpp"
#include "prunekit/seqio.hpp"

namespace prunekit {

/// Key/value sidecar written next to every checkpoint.
struct CheckpointMeta {
  std::string checkpoint_sha256;
  std::string corpus_digest;
  std::string coreset_digest;
  std::string strategy = "none";
  std::uint64_t seed = 0;
  ModelConfig model;
  std::vector<std::string> train_ids;  // record names the checkpoint was trained on

  /// <ckpt>.meta holds the key/value pairs, <ckpt>.ids one record name per line.
  void write(const std::string& checkpoint_path) const;
  /// FileNotFound / MalformedFile.
  static CheckpointMeta read(const std::string& checkpoint_path);
};

struct LabelledCorpus {
  std::vector<SequenceRecord> records;
  std::vector<TokenSequence> tokens;
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;
};

/// Joins a FASTA file with its labels. IdNotInCorpus when a record has no label.
LabelledCorpus load_labelled(const std::string& fasta, const std::string& labels, const Alphabet& alphabet,
                             std::size_t max_len, const FastaOptions& opts = {});

struct CheckpointEval {
  std::string path;
  std::string digest;
  std::string strategy;
  std::uint64_t seed = 0;
  double mlm_loss = 0.0;
  double probe_accuracy = 0.0;  // mean over the probe seeds
};

struct StrategySummary {
  std::string strategy;
  std::size_t seeds = 0;
  double mlm_loss_mean = 0.0;
  double mlm_loss_sd = 0.0;
  double probe_accuracy_mean = 0.0;
  double probe_accuracy_sd = 0.0;
};

struct EvalReport {
  std::string heldout_digest;
  std::vector<CheckpointEval> checkpoints;
  std::vector<StrategySummary> strategies;  // only groups with >= 3 seeds
};

/// Mean-pooled frozen embeddings, standardized with statistics of the probe
/// training split, then a multinomial logistic probe fit to convergence.
/// Returns test accuracy.
double probe_accuracy(const std::vector<std::vector<double>>& embeddings, const std::vector<std::size_t>& labels,
                      std::size_t n_classes, double train_fraction, double l2, std::uint64_t seed);

/// Held-out masked-LM loss with fixed masks plus probe accuracy for one parameter set.
CheckpointEval evaluate_params(const MlmModel& model, const ParamVector& params, const LabelledCorpus& heldout,
                               const EvalConfig& cfg);

/// Loads each checkpoint, verifies its recorded digest (ProvenanceMismatch)
/// and that no training id appears in the held-out set (LeakageError).
EvalReport evaluate_checkpoints(const std::vector<std::string>& checkpoints, const LabelledCorpus& heldout,
                                const std::string& heldout_digest, const EvalConfig& cfg);

/// Sample mean and (n - 1) standard deviation; sd is 0 for n < 2.
std::pair<double, double> mean_sd(const std::vector<double>& v);

void write_eval_report(std::ostream& out, const EvalReport& report, const EvalConfig& cfg);

}  // namespace prunekit
