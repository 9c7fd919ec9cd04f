#pragma once

// Library side of the prunekit subcommands. Each takes a finalized
// PipelineConfig, writes its primary artifact plus sidecars, and reports
// progress on `log`. Failures surface as prunekit::Error.

#include <iosfwd>
#include <string>
#include <vector>

#include "prunekit/config.hpp"
#include "prunekit/coreset.hpp"
#include "prunekit/evaluate.hpp"
#include "prunekit/influence.hpp"
#include "prunekit/optim.hpp"
#include "prunekit/oracle.hpp"
#include "prunekit/synthetic.hpp"

namespace prunekit {

/// <prefix>.fasta, .labels.tsv, .origin.tsv and the held-out pair.
SyntheticCorpus cmd_gen(const PipelineConfig& cfg, const std::string& prefix, std::ostream& log);

/// scores.tsv plus <out>.meta. The model starts from init_checkpoint when
/// given, else from a seed-derived initialization.
ScoreResult cmd_score(const PipelineConfig& cfg, const std::string& corpus_path, const std::string& out_path,
                      std::ostream& log, const std::string& init_checkpoint = "");

/// Coreset file (and .alloc.tsv for CCI) referencing the score-file digest.
Coreset cmd_select(const PipelineConfig& cfg, const std::string& scores_path, const std::string& out_path,
                   std::ostream& log);

/// Trains from init_params(model, train seed) on the coreset members only.
/// Writes the checkpoint, <out>.loss.tsv, <out>.meta and <out>.ids.
/// IdNotInCorpus for foreign ids; ProvenanceMismatch when the coreset was
/// scored on a different corpus.
TrainResult cmd_pretrain(const PipelineConfig& cfg, const std::string& corpus_path, const std::string& coreset_path,
                         const std::string& out_path, std::ostream& log);

EvalReport cmd_eval(const PipelineConfig& cfg, const std::vector<std::string>& checkpoints,
                    const std::string& heldout_fasta, const std::string& heldout_labels, const std::string& out_path,
                    std::ostream& log);

/// oracle.instance = default | orthogonal. The orthogonal instance always
/// scores with the full dataset as its subset.
OracleReport cmd_oracle(const PipelineConfig& cfg, const std::string& out_path, std::ostream& log);

/// Reads <path>.meta key=value pairs; empty map when absent.
std::vector<std::pair<std::string, std::string>> read_sidecar(const std::string& path);

}  // namespace prunekit
