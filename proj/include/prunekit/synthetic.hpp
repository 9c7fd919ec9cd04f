#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prunekit/seqio.hpp"

namespace prunekit {

struct SyntheticCorpusConfig {
  std::string alphabet = "rna";
  std::size_t n_sequences = 10000;
  std::size_t min_length = 40;
  std::size_t max_length = 80;
  std::size_t n_classes = 4;
  double redundancy = 0.9;      // share of near-duplicates of the seed pool
  double mutation_rate = 0.05;  // per-residue substitution probability for duplicates
  std::size_t seed_pool = 20;
  /// Seed-pool residues follow (1 - d) * background + d * family transitions;
  /// 0 draws the pool from the same chain as unique sequences.
  double pool_divergence = 1.0;
  std::size_t motif_length = 6;
  std::size_t motifs_per_sequence = 3;
  std::size_t heldout = 1000;   // unique labelled sequences written separately
  std::uint64_t seed = 0;

  /// InvalidConfig on violated invariants (0 <= redundancy < 1,
  /// min_length >= window, motifs fit inside min_length, ...).
  void validate(std::size_t window = 5) const;
};

enum class Origin { Unique, Duplicate };

struct LabelledSequence {
  SequenceRecord record;
  std::size_t label = 0;
  Origin origin = Origin::Unique;
  std::size_t pool_index = 0;  // seed-pool member for duplicates
};

struct SyntheticCorpus {
  std::vector<LabelledSequence> train;
  std::vector<LabelledSequence> heldout;
};

/// Residues follow a first-order Markov chain with class motifs planted at
/// random non-overlapping offsets. Unique and held-out sequences use the
/// background chain; the seed pool uses the family mixture. Exactly round(n * redundancy)
/// training records are mutated copies of seed-pool members (round robin over
/// the pool); the rest and the held-out set are fresh draws. Deterministic per seed.
SyntheticCorpus generate_corpus(const SyntheticCorpusConfig& cfg);

/// Hamming distance over the common prefix plus the length difference.
std::size_t hamming_distance(const std::string& a, const std::string& b);

/// id\tclass per line, no header.
void write_labels(std::ostream& out, const std::vector<LabelledSequence>& seqs);
std::vector<std::pair<std::string, std::size_t>> read_labels(std::istream& in);
std::vector<std::pair<std::string, std::size_t>> read_labels_file(const std::string& path);

/// Writes <prefix>.fasta, <prefix>.labels.tsv, <prefix>.origin.tsv and, when
/// the held-out set is non-empty, <prefix>.heldout.fasta / .heldout.labels.tsv.
void write_corpus_files(const std::string& prefix, const SyntheticCorpus& corpus);

}  // namespace prunekit
