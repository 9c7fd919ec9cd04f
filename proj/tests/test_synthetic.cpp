#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "prunekit/synthetic.hpp"
#include "support.hpp"

using namespace prunekit;

TEST_SUITE("synthetic") {

TEST_CASE("duplicate count follows the redundancy rate") {
  SyntheticCorpusConfig cfg;
  cfg.heldout = 0;
  const auto corpus = generate_corpus(cfg);
  CHECK(corpus.train.size() == 10000);
  const auto dups = std::count_if(corpus.train.begin(), corpus.train.end(),
                                  [](const LabelledSequence& s) { return s.origin == Origin::Duplicate; });
  CHECK(dups == 9000);
}

TEST_CASE("no redundancy means distinct sequences") {
  SyntheticCorpusConfig cfg;
  cfg.n_sequences = 300;
  cfg.redundancy = 0.0;
  cfg.heldout = 0;
  const auto corpus = generate_corpus(cfg);
  // A duplicate differs from its source at about mutation_rate * length positions.
  const std::size_t threshold = 2 * static_cast<std::size_t>(cfg.mutation_rate * static_cast<double>(cfg.max_length));
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    REQUIRE(corpus.train[i].origin == Origin::Unique);
    for (std::size_t j = i + 1; j < corpus.train.size(); ++j) {
      REQUIRE(hamming_distance(corpus.train[i].record.residues, corpus.train[j].record.residues) > threshold);
    }
  }
}

TEST_CASE("records respect the length and motif settings") {
  SyntheticCorpusConfig cfg;
  cfg.n_sequences = 500;
  cfg.heldout = 50;
  const auto corpus = generate_corpus(cfg);
  CHECK(corpus.heldout.size() == 50);
  for (const auto& s : corpus.train) {
    CHECK(s.record.residues.size() >= cfg.min_length);
    CHECK(s.record.residues.size() <= cfg.max_length);
    CHECK(s.label < cfg.n_classes);
    CHECK(s.record.residues.find_first_not_of("ACGU") == std::string::npos);
  }
  CHECK(corpus.train[0].record.id == "seq000000");
  CHECK(corpus.heldout[0].record.id == "held000000");
}

TEST_CASE("generation is deterministic per seed") {
  SyntheticCorpusConfig cfg;
  cfg.n_sequences = 400;
  cfg.heldout = 20;
  testsupport::TempDir dir("gen");
  write_corpus_files(dir.file("a"), generate_corpus(cfg));
  write_corpus_files(dir.file("b"), generate_corpus(cfg));
  CHECK(testsupport::slurp(dir.file("a.fasta")) == testsupport::slurp(dir.file("b.fasta")));
  CHECK(testsupport::slurp(dir.file("a.heldout.labels.tsv")) == testsupport::slurp(dir.file("b.heldout.labels.tsv")));
  cfg.seed = 1;
  write_corpus_files(dir.file("c"), generate_corpus(cfg));
  CHECK(testsupport::slurp(dir.file("a.fasta")) != testsupport::slurp(dir.file("c.fasta")));

  const auto labels = read_labels_file(dir.file("a.labels.tsv"));
  CHECK(labels.size() == 400);
}

TEST_CASE("invalid settings") {
  SyntheticCorpusConfig cfg;
  cfg.redundancy = 1.0;
  CHECK_THROWS(cfg.validate());
  cfg.redundancy = 0.5;
  cfg.min_length = 3;
  CHECK_THROWS(cfg.validate(5));
  std::istringstream bad("seq1\tx\n");
  CHECK_THROWS(read_labels(bad));
}

}
