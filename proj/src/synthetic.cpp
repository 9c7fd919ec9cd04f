#include "prunekit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

void SyntheticCorpusConfig::validate(std::size_t window) const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  Alphabet::from_name(alphabet);
  if (!(redundancy >= 0.0 && redundancy < 1.0)) fail("redundancy must lie in [0, 1)");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) fail("mutation_rate must lie in [0, 1]");
  if (!(pool_divergence >= 0.0 && pool_divergence <= 1.0)) fail("pool_divergence must lie in [0, 1]");
  if (min_length < 1 || min_length > max_length) fail("need 1 <= min_length <= max_length");
  if (min_length < window) fail("min_length must be >= the context window");
  if (n_classes < 1) fail("n_classes must be >= 1");
  if (seed_pool < 1) fail("seed_pool must be >= 1");
  if (motif_length * motifs_per_sequence > min_length) fail("motifs do not fit into min_length");
  if (motifs_per_sequence > 0 && motif_length < 1) fail("motif_length must be >= 1");
}

namespace {

class Generator {
 public:
  explicit Generator(const SyntheticCorpusConfig& cfg)
      : cfg_(cfg), symbols_(Alphabet::from_name(cfg.alphabet).symbols()) {
    Rng rng(derive_seed(cfg.seed, 0x6d61726bu));
    const std::size_t s = symbols_.size();
    background_ = random_chain(rng, s);
    const auto family = random_chain(rng, s);
    pool_.resize(s * s);
    for (std::size_t i = 0; i < s * s; ++i) {
      pool_[i] = (1.0 - cfg.pool_divergence) * background_[i] + cfg.pool_divergence * family[i];
    }
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      std::string motif;
      for (std::size_t i = 0; i < cfg.motif_length; ++i) motif.push_back(symbols_[rng.below(s)]);
      motifs_.push_back(motif);
    }
  }

  std::string draw(Rng& rng, std::size_t label, bool from_pool = false) const {
    const auto& transition = from_pool ? pool_ : background_;
    const std::size_t s = symbols_.size();
    const std::size_t len = cfg_.min_length + rng.below(cfg_.max_length - cfg_.min_length + 1);
    std::string out;
    std::size_t prev = rng.below(s);
    out.push_back(symbols_[prev]);
    while (out.size() < len) {
      double u = rng.uniform();
      std::size_t next = s - 1;
      for (std::size_t b = 0; b < s; ++b) {
        u -= transition[prev * s + b];
        if (u < 0.0) {
          next = b;
          break;
        }
      }
      out.push_back(symbols_[next]);
      prev = next;
    }
    // One motif per equal segment keeps placements disjoint.
    const std::size_t slots = cfg_.motifs_per_sequence;
    for (std::size_t j = 0; j < slots; ++j) {
      const std::size_t begin = j * len / slots;
      const std::size_t end = (j + 1) * len / slots;
      const std::size_t at = begin + rng.below(end - begin - cfg_.motif_length + 1);
      out.replace(at, cfg_.motif_length, motifs_[label]);
    }
    return out;
  }

  std::string mutate(Rng& rng, const std::string& src) const {
    std::string out = src;
    const std::size_t s = symbols_.size();
    for (auto& ch : out) {
      if (rng.uniform() < cfg_.mutation_rate && s > 1) {
        const std::size_t cur = symbols_.find(ch);
        const std::size_t shift = 1 + rng.below(s - 1);
        ch = symbols_[(cur + shift) % s];
      }
    }
    return out;
  }

 private:
  const SyntheticCorpusConfig& cfg_;
  std::string symbols_;
  static std::vector<double> random_chain(Rng& rng, std::size_t s) {
    std::vector<double> t(s * s);
    for (std::size_t a = 0; a < s; ++a) {
      double total = 0.0;
      for (std::size_t b = 0; b < s; ++b) {
        t[a * s + b] = std::exp(1.5 * rng.normal());
        total += t[a * s + b];
      }
      for (std::size_t b = 0; b < s; ++b) t[a * s + b] /= total;
    }
    return t;
  }

  std::vector<double> background_;
  std::vector<double> pool_;
  std::vector<std::string> motifs_;
};

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
  return buf;
}

}  // namespace

SyntheticCorpus generate_corpus(const SyntheticCorpusConfig& cfg) {
  cfg.validate(1);
  const Generator gen(cfg);
  Rng pool_rng(derive_seed(cfg.seed, 0x706f6f6cu));
  Rng train_rng(derive_seed(cfg.seed, 0x7472616eu));
  Rng held_rng(derive_seed(cfg.seed, 0x68656c64u));

  std::vector<LabelledSequence> pool;
  for (std::size_t p = 0; p < cfg.seed_pool; ++p) {
    const std::size_t label = p % cfg.n_classes;
    pool.push_back({{"", gen.draw(pool_rng, label, true)}, label, Origin::Duplicate, p});
  }

  const auto n_dup = static_cast<std::size_t>(std::llround(cfg.redundancy * static_cast<double>(cfg.n_sequences)));
  SyntheticCorpus out;
  for (std::size_t i = 0; i < cfg.n_sequences - n_dup; ++i) {
    const std::size_t label = train_rng.below(cfg.n_classes);
    out.train.push_back({{"", gen.draw(train_rng, label)}, label, Origin::Unique, 0});
  }
  for (std::size_t i = 0; i < n_dup; ++i) {
    const auto& src = pool[i % pool.size()];
    out.train.push_back({{"", gen.mutate(train_rng, src.record.residues)}, src.label, Origin::Duplicate,
                         src.pool_index});
  }
  train_rng.shuffle(out.train);
  for (std::size_t i = 0; i < out.train.size(); ++i) out.train[i].record.id = make_id("seq", i);

  for (std::size_t i = 0; i < cfg.heldout; ++i) {
    const std::size_t label = held_rng.below(cfg.n_classes);
    out.heldout.push_back({{make_id("held", i), gen.draw(held_rng, label)}, label, Origin::Unique, 0});
  }
  return out;
}

std::size_t hamming_distance(const std::string& a, const std::string& b) {
  const std::size_t common = std::min(a.size(), b.size());
  std::size_t d = std::max(a.size(), b.size()) - common;
  for (std::size_t i = 0; i < common; ++i) d += a[i] != b[i];
  return d;
}

void write_labels(std::ostream& out, const std::vector<LabelledSequence>& seqs) {
  for (const auto& s : seqs) out << s.record.id << '\t' << s.label << '\n';
}

std::vector<std::pair<std::string, std::size_t>> read_labels(std::istream& in) {
  std::vector<std::pair<std::string, std::size_t>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    long long label = -1;
    std::string extra;
    if (!(ls >> id >> label) || label < 0 || (ls >> extra)) {
      throw Error(ErrorCode::MalformedFile, "bad label line '" + line + "'");
    }
    out.emplace_back(id, static_cast<std::size_t>(label));
  }
  return out;
}

std::vector<std::pair<std::string, std::size_t>> read_labels_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path + "'");
  return read_labels(in);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + path + "'");
  return out;
}

std::vector<SequenceRecord> records_of(const std::vector<LabelledSequence>& seqs) {
  std::vector<SequenceRecord> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(s.record);
  return out;
}

}  // namespace

void write_corpus_files(const std::string& prefix, const SyntheticCorpus& corpus) {
  {
    auto out = open_out(prefix + ".fasta");
    write_fasta(out, records_of(corpus.train));
  }
  {
    auto out = open_out(prefix + ".labels.tsv");
    write_labels(out, corpus.train);
  }
  {
    auto out = open_out(prefix + ".origin.tsv");
    for (const auto& s : corpus.train) {
      out << s.record.id << '\t';
      if (s.origin == Origin::Unique) out << "unique\n";
      else out << "duplicate\t" << s.pool_index << '\n';
    }
  }
  if (!corpus.heldout.empty()) {
    auto fasta = open_out(prefix + ".heldout.fasta");
    write_fasta(fasta, records_of(corpus.heldout));
    auto labels = open_out(prefix + ".heldout.labels.tsv");
    write_labels(labels, corpus.heldout);
  }
}

}  // namespace prunekit
