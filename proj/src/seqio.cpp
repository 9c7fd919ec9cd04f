#include "prunekit/seqio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

Alphabet::Alphabet(AlphabetKind kind, std::string symbols) : kind_(kind), symbols_(std::move(symbols)) {
  lookup_.fill(kUnkId);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto id = static_cast<TokenId>(kFirstSymbolId + i);
    lookup_[static_cast<unsigned char>(symbols_[i])] = id;
    lookup_[static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(symbols_[i])))] = id;
  }
}

Alphabet Alphabet::rna() { return Alphabet(AlphabetKind::Rna, "ACGU"); }

Alphabet Alphabet::protein() { return Alphabet(AlphabetKind::Protein, "ACDEFGHIKLMNPQRSTVWY"); }

Alphabet Alphabet::from_name(std::string_view name) {
  if (name == "rna") return rna();
  if (name == "protein") return protein();
  throw Error(ErrorCode::InvalidConfig, "unknown alphabet '" + std::string(name) + "'");
}

std::string_view Alphabet::name() const noexcept {
  return kind_ == AlphabetKind::Rna ? "rna" : "protein";
}

char Alphabet::decode(TokenId id) const noexcept {
  if (id < kFirstSymbolId || id >= vocab_size()) return '?';
  return symbols_[id - kFirstSymbolId];
}

std::vector<SequenceRecord> parse_fasta(std::istream& in, const FastaOptions& opts) {
  std::vector<SequenceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool open = false;

  auto close_record = [&] {
    if (open && records.back().residues.empty()) {
      throw Error(ErrorCode::EmptySequence, "record '" + records.back().id + "' has no residues");
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() == '>') {
      close_record();
      std::string_view header(line);
      header.remove_prefix(1);
      const auto begin = header.find_first_not_of(" \t");
      std::string id;
      if (begin != std::string_view::npos) {
        header.remove_prefix(begin);
        id = std::string(header.substr(0, header.find_first_of(" \t")));
      }
      records.push_back({std::move(id), {}});
      open = true;
      continue;
    }
    std::string residues;
    residues.reserve(line.size());
    for (const char c : line) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (opts.t_to_u && u == 'T') u = 'U';
      residues.push_back(u);
    }
    if (residues.empty()) continue;
    if (!open) {
      throw Error(ErrorCode::MalformedFasta,
                  "line " + std::to_string(line_no) + ": sequence data before the first '>' header");
    }
    records.back().residues += residues;
  }
  close_record();
  return records;
}

std::vector<SequenceRecord> parse_fasta(std::string_view text, const FastaOptions& opts) {
  std::istringstream in{std::string(text)};
  return parse_fasta(in, opts);
}

std::vector<SequenceRecord> read_fasta_file(const std::string& path, const FastaOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path + "'");
  return parse_fasta(in, opts);
}

void write_fasta(std::ostream& out, const std::vector<SequenceRecord>& records, std::size_t line_width) {
  if (line_width == 0) line_width = std::string::npos;
  for (const auto& r : records) {
    out << '>' << r.id << '\n';
    for (std::size_t i = 0; i < r.residues.size(); i += line_width) {
      out << std::string_view(r.residues).substr(i, line_width) << '\n';
    }
  }
}

TokenSequence tokenize(const SequenceRecord& record, const Alphabet& alphabet, std::size_t max_len,
                       std::size_t sample_id) {
  TokenSequence seq;
  seq.sample_id = sample_id;
  const std::size_t n = std::min(record.residues.size(), max_len);
  seq.tokens.reserve(n);
  for (std::size_t i = 0; i < n; ++i) seq.tokens.push_back(alphabet.encode(record.residues[i]));
  return seq;
}

std::vector<TokenSequence> tokenize_all(const std::vector<SequenceRecord>& records,
                                        const Alphabet& alphabet, std::size_t max_len) {
  std::vector<TokenSequence> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back(tokenize(records[i], alphabet, max_len, i));
  return out;
}

std::size_t mask_count(std::size_t length, double rate) {
  const auto rounded = static_cast<std::size_t>(std::llround(rate * static_cast<double>(length)));
  return std::clamp<std::size_t>(rounded, 1, length);
}

MaskedExample mask_tokens(const TokenSequence& seq, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw Error(ErrorCode::InvalidRate, "mask rate must lie in (0, 1], got " + std::to_string(rate));
  }
  if (seq.tokens.empty()) throw Error(ErrorCode::EmptySequence, "cannot mask an empty sequence");

  Rng rng(derive_seed(seed, seq.sample_id));
  auto positions = rng.sample_without_replacement(seq.length(), mask_count(seq.length(), rate));
  std::sort(positions.begin(), positions.end());

  MaskedExample ex;
  ex.sample_id = seq.sample_id;
  ex.input = seq.tokens;
  ex.targets.reserve(positions.size());
  for (const auto p : positions) {
    ex.targets.push_back(seq.tokens[p]);
    ex.input[p] = kMaskId;
  }
  ex.mask_positions = std::move(positions);
  return ex;
}

}  // namespace prunekit
