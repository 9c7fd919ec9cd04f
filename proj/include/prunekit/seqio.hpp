#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace prunekit {

using TokenId = std::uint8_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kMaskId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kFirstSymbolId = 3;

enum class AlphabetKind { Rna, Protein };

/// Residue vocabulary. Ids 0..2 are PAD, MASK and UNK; residue symbols follow
/// in listed order starting at id 3.
class Alphabet {
 public:
  static Alphabet rna();
  static Alphabet protein();
  static Alphabet from_name(std::string_view name);  // "rna" | "protein"

  AlphabetKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept;
  std::string_view symbols() const noexcept { return symbols_; }
  std::size_t symbol_count() const noexcept { return symbols_.size(); }
  std::size_t vocab_size() const noexcept { return kFirstSymbolId + symbols_.size(); }

  /// Unknown characters map to UNK.
  TokenId encode(char residue) const noexcept { return lookup_[static_cast<unsigned char>(residue)]; }
  /// Inverse of encode for residue ids; '?' for special ids.
  char decode(TokenId id) const noexcept;

 private:
  Alphabet(AlphabetKind kind, std::string symbols);

  AlphabetKind kind_;
  std::string symbols_;
  std::array<TokenId, 256> lookup_{};
};

struct SequenceRecord {
  std::string id;
  std::string residues;

  bool operator==(const SequenceRecord&) const = default;
};

struct TokenSequence {
  std::size_t sample_id = 0;
  std::vector<TokenId> tokens;

  std::size_t length() const noexcept { return tokens.size(); }
};

struct MaskedExample {
  std::size_t sample_id = 0;
  std::vector<TokenId> input;
  std::vector<TokenId> targets;              // original ids at mask_positions
  std::vector<std::size_t> mask_positions;   // strictly increasing
};

struct FastaOptions {
  bool t_to_u = false;
};

/// Throws MalformedFasta for content before the first header and
/// EmptySequence for a header without residues.
std::vector<SequenceRecord> parse_fasta(std::istream& in, const FastaOptions& opts = {});
std::vector<SequenceRecord> parse_fasta(std::string_view text, const FastaOptions& opts = {});
/// FileNotFound when the path cannot be opened.
std::vector<SequenceRecord> read_fasta_file(const std::string& path, const FastaOptions& opts = {});

void write_fasta(std::ostream& out, const std::vector<SequenceRecord>& records,
                 std::size_t line_width = 60);

TokenSequence tokenize(const SequenceRecord& record, const Alphabet& alphabet,
                       std::size_t max_len, std::size_t sample_id = 0);

std::vector<TokenSequence> tokenize_all(const std::vector<SequenceRecord>& records,
                                        const Alphabet& alphabet, std::size_t max_len);

/// Number of positions masked for a sequence of the given length.
std::size_t mask_count(std::size_t length, double rate);

/// Deterministic in (seed, seq.sample_id). Throws InvalidRate unless 0 < rate <= 1.
MaskedExample mask_tokens(const TokenSequence& seq, double rate, std::uint64_t seed);

}  // namespace prunekit
