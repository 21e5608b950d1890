#pragma once

// Peptide and epitope-record types, FASTA/CSV/JSONL ingestion, seeded
// train/test splitting and the synthetic corpus generator.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace immunokit::seqdata {

// The 20 canonical one-letter amino-acid codes, in index order.
inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr std::size_t kAlphabetSize = 20;
inline constexpr std::size_t kDefaultPeptideLength = 9;

// Index of `residue` in kAminoAcids (upper case only), or -1.
int residue_index(char residue);

class Peptide {
 public:
  // Throws ValidationError on empty input or a non-canonical residue.
  // Lower-case letters are accepted and upper-cased.
  explicit Peptide(std::string_view residues);

  const std::string& str() const { return residues_; }
  std::size_t size() const { return residues_.size(); }
  char operator[](std::size_t i) const { return residues_[i]; }
  bool contains(std::string_view fragment) const {
    return residues_.find(fragment) != std::string::npos;
  }
  // Residue indices into kAminoAcids.
  std::vector<std::size_t> indices() const;

  auto operator<=>(const Peptide&) const = default;

 private:
  std::string residues_;
};

struct EpitopeRecord {
  Peptide peptide;
  std::string hla_allele;
  double affinity_nm = 1.0;
  double conservation_pct = 0.0;
  int immunogenic = 0;
  std::optional<double> score;

  // Throws ValidationError describing the first violated field invariant.
  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct Dataset {
  std::vector<EpitopeRecord> records;
  std::optional<Split> split;

  std::size_t size() const { return records.size(); }
  // Throw ValidationError when the dataset has no split.
  std::vector<EpitopeRecord> train_records() const;
  std::vector<EpitopeRecord> test_records() const;
};

enum class RecordFormat { csv, jsonl };

// Parses "csv" / "jsonl"; also infers from a path extension.
RecordFormat parse_record_format(std::string_view name);
RecordFormat format_from_path(const std::filesystem::path& path);

// FASTA text -> peptides in entry order. Header text is discarded;
// sequence whitespace is stripped and residues upper-cased.
std::vector<Peptide> parse_fasta(std::string_view text);

struct FastaEntry {
  std::string header;
  std::string sequence;
};
void write_fasta(std::ostream& out, const std::vector<FastaEntry>& entries);

Dataset parse_records(std::string_view text, RecordFormat format);
Dataset load_records(const std::filesystem::path& path, RecordFormat format);
void write_records(std::ostream& out, const std::vector<EpitopeRecord>& records,
                   RecordFormat format);
std::string records_to_string(const std::vector<EpitopeRecord>& records, RecordFormat format);

// Seeded uniform shuffle then prefix cut; train size = round(fraction * N).
// Rejects datasets containing a duplicated (peptide, allele) pair.
Dataset split_dataset(Dataset data, double train_fraction, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n = 5000;
  std::string motif = "RWY";
  double signal_strength = 0.9;
  std::uint64_t seed = 7;
  std::size_t peptide_length = kDefaultPeptideLength;
};

// Residues planted at the P2 and C-terminal anchor positions of
// anchor-bearing peptides.
inline constexpr std::string_view kP2Anchors = "LM";
inline constexpr std::string_view kCTermAnchors = "VL";
// Alleles assigned uniformly to synthetic records.
inline constexpr std::string_view kSyntheticAlleles[] = {"HLA-A*02:01", "HLA-A*03:01",
                                                         "HLA-B*07:02"};

// Balanced corpus (n/2 positives) with three planted signal channels,
// each present with probability `signal_strength` in positives and
// 1 - signal_strength in negatives: the motif at a random interior offset,
// a P2 anchor, and a C-terminal anchor. Positives get affinity log-uniform in
// [10, 100] nM and conservation U[60, 100]; negatives log-uniform in
// [500, 50000] nM and U[0, 80].
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace immunokit::seqdata
