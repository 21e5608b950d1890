#include "immunokit/seqdata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "immunokit/error.hpp"
#include "immunokit/rng.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::seqdata {

namespace {

constexpr std::string_view kRequiredColumns[] = {"peptide", "hla_allele", "affinity_nm",
                                                 "conservation_pct", "immunogenic"};

char upper(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }

std::string row_context(std::size_t row) { return "row " + std::to_string(row); }

EpitopeRecord make_record(std::string_view peptide, std::string_view allele, double affinity,
                          double conservation, double immunogenic, std::optional<double> score,
                          std::size_t row) {
  if (immunogenic != 0.0 && immunogenic != 1.0) {
    throw ValidationError(row_context(row) + ": immunogenic must be 0 or 1");
  }
  try {
    EpitopeRecord record{Peptide(peptide), std::string(allele), affinity, conservation,
                         static_cast<int>(immunogenic), score};
    record.validate();
    return record;
  } catch (const ValidationError& e) {
    throw ValidationError(row_context(row) + ": " + e.what());
  }
}

Dataset parse_csv(std::string_view text) {
  Dataset data;
  std::vector<std::string_view> lines = split(text, '\n');
  std::size_t line_no = 0;
  while (line_no < lines.size() && trim(lines[line_no]).empty()) ++line_no;
  if (line_no == lines.size()) throw ValidationError("CSV input has no header row");

  std::vector<std::string> header;
  for (auto field : split(trim(lines[line_no]), ',')) header.emplace_back(trim(field));
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  std::size_t index[5];
  for (std::size_t i = 0; i < 5; ++i) {
    auto c = column(kRequiredColumns[i]);
    if (!c) throw ValidationError("missing column '" + std::string(kRequiredColumns[i]) + "'");
    index[i] = *c;
  }
  const auto score_column = column("score");

  std::size_t row = 0;
  for (++line_no; line_no < lines.size(); ++line_no) {
    const std::string_view line = trim(lines[line_no]);
    if (line.empty()) continue;
    ++row;
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw ValidationError(row_context(row) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
    }
    double numbers[3];
    for (std::size_t k = 0; k < 3; ++k) {
      const std::string_view raw = fields[index[2 + k]];
      if (!parse_number(raw, numbers[k])) {
        throw ValidationError(row_context(row) + ": unparseable " +
                              std::string(kRequiredColumns[2 + k]) + " '" + std::string(raw) +
                              "'");
      }
    }
    std::optional<double> score;
    if (score_column && !trim(fields[*score_column]).empty()) {
      double s = 0.0;
      if (!parse_number(fields[*score_column], s)) {
        throw ValidationError(row_context(row) + ": unparseable score '" +
                              std::string(fields[*score_column]) + "'");
      }
      score = s;
    }
    data.records.push_back(make_record(trim(fields[index[0]]), trim(fields[index[1]]), numbers[0],
                                       numbers[1], numbers[2], score, row));
  }
  return data;
}

Dataset parse_jsonl(std::string_view text) {
  Dataset data;
  std::size_t row = 0;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    ++row;
    nlohmann::json object;
    try {
      object = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(row_context(row) + ": invalid JSON: " + e.what());
    }
    if (!object.is_object()) throw ValidationError(row_context(row) + ": expected a JSON object");
    for (auto key : kRequiredColumns) {
      if (!object.contains(key)) {
        throw ValidationError(row_context(row) + ": missing key '" + std::string(key) + "'");
      }
    }
    auto number = [&](std::string_view key) {
      const auto& value = object.at(std::string(key));
      if (value.is_boolean()) return value.get<bool>() ? 1.0 : 0.0;
      if (!value.is_number()) {
        throw ValidationError(row_context(row) + ": unparseable " + std::string(key));
      }
      return value.get<double>();
    };
    auto text_field = [&](std::string_view key) {
      const auto& value = object.at(std::string(key));
      if (!value.is_string()) {
        throw ValidationError(row_context(row) + ": " + std::string(key) + " must be a string");
      }
      return value.get<std::string>();
    };
    std::optional<double> score;
    if (object.contains("score") && !object.at("score").is_null()) score = number("score");
    data.records.push_back(make_record(text_field("peptide"), text_field("hla_allele"),
                                       number("affinity_nm"), number("conservation_pct"),
                                       number("immunogenic"), score, row));
  }
  return data;
}

std::vector<EpitopeRecord> select(const Dataset& data, bool train) {
  if (!data.split) throw ValidationError("dataset has no train/test split");
  const auto& indices = train ? data.split->train : data.split->test;
  std::vector<EpitopeRecord> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(data.records.at(i));
  return out;
}

char draw_excluding(Rng& rng, std::string_view excluded) {
  while (true) {
    const char c = kAminoAcids[rng.below(kAlphabetSize)];
    if (excluded.find(c) == std::string_view::npos) return c;
  }
}

}  // namespace

int residue_index(char residue) {
  const auto pos = kAminoAcids.find(residue);
  return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

Peptide::Peptide(std::string_view residues) {
  if (residues.empty()) throw ValidationError("peptide must have at least one residue");
  residues_.reserve(residues.size());
  for (std::size_t i = 0; i < residues.size(); ++i) {
    const char c = upper(residues[i]);
    if (residue_index(c) < 0) {
      throw ValidationError("non-canonical residue '" + std::string(1, residues[i]) +
                            "' at position " + std::to_string(i + 1));
    }
    residues_.push_back(c);
  }
}

std::vector<std::size_t> Peptide::indices() const {
  std::vector<std::size_t> out(residues_.size());
  for (std::size_t i = 0; i < residues_.size(); ++i) {
    out[i] = static_cast<std::size_t>(residue_index(residues_[i]));
  }
  return out;
}

void EpitopeRecord::validate() const {
  if (!(affinity_nm > 0.0) || !std::isfinite(affinity_nm)) {
    throw ValidationError("affinity_nm must be positive, got " + format_number(affinity_nm));
  }
  if (!(conservation_pct >= 0.0 && conservation_pct <= 100.0)) {
    throw ValidationError("conservation_pct must lie in [0, 100], got " +
                          format_number(conservation_pct));
  }
  if (immunogenic != 0 && immunogenic != 1) throw ValidationError("immunogenic must be 0 or 1");
  if (score && !(*score >= 0.0 && *score <= 1.0)) {
    throw ValidationError("score must lie in [0, 1], got " + format_number(*score));
  }
  if (hla_allele.empty()) throw ValidationError("hla_allele must not be empty");
  if (hla_allele.find(',') != std::string::npos) {
    throw ValidationError("hla_allele must not contain ','");
  }
}

std::vector<EpitopeRecord> Dataset::train_records() const { return select(*this, true); }
std::vector<EpitopeRecord> Dataset::test_records() const { return select(*this, false); }

RecordFormat parse_record_format(std::string_view name) {
  if (name == "csv") return RecordFormat::csv;
  if (name == "jsonl") return RecordFormat::jsonl;
  throw ValidationError("unknown record format '" + std::string(name) + "'");
}

RecordFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return RecordFormat::jsonl;
  return RecordFormat::csv;
}

std::vector<Peptide> parse_fasta(std::string_view text) {
  std::vector<Peptide> peptides;
  std::string sequence;
  std::string header;
  std::size_t record = 0;
  bool open = false;

  auto flush = [&] {
    if (!open) return;
    if (sequence.empty()) {
      throw ValidationError("FASTA record " + std::to_string(record) + " ('" + header +
                            "'): empty sequence");
    }
    try {
      peptides.emplace_back(sequence);
    } catch (const ValidationError& e) {
      throw ValidationError("FASTA record " + std::to_string(record) + " ('" + header +
                            "'): " + e.what());
    }
    sequence.clear();
  };

  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() == '>') {
      flush();
      ++record;
      header = std::string(trim(line.substr(1)));
      if (header.empty()) {
        throw ValidationError("FASTA record " + std::to_string(record) + ": malformed header");
      }
      open = true;
      continue;
    }
    for (char c : line) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      if (!open) {
        throw ValidationError("FASTA record " + std::to_string(record + 1) +
                              ": malformed header (sequence data before '>')");
      }
      sequence.push_back(c);
    }
  }
  flush();
  return peptides;
}

void write_fasta(std::ostream& out, const std::vector<FastaEntry>& entries) {
  for (const auto& entry : entries) out << '>' << entry.header << '\n' << entry.sequence << '\n';
}

Dataset parse_records(std::string_view text, RecordFormat format) {
  return format == RecordFormat::csv ? parse_csv(text) : parse_jsonl(text);
}

Dataset load_records(const std::filesystem::path& path, RecordFormat format) {
  try {
    return parse_records(read_file(path), format);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_records(std::ostream& out, const std::vector<EpitopeRecord>& records,
                   RecordFormat format) {
  if (format == RecordFormat::jsonl) {
    for (const auto& r : records) {
      nlohmann::ordered_json object;
      object["peptide"] = r.peptide.str();
      object["hla_allele"] = r.hla_allele;
      object["affinity_nm"] = r.affinity_nm;
      object["conservation_pct"] = r.conservation_pct;
      object["immunogenic"] = r.immunogenic;
      if (r.score) object["score"] = *r.score;
      out << object.dump() << '\n';
    }
    return;
  }
  const bool with_score =
      std::any_of(records.begin(), records.end(), [](const auto& r) { return r.score.has_value(); });
  out << "peptide,hla_allele,affinity_nm,conservation_pct,immunogenic";
  if (with_score) out << ",score";
  out << '\n';
  for (const auto& r : records) {
    out << r.peptide.str() << ',' << r.hla_allele << ',' << format_number(r.affinity_nm) << ','
        << format_number(r.conservation_pct) << ',' << r.immunogenic;
    if (with_score) {
      out << ',';
      if (r.score) out << format_number(*r.score);
    }
    out << '\n';
  }
}

std::string records_to_string(const std::vector<EpitopeRecord>& records, RecordFormat format) {
  std::ostringstream out;
  write_records(out, records, format);
  return out.str();
}

Dataset split_dataset(Dataset data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie in (0, 1), got " +
                          format_number(train_fraction));
  }
  const std::size_t n = data.records.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n < 2 || n_train == 0 || n_train == n) {
    throw ValidationError("dataset of " + std::to_string(n) +
                          " records is too small for a non-empty train/test split at fraction " +
                          format_number(train_fraction));
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = data.records[i];
    if (!seen.emplace(r.peptide.str(), r.hla_allele).second) {
      throw ValidationError("duplicate (peptide, allele) pair (" + r.peptide.str() + ", " +
                            r.hla_allele + ") at record " + std::to_string(i + 1));
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  Split split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  data.split = std::move(split);
  return data;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 4) throw ValidationError("synthetic corpus needs n >= 4");
  if (spec.motif.empty()) throw ValidationError("motif must not be empty");
  const Peptide motif(spec.motif);
  const std::size_t length = spec.peptide_length;
  if (length < 8 || length > 15) throw ValidationError("peptide length must lie in [8, 15]");
  if (motif.size() >= length) throw ValidationError("motif must be shorter than the peptide");
  if (!(spec.signal_strength >= 0.0 && spec.signal_strength <= 1.0)) {
    throw ValidationError("signal_strength must lie in [0, 1]");
  }

  Rng rng(spec.seed);
  std::vector<int> labels(spec.n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(spec.n / 2), 1);
  for (std::size_t i = spec.n - 1; i > 0; --i) std::swap(labels[i], labels[rng.below(i + 1)]);

  // Interior placement keeps the motif off both anchor positions.
  const std::size_t m = motif.size();
  const bool interior = m + 3 <= length;
  const std::size_t first_start = interior ? 2 : 0;
  const std::size_t last_start = interior ? length - 1 - m : length - m;

  Dataset data;
  data.records.reserve(spec.n);
  std::set<std::pair<std::string, std::string>> seen;
  for (int label : labels) {
    const double p = label == 1 ? spec.signal_strength : 1.0 - spec.signal_strength;
    const bool has_motif = rng.bernoulli(p);
    const bool has_p2 = rng.bernoulli(p);
    const bool has_cterm = rng.bernoulli(p);
    const std::string allele(kSyntheticAlleles[rng.below(std::size(kSyntheticAlleles))]);

    std::string residues(length, 'A');
    while (true) {
      for (auto& c : residues) c = kAminoAcids[rng.below(kAlphabetSize)];
      residues[1] = has_p2 ? kP2Anchors[rng.below(kP2Anchors.size())]
                           : draw_excluding(rng, kP2Anchors);
      residues[length - 1] = has_cterm ? kCTermAnchors[rng.below(kCTermAnchors.size())]
                                       : draw_excluding(rng, kCTermAnchors);
      if (has_motif) {
        const std::size_t start = first_start + rng.below(last_start - first_start + 1);
        residues.replace(start, m, motif.str());
      } else if (residues.find(motif.str()) != std::string::npos) {
        continue;
      }
      if (seen.emplace(residues, allele).second) break;
    }

    double affinity_log10 = 0.0;
    double conservation = 0.0;
    if (label == 1) {
      affinity_log10 = rng.uniform(1.0, 2.0);
      conservation = rng.uniform(60.0, 100.0);
    } else {
      affinity_log10 = rng.uniform(std::log10(500.0), std::log10(50000.0));
      conservation = rng.uniform(0.0, 80.0);
    }
    data.records.push_back(EpitopeRecord{Peptide(residues), allele, std::pow(10.0, affinity_log10),
                                         conservation, label, std::nullopt});
  }
  return data;
}

}  // namespace immunokit::seqdata
