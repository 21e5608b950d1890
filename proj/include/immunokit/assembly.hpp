#pragma once

// Coverage-first selection of a multi-epitope candidate from scored
// epitopes. Each epitope counts toward the supertype of its allele.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "immunokit/pipeline/selector.hpp"

namespace immunokit::assembly {

// Allele -> supertype lookup. Names match with or without the "HLA-" prefix.
class AlleleMap {
 public:
  // Seeded with common members of the A2, A3 and B7 supertypes.
  static AlleleMap bundled();
  // CSV with header `allele,supertype`; rows replace bundled entries when
  // merged with `merge`.
  static AlleleMap from_csv(std::string_view text);
  static AlleleMap load(const std::filesystem::path& path);

  void set(std::string_view allele, std::string supertype);
  void merge(const AlleleMap& other);
  std::optional<std::string> supertype_of(std::string_view allele) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;  // keyed by normalized allele
};

std::string normalize_allele(std::string_view allele);

struct SupertypeRequirement {
  std::set<std::string> required{"A2", "A3", "B7"};
  AlleleMap allele_map = AlleleMap::bundled();
};

struct VaccineCandidate {
  std::vector<pipeline::SelectorScore> epitopes;
  std::set<std::string> required;
  // Supertype -> indices into `epitopes`.
  std::map<std::string, std::vector<std::size_t>> coverage;
  std::set<std::string> missing;
  double total_priority = 0.0;
};

// Builds coverage/missing/total_priority for a chosen epitope list.
VaccineCandidate make_candidate(std::vector<pipeline::SelectorScore> epitopes,
                                const SupertypeRequirement& req);

// Pool entries sharing a peptide collapse to the highest-ranked one. Then:
// for each required supertype coverable from the pool, in order of its best
// epitope's rank, take that epitope (while fewer than k are taken); then fill
// with the best remaining epitopes up to min(k, pool size).
// Throws ValidationError on an empty pool or k = 0.
VaccineCandidate assemble(const std::vector<pipeline::SelectorScore>& pool,
                          const SupertypeRequirement& req, std::size_t k);

// One row per required supertype with the covering peptide or MISSING,
// then the total priority.
std::string coverage_report(const VaccineCandidate& candidate);

nlohmann::ordered_json candidate_json(const VaccineCandidate& candidate);

}  // namespace immunokit::assembly
