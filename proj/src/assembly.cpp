#include "immunokit/assembly.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>

#include "immunokit/error.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::assembly {

std::string normalize_allele(std::string_view allele) {
  std::string s(trim(allele));
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s.rfind("HLA-", 0) == 0) s.erase(0, 4);
  return s;
}

AlleleMap AlleleMap::bundled() {
  AlleleMap m;
  for (const char* a : {"A*02:01", "A*02:02", "A*02:03", "A*02:06", "A*68:02", "A*69:01"}) {
    m.set(a, "A2");
  }
  for (const char* a : {"A*03:01", "A*11:01", "A*31:01", "A*33:01", "A*68:01"}) m.set(a, "A3");
  for (const char* a : {"B*07:02", "B*35:01", "B*51:01", "B*53:01", "B*54:01"}) m.set(a, "B7");
  return m;
}

AlleleMap AlleleMap::from_csv(std::string_view text) {
  AlleleMap m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != 2) {
      throw ValidationError("allele map line " + std::to_string(line_no) +
                            ": expected `allele,supertype`");
    }
    if (header) {
      header = false;
      if (normalize_allele(fields[0]) == "ALLELE") continue;
    }
    const auto supertype = std::string(trim(fields[1]));
    if (trim(fields[0]).empty() || supertype.empty()) {
      throw ValidationError("allele map line " + std::to_string(line_no) + ": empty field");
    }
    m.set(fields[0], supertype);
  }
  return m;
}

AlleleMap AlleleMap::load(const std::filesystem::path& path) { return from_csv(read_file(path)); }

void AlleleMap::set(std::string_view allele, std::string supertype) {
  entries_[normalize_allele(allele)] = std::move(supertype);
}

void AlleleMap::merge(const AlleleMap& other) {
  for (const auto& [a, s] : other.entries_) entries_[a] = s;
}

std::optional<std::string> AlleleMap::supertype_of(std::string_view allele) const {
  const auto it = entries_.find(normalize_allele(allele));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

VaccineCandidate make_candidate(std::vector<pipeline::SelectorScore> epitopes,
                                const SupertypeRequirement& req) {
  VaccineCandidate c;
  c.epitopes = std::move(epitopes);
  c.required = req.required;
  for (std::size_t i = 0; i < c.epitopes.size(); ++i) {
    c.total_priority += c.epitopes[i].priority;
    const auto st = req.allele_map.supertype_of(c.epitopes[i].epitope.hla_allele);
    if (st && req.required.count(*st)) c.coverage[*st].push_back(i);
  }
  for (const auto& st : req.required) {
    if (!c.coverage.count(st)) c.missing.insert(st);
  }
  return c;
}

VaccineCandidate assemble(const std::vector<pipeline::SelectorScore>& pool,
                          const SupertypeRequirement& req, std::size_t k) {
  if (pool.empty()) throw ValidationError("epitope pool is empty");
  if (k == 0) throw ValidationError("k must be at least 1");

  std::vector<pipeline::SelectorScore> ranked = pool;
  std::stable_sort(ranked.begin(), ranked.end(), pipeline::ranks_before);
  std::vector<pipeline::SelectorScore> unique;
  std::set<seqdata::Peptide> seen;
  for (auto& s : ranked) {
    if (seen.insert(s.epitope.peptide).second) unique.push_back(std::move(s));
  }

  std::vector<bool> taken(unique.size(), false);
  std::set<std::string> covered;
  std::size_t count = 0;
  // `unique` is in rank order, so the first epitope seen for a supertype is
  // its best, and supertypes are reached in order of their best epitope.
  for (std::size_t i = 0; i < unique.size() && count < k; ++i) {
    const auto st = req.allele_map.supertype_of(unique[i].epitope.hla_allele);
    if (!st || !req.required.count(*st) || covered.count(*st)) continue;
    covered.insert(*st);
    taken[i] = true;
    ++count;
  }
  for (std::size_t i = 0; i < unique.size() && count < k; ++i) {
    if (!taken[i]) {
      taken[i] = true;
      ++count;
    }
  }
  std::vector<pipeline::SelectorScore> chosen;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    if (taken[i]) chosen.push_back(unique[i]);
  }
  return make_candidate(std::move(chosen), req);
}

std::string coverage_report(const VaccineCandidate& c) {
  std::size_t width = std::string("supertype").size();
  for (const auto& st : c.required) width = std::max(width, st.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "supertype" << "  epitopes\n";
  for (const auto& st : c.required) {
    out << std::left << std::setw(static_cast<int>(width)) << st << "  ";
    const auto it = c.coverage.find(st);
    if (it == c.coverage.end()) {
      out << "MISSING";
    } else {
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        const auto& e = c.epitopes[it->second[j]].epitope;
        out << (j ? ", " : "") << e.peptide.str() << " (" << e.hla_allele << ")";
      }
    }
    out << '\n';
  }
  out << "total_priority " << format_number(c.total_priority) << '\n';
  return out.str();
}

nlohmann::ordered_json candidate_json(const VaccineCandidate& c) {
  nlohmann::ordered_json j;
  j["epitopes"] = nlohmann::ordered_json::array();
  for (const auto& s : c.epitopes) {
    nlohmann::ordered_json e;
    e["peptide"] = s.epitope.peptide.str();
    e["hla_allele"] = s.epitope.hla_allele;
    e["priority"] = s.priority;
    j["epitopes"].push_back(e);
  }
  j["coverage"] = nlohmann::ordered_json::object();
  for (const auto& [st, idx] : c.coverage) j["coverage"][st] = idx;
  j["missing"] = c.missing;
  j["total_priority"] = c.total_priority;
  return j;
}

}  // namespace immunokit::assembly
