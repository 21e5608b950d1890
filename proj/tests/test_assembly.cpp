#include <doctest.h>

#include <cmath>
#include <set>

#include "assembly_oracle.hpp"
#include "immunokit/assembly.hpp"
#include "immunokit/error.hpp"
#include "immunokit/rng.hpp"

using namespace immunokit;
using namespace immunokit::assembly;
using pipeline::SelectorScore;

namespace {

constexpr const char* kAlleles[] = {"HLA-A*02:01", "HLA-A*11:01", "HLA-B*07:02",
                                    "HLA-B*35:01", "HLA-C*07:01", "A*03:01"};

std::vector<SelectorScore> pool_from(const std::vector<seqdata::EpitopeRecord>& records) {
  return pipeline::score_epitopes(nullptr, records, {});
}

seqdata::EpitopeRecord rec(const char* peptide, const char* allele, double score) {
  return {seqdata::Peptide(peptide), allele, 50.0, 90.0, 1, score};
}

std::vector<SelectorScore> fixture_pool() {
  return pool_from(seqdata::load_records(std::string(IMMUNOKIT_TEST_DATA) + "/top_epitopes.csv",
                                         seqdata::RecordFormat::csv)
                       .records);
}

std::vector<SelectorScore> random_pool(Rng& rng, std::size_t n) {
  std::vector<seqdata::EpitopeRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  while (records.size() < n) {
    std::string s;
    // short alphabet so that repeated peptides occur
    for (int k = 0; k < 9; ++k) s += "ACD"[rng.below(3)];
    const char* allele = kAlleles[rng.below(std::size(kAlleles))];
    if (!seen.insert({s, allele}).second) continue;
    records.push_back(rec(s.c_str(), allele, static_cast<double>(rng.below(11)) / 10.0));
  }
  return pool_from(records);
}

void check_contract(const VaccineCandidate& c, const SupertypeRequirement& req, std::size_t k) {
  CHECK(c.epitopes.size() <= k);
  std::set<std::string> peptides;
  double total = 0.0;
  for (const auto& e : c.epitopes) {
    CHECK(peptides.insert(e.epitope.peptide.str()).second);
    total += e.priority;
  }
  CHECK(std::abs(c.total_priority - total) <= 1e-9);
  std::set<std::string> keys;
  for (const auto& [st, idx] : c.coverage) {
    keys.insert(st);
    CHECK_FALSE(c.missing.count(st));
    for (auto i : idx) CHECK(req.allele_map.supertype_of(c.epitopes[i].epitope.hla_allele) == st);
  }
  keys.insert(c.missing.begin(), c.missing.end());
  CHECK(keys == req.required);
}

}  // namespace

TEST_CASE("allele map normalization and lookup") {
  const auto m = AlleleMap::bundled();
  CHECK(m.supertype_of("HLA-A*02:01") == "A2");
  CHECK(m.supertype_of("a*02:01") == "A2");
  CHECK(m.supertype_of(" hla-b*07:02 ") == "B7");
  CHECK(m.supertype_of("A*03:01") == "A3");
  CHECK_FALSE(m.supertype_of("HLA-C*07:01").has_value());
  CHECK(normalize_allele("hla-a*02:01") == "A*02:01");

  auto edited = AlleleMap::bundled();
  edited.merge(AlleleMap::from_csv("allele,supertype\nHLA-C*07:01,C7\nA*02:01,A2x\n"));
  CHECK(edited.supertype_of("C*07:01") == "C7");
  CHECK(edited.supertype_of("A*02:01") == "A2x");
  CHECK_THROWS_AS(AlleleMap::from_csv("allele,supertype\nA*02:01\n"), ValidationError);
}

TEST_CASE("assemble reports uncoverable supertypes") {
  const auto pool = pool_from({rec("YLQPRTFLL", "HLA-A*02:01", 0.9),
                               rec("LLFGYPVYV", "HLA-A*02:01", 0.8)});
  const SupertypeRequirement req;
  const auto c = assemble(pool, req, 3);
  CHECK(c.missing == std::set<std::string>{"A3", "B7"});
  CHECK(c.epitopes.size() == 2);
  check_contract(c, req, 3);
}

TEST_CASE("assemble covers all three supertypes from the fixture") {
  const auto pool = fixture_pool();
  const SupertypeRequirement req;
  const auto c = assemble(pool, req, 3);
  REQUIRE(c.epitopes.size() == 3);
  std::set<std::string> chosen;
  for (const auto& e : c.epitopes) chosen.insert(e.epitope.peptide.str());
  CHECK(chosen == std::set<std::string>{"YLQPRTFLL", "TTDPNFLGRY", "NQKLIANQF"});
  CHECK(c.missing.empty());
  check_contract(c, req, 3);

  const auto report = coverage_report(c);
  CHECK(report.find("MISSING") == std::string::npos);
  CHECK(report.find("A2         YLQPRTFLL (HLA-A*02:01)\n") != std::string::npos);
  CHECK(report.find("A3         NQKLIANQF (HLA-A*03:01)\n") != std::string::npos);
  CHECK(report.find("B7         TTDPNFLGRY (HLA-B*07:02)\n") != std::string::npos);
  CHECK(report.find("total_priority 2.81") != std::string::npos);

  const auto four = assemble(pool, req, 4);
  CHECK(four.epitopes.size() == 4);
  CHECK(coverage_report(four).find("MISSING") == std::string::npos);

  const auto j = candidate_json(c);
  CHECK(j["epitopes"].size() == 3);
  CHECK(j["missing"].empty());
}

TEST_CASE("k = 1 picks the best single epitope") {
  const auto pool = fixture_pool();
  const SupertypeRequirement req;
  const auto c = assemble(pool, req, 1);
  REQUIRE(c.epitopes.size() == 1);
  CHECK(c.missing.size() == req.required.size() - 1);
  const auto oracle = assembly_oracle::best(pool, req, 1);
  const auto got = assembly_oracle::evaluate(c.epitopes, req);
  CHECK(got.covered == oracle.covered);
  CHECK(got.total == doctest::Approx(oracle.total));
  CHECK(c.epitopes[0].epitope.peptide.str() == "YLQPRTFLL");
}

TEST_CASE("coverage report rows") {
  const SupertypeRequirement req;
  const auto empty = make_candidate({}, req);
  const auto report = coverage_report(empty);
  std::size_t missing = 0;
  for (auto pos = report.find("MISSING"); pos != std::string::npos;
       pos = report.find("MISSING", pos + 1))
    ++missing;
  CHECK(missing == 3);
  CHECK(report.find("total_priority 0\n") != std::string::npos);
  CHECK(empty.missing == req.required);
}

TEST_CASE("assemble errors and duplicates") {
  const SupertypeRequirement req;
  CHECK_THROWS_AS(assemble({}, req, 3), ValidationError);
  CHECK_THROWS_AS(assemble(fixture_pool(), req, 0), ValidationError);

  const auto pool = pool_from({rec("YLQPRTFLL", "HLA-A*02:01", 0.5),
                               rec("YLQPRTFLL", "HLA-B*07:02", 0.9),
                               rec("NQKLIANQF", "HLA-A*03:01", 0.4)});
  const auto c = assemble(pool, req, 3);
  CHECK(c.epitopes.size() == 2);
  CHECK(c.epitopes[0].epitope.hla_allele == "HLA-B*07:02");
  check_contract(c, req, 3);
}

TEST_CASE("assemble matches exhaustive search on small pools") {
  Rng rng(1);
  const SupertypeRequirement req;
  for (int trial = 0; trial < 300; ++trial) {
    const auto pool = random_pool(rng, 1 + rng.below(8));
    const std::size_t k = 1 + rng.below(4);
    const auto c = assemble(pool, req, k);
    check_contract(c, req, k);
    const auto got = assembly_oracle::evaluate(c.epitopes, req);
    const auto oracle = assembly_oracle::best(pool, req, k);
    CHECK(got.covered == oracle.covered);
    CHECK(std::abs(got.total - oracle.total) <= 1e-9);
  }
}

TEST_CASE("adding an epitope never uncovers a supertype") {
  Rng rng(2);
  const SupertypeRequirement req;
  for (int trial = 0; trial < 300; ++trial) {
    auto pool = random_pool(rng, 2 + rng.below(10));
    const std::size_t k = 3 + rng.below(3);
    const auto extra = pool.back();
    pool.pop_back();
    const auto before = assemble(pool, req, k);
    pool.push_back(extra);
    const auto after = assemble(pool, req, k);
    CHECK(std::includes(before.missing.begin(), before.missing.end(), after.missing.begin(),
                        after.missing.end()));
    for (std::size_t small_k : {1, 2}) {
      pool.pop_back();
      const auto fewer = assemble(pool, req, small_k).missing.size();
      pool.push_back(extra);
      CHECK(assemble(pool, req, small_k).missing.size() <= fewer);
    }
  }
}
