#pragma once

// Epitope prioritization:
//   priority = w_imm * immunogenicity + w_cons * conservation fraction
//              - w_rec * err / (1 + err)
// where err is the autoencoder reconstruction error. The
// reconstruction_error component stores the normalized err / (1 + err).

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "immunokit/pipeline/autoencoder.hpp"
#include "immunokit/seqdata.hpp"

namespace immunokit::pipeline {

struct SelectorWeights {
  double immunogenicity = 1.0;
  double conservation = 0.0;
  double reconstruction = 0.0;

  // Throws ValidationError on a negative weight or all weights zero.
  void validate() const;
};

inline constexpr const char* kComponentImmunogenicity = "immunogenicity";
inline constexpr const char* kComponentConservation = "conservation";
inline constexpr const char* kComponentReconstruction = "reconstruction_error";

struct SelectorScore {
  seqdata::EpitopeRecord epitope;
  double priority = 0.0;
  std::map<std::string, double> components;
};

double normalized_reconstruction_error(double mse);

double priority_of(const std::map<std::string, double>& components, const SelectorWeights& w);

// Immunogenicity comes from the record's `score` when present, otherwise
// from the selector's head; a record with neither is a ValidationError.
// Without a selector the reconstruction component is 0. Output is sorted
// by descending priority, ties by peptide text then allele.
std::vector<SelectorScore> score_epitopes(const AutoencoderSelector* selector,
                                          const std::vector<seqdata::EpitopeRecord>& records,
                                          const SelectorWeights& weights);

// Strict weak order used by score_epitopes.
bool ranks_before(const SelectorScore& a, const SelectorScore& b);

// `peptide,priority,imm,cons,rec_err`
void write_scores_csv(std::ostream& out, const std::vector<SelectorScore>& scores);

}  // namespace immunokit::pipeline
