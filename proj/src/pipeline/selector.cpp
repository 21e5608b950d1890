#include "immunokit/pipeline/selector.hpp"

#include <algorithm>
#include <ostream>

#include "immunokit/error.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::pipeline {

void SelectorWeights::validate() const {
  if (!(immunogenicity >= 0.0 && conservation >= 0.0 && reconstruction >= 0.0)) {
    throw ValidationError("selector weights must be non-negative");
  }
  if (!(immunogenicity + conservation + reconstruction > 0.0)) {
    throw ValidationError("selector weights must not all be zero");
  }
}

double normalized_reconstruction_error(double mse) { return mse / (1.0 + mse); }

double priority_of(const std::map<std::string, double>& c, const SelectorWeights& w) {
  return w.immunogenicity * c.at(kComponentImmunogenicity) +
         w.conservation * c.at(kComponentConservation) -
         w.reconstruction * c.at(kComponentReconstruction);
}

bool ranks_before(const SelectorScore& a, const SelectorScore& b) {
  if (a.priority != b.priority) return a.priority > b.priority;
  if (a.epitope.peptide != b.epitope.peptide) return a.epitope.peptide < b.epitope.peptide;
  return a.epitope.hla_allele < b.epitope.hla_allele;
}

std::vector<SelectorScore> score_epitopes(const AutoencoderSelector* selector,
                                          const std::vector<seqdata::EpitopeRecord>& records,
                                          const SelectorWeights& weights) {
  weights.validate();
  if (records.empty()) throw ValidationError("no epitopes to score");
  std::vector<SelectorScore> scores;
  scores.reserve(records.size());
  for (const auto& r : records) {
    SelectorScore s{r, 0.0, {}};
    double imm = 0.0, rec = 0.0;
    if (selector) {
      const auto out = selector->read(r.peptide);
      imm = out.immunogenicity;
      rec = normalized_reconstruction_error(out.reconstruction_error);
    }
    if (r.score) {
      imm = *r.score;
    } else if (!selector) {
      throw ValidationError("epitope " + r.peptide.str() +
                            " has no score and no selector model was given");
    }
    s.components[kComponentImmunogenicity] = imm;
    s.components[kComponentConservation] = r.conservation_pct / 100.0;
    s.components[kComponentReconstruction] = rec;
    s.priority = priority_of(s.components, weights);
    scores.push_back(std::move(s));
  }
  std::stable_sort(scores.begin(), scores.end(), ranks_before);
  return scores;
}

void write_scores_csv(std::ostream& out, const std::vector<SelectorScore>& scores) {
  out << "peptide,priority,imm,cons,rec_err\n";
  for (const auto& s : scores) {
    out << s.epitope.peptide.str() << ',' << format_number(s.priority) << ','
        << format_number(s.components.at(kComponentImmunogenicity)) << ','
        << format_number(s.components.at(kComponentConservation)) << ','
        << format_number(s.components.at(kComponentReconstruction)) << '\n';
  }
}

}  // namespace immunokit::pipeline
