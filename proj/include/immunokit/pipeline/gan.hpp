#pragma once

// Peptide GAN.
//   generator:     z ~ N(0, I) -> Dense(tanh) -> Dense -> [L, 20] logits
//                  -> per-position softmax -> one-hot sample (temperature 1)
//                  with the straight-through gradient onto the probabilities
//   discriminator: one-hot [L, 20] -> Conv1d(tanh) -> max over positions
//                  -> Dense -> sigmoid
// Generation decodes each position by argmax.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "immunokit/error.hpp"
#include "immunokit/numcore/layers.hpp"
#include "immunokit/numcore/param_store.hpp"
#include "immunokit/seqdata.hpp"
#include "immunokit/training.hpp"

namespace immunokit {
class Rng;
}

namespace immunokit::pipeline {

class ModeCollapseError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct GanConfig {
  std::size_t length = seqdata::kDefaultPeptideLength;
  std::size_t noise_dim = 16;
  std::size_t hidden = 64;
  std::size_t disc_channels = 16;
  std::size_t kernel = 3;
  std::size_t probe_size = 256;
  std::size_t min_distinct = 8;
  std::uint64_t init_seed = 7;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

struct GanSample {
  seqdata::Peptide peptide;
  double realism = 0.5;
};

class GanModel {
 public:
  explicit GanModel(GanConfig config);
  GanModel(GanConfig config, nn::ParamStore generator, nn::ParamStore discriminator);

  const GanConfig& config() const { return config_; }
  nn::ParamStore& generator_params() { return gen_params_; }
  nn::ParamStore& discriminator_params() { return disc_params_; }
  const nn::ParamStore& generator_params() const { return gen_params_; }
  const nn::ParamStore& discriminator_params() const { return disc_params_; }

  nn::DenseArray draw_noise(Rng& rng) const;
  // Per-position residue distributions, [length, 20].
  nn::DenseArray probabilities(const nn::DenseArray& noise) const;
  seqdata::Peptide decode_argmax(const nn::DenseArray& noise) const;
  // Temperature-1 sample, as used during training.
  seqdata::Peptide sample(const nn::DenseArray& noise, Rng& rng) const;

  double discriminator_logit(const nn::DenseArray& one_hot) const;
  double realism(const seqdata::Peptide& peptide) const;

  // Train-mode passes with cached state.
  nn::DenseArray generator_forward(const nn::DenseArray& noise, Rng& rng);
  void generator_backward(const nn::DenseArray& grad_one_hot);
  double discriminator_forward(const nn::DenseArray& one_hot);
  // Returns the gradient w.r.t. the discriminator input.
  nn::DenseArray discriminator_backward(double grad_logit);

  nn::DenseArray encode(const seqdata::Peptide& peptide) const;

 private:
  GanConfig config_;
  nn::Dense gen_hidden_, gen_out_;
  nn::Conv1d disc_conv_;
  nn::MaxPoolRows disc_pool_;
  nn::Dense disc_head_;
  nn::ParamStore gen_params_, disc_params_;
  nn::DenseArray cached_probs_;
};

struct GanReport {
  std::vector<double> d_loss;
  std::vector<double> g_loss;
  // Distinct peptides among the probe drawn after each epoch.
  std::vector<std::size_t> probe_distinct;
};

struct GanTraining {
  GanModel model;
  GanReport report;
};

// Alternating discriminator/generator Adam steps over minibatches of the
// positives (all of one length, at least 200). config.epochs and
// config.batch_size apply; early stopping does not. Throws NumericError on a
// non-finite loss and ModeCollapseError when a post-epoch probe of
// probe_size training-style samples has fewer than min_distinct peptides.
GanTraining train_gan(std::span<const seqdata::Peptide> positives, const TrainConfig& config,
                      GanConfig model = {});

// n argmax-decoded samples (noise for sample i seeded from derive_seed(seed, i))
// sorted by realism descending, ties by peptide.
std::vector<GanSample> generate_candidates(const GanModel& model, std::size_t n,
                                           std::uint64_t seed);

// Temperature-1 samples, the distribution the discriminator is trained against.
std::vector<seqdata::Peptide> sample_training_style(const GanModel& model, std::size_t n,
                                                    std::uint64_t seed);

// Fraction of correct calls at 0.5: reals should score >= 0.5, fakes below.
double discriminator_accuracy(const GanModel& model, std::span<const seqdata::Peptide> real,
                              std::span<const seqdata::Peptide> fake);

// `>candN realism=<value>` headers.
void write_samples_fasta(std::ostream& out, const std::vector<GanSample>& samples);

// `dir/generator` and `dir/discriminator` checkpoints.
void save_gan(const std::filesystem::path& dir, const GanModel& model, const nn::AdamConfig& adam);
GanModel load_gan(const std::filesystem::path& dir);

void write_gan_log_csv(std::ostream& out, const GanReport& report);

}  // namespace immunokit::pipeline
