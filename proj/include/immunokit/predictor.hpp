#pragma once

// Transformer multi-task epitope predictor.
//
//   residues -> W_emb x + b -> + sinusoidal positions
//            -> x + Dropout(SelfAttention(x))
//            -> x + Dropout(Dense(tanh(Dense(x))))
//            -> mean over tokens -> Dropout(tanh(Dense))
//            -> three heads: log10 affinity (linear), immunogenicity
//               (sigmoid), conservation fraction (sigmoid)
//
// Trained on  alpha*MSE(log10 nM) + beta*BCE + gamma*MSE(conservation/100).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "immunokit/numcore/layers.hpp"
#include "immunokit/numcore/param_store.hpp"
#include "immunokit/seqdata.hpp"
#include "immunokit/training.hpp"

namespace immunokit::predictor {

struct Model1Config {
  std::size_t max_length = 15;
  std::size_t width = 32;
  std::size_t heads = 2;
  std::size_t ffn_width = 64;
  double dropout = 0.1;
  std::uint64_t init_seed = 7;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static Model1Config from_json(const nlohmann::json& j);
};

struct Model1Output {
  double affinity_pred = 0.0;        // log10(nM)
  double immunogenicity_prob = 0.5;  // in (0, 1)
  double conservation_pred = 0.5;    // fraction in [0, 1]
};

struct LossParts {
  double total = 0.0;
  double affinity = 0.0;
  double immunogenicity = 0.0;
  double conservation = 0.0;
};

inline constexpr double kProbabilityClamp = 1e-12;

// Mean binary cross-entropy with probabilities clamped to
// [1e-12, 1 - 1e-12]. Throws ValidationError on empty or mismatched input.
double bce(std::span<const int> labels, std::span<const double> probs);

double weighted_total(double affinity, double immunogenicity, double conservation,
                      const LossWeights& weights);

// Batch-mean task losses and their weighted sum.
LossParts multitask_loss(std::span<const Model1Output> outputs,
                         std::span<const seqdata::EpitopeRecord> targets,
                         const LossWeights& weights);

double affinity_target(const seqdata::EpitopeRecord& r);
double conservation_target(const seqdata::EpitopeRecord& r);

class EpitopePredictor final : public Trainable {
 public:
  // Fresh parameters drawn from config.init_seed.
  explicit EpitopePredictor(Model1Config config);
  // Wraps existing parameters (for example a loaded checkpoint).
  EpitopePredictor(Model1Config config, nn::ParamStore params);

  const Model1Config& config() const { return config_; }
  void set_loss_weights(const LossWeights& weights) { weights_ = weights; }

  // Train mode caches per-sample state and draws dropout masks from `seed`.
  std::vector<Model1Output> forward(std::span<const seqdata::Peptide> peptides, nn::Mode mode,
                                    std::uint64_t seed);
  Model1Output predict(const seqdata::Peptide& peptide) const;
  std::vector<Model1Output> predict(std::span<const seqdata::Peptide> peptides) const;

  // Sets the affinity and conservation head biases to the training-set
  // target means so early epochs are not spent learning offsets.
  void calibrate_output_bias(std::span<const seqdata::EpitopeRecord> train);

  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const { return params_; }
  BatchStats accumulate_batch(std::span<const seqdata::EpitopeRecord> batch,
                              std::uint64_t seed) override;
  BatchStats evaluate(std::span<const seqdata::EpitopeRecord> records) const override;
  LossParts loss(std::span<const seqdata::EpitopeRecord> records) const;

 private:
  struct Layers {
    nn::Embedding embed;
    nn::SelfAttention attention;
    nn::Dropout attention_drop;
    nn::Dense ffn_in;
    nn::Dense ffn_out;
    nn::Dropout ffn_drop;
    nn::Dense shared;
    nn::Dropout shared_drop;
    nn::Dense heads;
  };
  static Layers build(const Model1Config& config);
  nn::DenseArray encode(const seqdata::Peptide& peptide) const;
  // Returns the raw [1, 3] head output (affinity, imm logit, cons logit).
  nn::DenseArray forward_sample(const seqdata::Peptide& peptide, nn::Mode mode,
                                std::uint64_t seed);
  nn::DenseArray infer_sample(const seqdata::Peptide& peptide) const;
  void backward_sample(const nn::DenseArray& grad_heads);

  Model1Config config_;
  LossWeights weights_;
  Layers layers_;
  nn::ParamStore params_;
  std::size_t cached_tokens_ = 0;
};

Model1Output to_output(const nn::DenseArray& heads);

// Trains a fresh predictor (init seed = config.seed, dropout = config.dropout)
// on the dataset's split; the report's best checkpoint holds the result.
TrainReport train_model1(const seqdata::Dataset& data, const TrainConfig& config,
                         Model1Config model = {}, const EpochCallback& on_epoch = {});

// Checkpoint round trip; the metadata records the architecture.
void save_predictor(const std::filesystem::path& dir, const EpitopePredictor& model,
                    const nn::AdamConfig& adam);
EpitopePredictor load_predictor(const std::filesystem::path& dir);

}  // namespace immunokit::predictor
