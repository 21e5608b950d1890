#pragma once

// Multi-task autoencoder selector. A peptide is one-hot encoded into a
// zero-padded [max_length * 20] vector; the encoder maps it to a latent
// code, the decoder reconstructs it, and two heads read immunogenicity and
// conservation logits from the code. Loss:
//   alpha * reconstruction MSE + beta * BCE(immunogenic) + gamma * MSE(conservation fraction)

#include <cstdint>
#include <filesystem>
#include <span>

#include <json.hpp>

#include "immunokit/numcore/layers.hpp"
#include "immunokit/numcore/param_store.hpp"
#include "immunokit/seqdata.hpp"
#include "immunokit/training.hpp"

namespace immunokit::pipeline {

struct AutoencoderConfig {
  std::size_t max_length = 15;
  std::size_t latent_dim = 32;
  // Identity encoder activation instead of tanh.
  bool linear_codec = false;
  std::uint64_t init_seed = 7;

  std::size_t input_width() const { return max_length * seqdata::kAlphabetSize; }
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static AutoencoderConfig from_json(const nlohmann::json& j);
};

struct SelectorReadout {
  double immunogenicity = 0.5;
  double conservation = 0.5;
  // Mean squared error between the one-hot input and its reconstruction.
  double reconstruction_error = 0.0;
};

nn::DenseArray one_hot(const seqdata::Peptide& peptide, std::size_t max_length);

class AutoencoderSelector final : public Trainable {
 public:
  explicit AutoencoderSelector(AutoencoderConfig config);
  AutoencoderSelector(AutoencoderConfig config, nn::ParamStore params);

  const AutoencoderConfig& config() const { return config_; }
  void set_loss_weights(const LossWeights& weights) { weights_ = weights; }

  SelectorReadout read(const seqdata::Peptide& peptide) const;
  // Mean reconstruction error over the records.
  double reconstruction_error(std::span<const seqdata::EpitopeRecord> records) const;

  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const { return params_; }
  BatchStats accumulate_batch(std::span<const seqdata::EpitopeRecord> batch,
                              std::uint64_t seed) override;
  BatchStats evaluate(std::span<const seqdata::EpitopeRecord> records) const override;

 private:
  double item_loss(const seqdata::EpitopeRecord& r, const SelectorReadout& out) const;

  AutoencoderConfig config_;
  LossWeights weights_;
  nn::Dense encoder_;
  nn::Dense decoder_;
  nn::Dense heads_;
  nn::ParamStore params_;
};

// Trains a fresh selector; latent_dim must not exceed the input width.
// The report's best checkpoint holds the trained parameters.
TrainReport train_autoencoder_selector(const seqdata::Dataset& data, std::size_t latent_dim,
                                       const TrainConfig& config, AutoencoderConfig model = {},
                                       const EpochCallback& on_epoch = {});

void save_autoencoder(const std::filesystem::path& dir, const AutoencoderSelector& model,
                      const nn::AdamConfig& adam);
AutoencoderSelector load_autoencoder(const std::filesystem::path& dir);

}  // namespace immunokit::pipeline
