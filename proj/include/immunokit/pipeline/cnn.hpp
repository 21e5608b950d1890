#pragma once

// Protective vs non-protective classifier:
//   [BOS] peptide [EOS] -> embedding -> Conv1d(tanh, "same") -> max over
//   tokens -> dropout -> Dense -> sigmoid.

#include <cstdint>
#include <filesystem>
#include <span>

#include <json.hpp>

#include "immunokit/numcore/layers.hpp"
#include "immunokit/numcore/param_store.hpp"
#include "immunokit/seqdata.hpp"
#include "immunokit/training.hpp"

namespace immunokit::pipeline {

struct CnnConfig {
  std::size_t max_length = 15;
  std::size_t embed_dim = 16;
  std::size_t channels = 16;
  std::size_t kernel = 3;
  double dropout = 0.1;
  std::uint64_t init_seed = 7;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static CnnConfig from_json(const nlohmann::json& j);
};

class CnnClassifier final : public Trainable {
 public:
  static constexpr std::size_t kBos = seqdata::kAlphabetSize;
  static constexpr std::size_t kEos = seqdata::kAlphabetSize + 1;
  static constexpr std::size_t kVocab = seqdata::kAlphabetSize + 2;

  explicit CnnClassifier(CnnConfig config);
  CnnClassifier(CnnConfig config, nn::ParamStore params);

  const CnnConfig& config() const { return config_; }
  double logit(const seqdata::Peptide& peptide) const;
  double probability(const seqdata::Peptide& peptide) const;

  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const { return params_; }
  // Gradient of the batch-mean binary cross-entropy on `immunogenic`.
  BatchStats accumulate_batch(std::span<const seqdata::EpitopeRecord> batch,
                              std::uint64_t seed) override;
  BatchStats evaluate(std::span<const seqdata::EpitopeRecord> records) const override;

 private:
  nn::DenseArray tokens(const seqdata::Peptide& peptide) const;

  CnnConfig config_;
  nn::Embedding embed_;
  nn::Conv1d conv_;
  nn::MaxPoolRows pool_;
  nn::Dropout drop_;
  nn::Dense head_;
  nn::ParamStore params_;
};

TrainReport train_cnn_classifier(const seqdata::Dataset& data, const TrainConfig& config,
                                 CnnConfig model = {}, const EpochCallback& on_epoch = {});

void save_cnn(const std::filesystem::path& dir, const CnnClassifier& model,
              const nn::AdamConfig& adam);
CnnClassifier load_cnn(const std::filesystem::path& dir);

}  // namespace immunokit::pipeline
