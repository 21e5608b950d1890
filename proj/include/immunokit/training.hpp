#pragma once

// Configuration, per-epoch report and the minibatch/early-stopping loop
// shared by the predictor, the CNN classifier and the autoencoder selector.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include <json.hpp>

#include "immunokit/numcore/adam.hpp"
#include "immunokit/numcore/param_store.hpp"
#include "immunokit/seqdata.hpp"

namespace immunokit {

// Task weights of the combined loss  alpha*L_aff + beta*L_imm + gamma*L_cons.
struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  void validate() const;
};

struct TrainConfig {
  LossWeights weights;
  nn::AdamConfig adam;
  double dropout = 0.1;
  std::size_t epochs = 100;
  // Epochs without an improvement larger than `tolerance` before stopping;
  // 0 disables early stopping.
  std::size_t patience = 10;
  double tolerance = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  nn::ParamStore best_checkpoint;

  std::size_t epochs_run() const { return train_loss.size(); }
};

// Sum of per-item losses and correct immunogenicity calls over `count` items.
struct BatchStats {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;

  BatchStats& operator+=(const BatchStats& other);
  double mean_loss() const { return count ? loss_sum / static_cast<double>(count) : 0.0; }
  double accuracy() const {
    return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
  }
};

// A model the shared loop can drive.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual nn::ParamStore& params() = 0;
  // Adds the gradient of the batch-mean loss into params(); train mode.
  virtual BatchStats accumulate_batch(std::span<const seqdata::EpitopeRecord> batch,
                                      std::uint64_t seed) = 0;
  virtual BatchStats evaluate(std::span<const seqdata::EpitopeRecord> records) const = 0;
};

using EpochCallback = std::function<void(const TrainReport&)>;

// Minibatch Adam over the train split, validation on the test split,
// early stopping on validation loss, best checkpoint restored into the
// model at the end. train_loss/train_accuracy are running means over the
// epoch's minibatches. Throws NumericError (epoch and batch named) on a
// non-finite loss, ValidationError when the dataset is unsplit.
TrainReport fit(Trainable& model, const seqdata::Dataset& data, const TrainConfig& config,
                const EpochCallback& on_epoch = {});

// Updates the early-stopping state; the best checkpoint tracks the strict
// minimum of val_loss, patience counts epochs without a > tolerance gain.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double tolerance)
      : patience_(patience), tolerance_(tolerance) {}
  // Returns true when `val_loss` is a new strict minimum.
  bool observe(double val_loss);
  bool should_stop() const { return patience_ != 0 && waited_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double tolerance_;
  double best_ = std::numeric_limits<double>::infinity();
  double reference_ = std::numeric_limits<double>::infinity();
  std::size_t waited_ = 0;
};

// `epoch,train_loss,val_loss,train_acc,val_acc`
void write_report_csv(std::ostream& out, const TrainReport& report);
nlohmann::ordered_json report_summary(const TrainReport& report);

nlohmann::ordered_json to_json(const TrainConfig& config);

}  // namespace immunokit
