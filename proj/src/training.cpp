#include "immunokit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "immunokit/error.hpp"
#include "immunokit/rng.hpp"
#include "immunokit/textio.hpp"

namespace immunokit {

void LossWeights::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
    throw ValidationError("loss weights must be non-negative");
  }
  if (!(alpha + beta + gamma > 0.0)) throw ValidationError("loss weights must not all be zero");
}

void TrainConfig::validate() const {
  weights.validate();
  adam.validate();
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (epochs == 0) throw ValidationError("epochs must be at least 1");
  if (batch_size == 0) throw ValidationError("batch size must be at least 1");
  if (!(tolerance >= 0.0)) throw ValidationError("tolerance must be non-negative");
}

BatchStats& BatchStats::operator+=(const BatchStats& other) {
  loss_sum += other.loss_sum;
  correct += other.correct;
  count += other.count;
  return *this;
}

bool EarlyStopping::observe(double val_loss) {
  const bool improved = val_loss < best_;
  if (improved) best_ = val_loss;
  if (val_loss < reference_ - tolerance_) {
    reference_ = val_loss;
    waited_ = 0;
  } else {
    ++waited_;
  }
  return improved;
}

TrainReport fit(Trainable& model, const seqdata::Dataset& data, const TrainConfig& config,
                const EpochCallback& on_epoch) {
  config.validate();
  const auto train = data.train_records();
  const auto val = data.test_records();
  nn::ParamStore& params = model.params();

  TrainReport report;
  EarlyStopping stopping(config.patience, config.tolerance);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<seqdata::EpitopeRecord> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 2 * epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    }
    const std::uint64_t epoch_seed = derive_seed(config.seed, 2 * epoch + 1);

    BatchStats running;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
      params.zero_grad();
      const BatchStats stats = model.accumulate_batch(batch, derive_seed(epoch_seed, batch_index));
      if (!std::isfinite(stats.loss_sum)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      try {
        nn::adam_step(params, config.adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      running += stats;
    }

    const BatchStats held_out = model.evaluate(val);
    if (!std::isfinite(held_out.loss_sum)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    report.train_loss.push_back(running.mean_loss());
    report.train_accuracy.push_back(running.accuracy());
    report.val_loss.push_back(held_out.mean_loss());
    report.val_accuracy.push_back(held_out.accuracy());
    report.stopped_epoch = epoch;
    if (stopping.observe(held_out.mean_loss())) {
      report.best_epoch = epoch;
      report.best_checkpoint = params;
    }
    if (on_epoch) on_epoch(report);
    if (stopping.should_stop()) break;
  }
  params.assign_values(report.best_checkpoint);
  return report;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_loss,val_loss,train_acc,val_acc\n";
  for (std::size_t e = 0; e < report.epochs_run(); ++e) {
    out << e << ',' << format_number(report.train_loss[e]) << ','
        << format_number(report.val_loss[e]) << ',' << format_number(report.train_accuracy[e])
        << ',' << format_number(report.val_accuracy[e]) << '\n';
  }
}

nlohmann::ordered_json report_summary(const TrainReport& report) {
  nlohmann::ordered_json j;
  j["epochs_run"] = report.epochs_run();
  j["stopped_epoch"] = report.stopped_epoch;
  j["best_epoch"] = report.best_epoch;
  if (report.epochs_run() > 0) {
    const std::size_t b = report.best_epoch;
    j["best"] = {{"train_loss", report.train_loss[b]},
                 {"val_loss", report.val_loss[b]},
                 {"train_acc", report.train_accuracy[b]},
                 {"val_acc", report.val_accuracy[b]}};
    const std::size_t l = report.stopped_epoch;
    j["final"] = {{"train_loss", report.train_loss[l]},
                  {"val_loss", report.val_loss[l]},
                  {"train_acc", report.train_accuracy[l]},
                  {"val_acc", report.val_accuracy[l]}};
  }
  return j;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["alpha"] = c.weights.alpha;
  j["beta"] = c.weights.beta;
  j["gamma"] = c.weights.gamma;
  j["learning_rate"] = c.adam.learning_rate;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["dropout"] = c.dropout;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["tolerance"] = c.tolerance;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

}  // namespace immunokit
