#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "immunokit/error.hpp"
#include "immunokit/metrics.hpp"
#include "immunokit/numcore/grad_check.hpp"
#include "immunokit/predictor.hpp"
#include "immunokit/rng.hpp"

using namespace immunokit;
using namespace immunokit::predictor;
using seqdata::EpitopeRecord;
using seqdata::Peptide;

namespace {

seqdata::Dataset corpus(std::size_t n, double signal = 0.9, std::uint64_t seed = 7) {
  return seqdata::split_dataset(
      seqdata::generate_synthetic({.n = n, .signal_strength = signal, .seed = seed}), 0.8, 7);
}

Peptide random_peptide(Rng& rng, std::size_t length) {
  std::string s;
  for (std::size_t i = 0; i < length; ++i) s += seqdata::kAminoAcids[rng.below(20)];
  return Peptide(s);
}

EpitopeRecord record(const char* peptide, double nm, double cons, int label) {
  return {Peptide(peptide), "HLA-A*02:01", nm, cons, label, {}};
}

// Counts calls and reports a NaN loss on one chosen batch.
class PoisonedModel final : public Trainable {
 public:
  PoisonedModel(std::size_t bad_call) : bad_call_(bad_call) { params_.add("w", {1}); }
  nn::ParamStore& params() override { return params_; }
  BatchStats accumulate_batch(std::span<const EpitopeRecord> batch, std::uint64_t) override {
    const double loss = calls_++ == bad_call_ ? std::nan("") : 1.0;
    return {loss * static_cast<double>(batch.size()), 0, batch.size()};
  }
  BatchStats evaluate(std::span<const EpitopeRecord> records) const override {
    return {static_cast<double>(records.size()), 0, records.size()};
  }

 private:
  nn::ParamStore params_;
  std::size_t bad_call_;
  std::size_t calls_ = 0;
};

}  // namespace

TEST_CASE("bce examples") {
  const int labels[] = {1, 0};
  const double perfect[] = {1 - 1e-12, 1e-12};
  CHECK(bce(labels, perfect) < 1e-11);
  const double good[] = {0.9, 0.1};
  CHECK(std::abs(bce(labels, good) - 0.105361) < 1e-6);
  CHECK(std::abs(bce(labels, good) + std::log(0.9)) < 1e-15);

  const int one[] = {1}, zero[] = {0};
  const double p03[] = {0.3}, p07[] = {0.7};
  CHECK(bce(one, p03) == doctest::Approx(bce(zero, p07)).epsilon(1e-15));

  const double extreme[] = {0.0, 1.0};
  CHECK(std::isfinite(bce(labels, extreme)));
  CHECK(bce(labels, extreme) == doctest::Approx(-std::log(kProbabilityClamp)));
  CHECK_THROWS_AS(bce(std::span<const int>{}, std::span<const double>{}), ValidationError);
  CHECK_THROWS_AS(bce(labels, std::span<const double>(good, 1)), ValidationError);
}

TEST_CASE("multitask_loss examples") {
  CHECK(weighted_total(0.1, 0.2, 0.3, {}) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(weighted_total(0.1, 0.2, 0.3, {1, 0, 0}) == 0.1);

  const std::vector<EpitopeRecord> targets{record("YLQPRTFLL", 100.0, 50.0, 1)};
  const std::vector<Model1Output> outputs{{1.5, 0.5, 0.2}};
  const auto parts = multitask_loss(outputs, targets, {});
  CHECK(parts.immunogenicity == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(parts.affinity == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(parts.conservation == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(parts.total ==
        doctest::Approx(parts.affinity + parts.immunogenicity + parts.conservation).epsilon(1e-15));
  CHECK(multitask_loss(outputs, targets, {1, 0, 0}).total == parts.affinity);
  CHECK(multitask_loss(outputs, targets, {0.5, 2, 3}).total ==
        doctest::Approx(0.5 * parts.affinity + 2 * parts.immunogenicity + 3 * parts.conservation));

  CHECK_THROWS_AS(multitask_loss({}, {}, {}), ValidationError);
  CHECK_THROWS_AS(multitask_loss(outputs, {}, {}), ValidationError);
  CHECK_THROWS_AS((LossWeights{0, 0, 0}.validate()), ValidationError);
  CHECK_THROWS_AS((LossWeights{-1, 1, 1}.validate()), ValidationError);
  CHECK(affinity_target(targets[0]) == 2.0);
  CHECK(conservation_target(targets[0]) == 0.5);
}

TEST_CASE("forward is deterministic and range-bounded") {
  EpitopePredictor model({});
  const std::vector<Peptide> same(4, Peptide("YLQPRTFLL"));
  const auto out = model.forward(same, nn::Mode::eval, 1);
  for (const auto& o : out) {
    CHECK(o.affinity_pred == out[0].affinity_pred);
    CHECK(o.immunogenicity_prob == out[0].immunogenicity_prob);
    CHECK(o.conservation_pred == out[0].conservation_pred);
  }

  Rng rng(3);
  std::vector<Peptide> peptides;
  for (int i = 0; i < 10000; ++i) peptides.push_back(random_peptide(rng, 8 + rng.below(8)));
  for (const auto& o : model.predict(peptides)) {
    CHECK(o.immunogenicity_prob > 0.0);
    CHECK(o.immunogenicity_prob < 1.0);
    CHECK(o.conservation_pred >= 0.0);
    CHECK(o.conservation_pred <= 1.0);
    CHECK(std::isfinite(o.affinity_pred));
  }

  const std::vector<Peptide> too_long{Peptide("AAAAAAAAAAAAAAAA")};
  CHECK_THROWS_AS(model.forward(too_long, nn::Mode::eval, 1), ValidationError);
  CHECK_THROWS_AS(model.forward({}, nn::Mode::eval, 1), ValidationError);
}

TEST_CASE("full predictor gradient check with dropout off") {
  EpitopePredictor model({.dropout = 0.0});
  const auto data = seqdata::generate_synthetic({.n = 8, .seed = 5});
  const std::span<const EpitopeRecord> batch(data.records);
  auto loss = [&](bool with_gradients) {
    if (with_gradients) return model.accumulate_batch(batch, 1).mean_loss();
    return model.loss(batch).total;
  };
  const auto r = nn::grad_check(loss, model.params(), 50, 11);
  CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter);
}

TEST_CASE("fit runs exactly the epoch budget without early stopping") {
  const auto data = corpus(200);
  TrainConfig cfg{.epochs = 3, .patience = 0};
  const auto report = train_model1(data, cfg);
  CHECK(report.epochs_run() == 3);
  CHECK(report.stopped_epoch == 2);
  CHECK(report.val_loss.size() == 3);
  CHECK(report.train_accuracy.size() == 3);
  CHECK(report.val_accuracy.size() == 3);
}

TEST_CASE("fit aborts on a non-finite loss naming epoch and batch") {
  const auto data = corpus(200);
  PoisonedModel model(7);  // 160 train records / 32 = 5 batches per epoch
  try {
    fit(model, data, {.epochs = 5});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("batch 2") != std::string::npos);
  }
  auto unsplit = data;
  unsplit.split.reset();
  CHECK_THROWS_AS(train_model1(unsplit, {.epochs = 1}), ValidationError);
  CHECK_THROWS_AS(train_model1(data, {.epochs = 0}), ValidationError);
}

TEST_CASE("early stopping state machine") {
  EarlyStopping s(2, 0.1);
  CHECK(s.observe(1.0));
  CHECK(s.observe(0.95));  // new minimum but not a tolerance-sized gain
  CHECK_FALSE(s.should_stop());
  CHECK_FALSE(s.observe(0.97));
  CHECK(s.should_stop());
  CHECK(s.best() == 0.95);

  EarlyStopping never(0, 0.1);
  for (int i = 0; i < 50; ++i) never.observe(1.0);
  CHECK_FALSE(never.should_stop());
}

TEST_CASE("training learns the planted signal and is reproducible") {
  const auto data = corpus(2000);
  const TrainConfig cfg{.epochs = 20};
  const auto report = train_model1(data, cfg);
  const auto again = train_model1(data, cfg);

  CHECK(report.train_loss == again.train_loss);
  CHECK(report.val_loss == again.val_loss);
  CHECK(report.train_accuracy == again.train_accuracy);
  CHECK(report.val_accuracy == again.val_accuracy);
  CHECK(report.best_epoch == again.best_epoch);

  const auto n = report.epochs_run();
  CHECK(n == report.stopped_epoch + 1);
  CHECK(report.val_loss[report.best_epoch] == *std::min_element(report.val_loss.begin(),
                                                                report.val_loss.end()));
  CHECK(std::abs(report.train_accuracy[report.best_epoch] -
                 report.val_accuracy[report.best_epoch]) <= 0.1);

  EpitopePredictor model({}, report.best_checkpoint);
  const auto test = data.test_records();
  CHECK(model.evaluate(test).mean_loss() == report.val_loss[report.best_epoch]);

  std::vector<int> labels;
  std::vector<double> probs;
  double motif_mean = 0, plain_mean = 0;
  std::size_t motif_n = 0, plain_n = 0;
  for (const auto& r : test) {
    const double p = model.predict(r.peptide).immunogenicity_prob;
    labels.push_back(r.immunogenic);
    probs.push_back(p);
    if (r.peptide.contains("RWY")) {
      motif_mean += p;
      ++motif_n;
    } else {
      plain_mean += p;
      ++plain_n;
    }
  }
  CHECK(motif_mean / static_cast<double>(motif_n) > plain_mean / static_cast<double>(plain_n));
  CHECK(metrics::roc_auc(labels, probs) > 0.9);
}

TEST_CASE("larger immunogenicity weight never raises the best held-out BCE") {
  const auto data = corpus(1000);
  const auto test = data.test_records();
  double previous = std::numeric_limits<double>::infinity();
  for (double beta : {0.5, 1.0, 2.0}) {
    const auto report = train_model1(data, {.weights = {1.0, beta, 1.0}, .epochs = 30});
    const EpitopePredictor model({}, report.best_checkpoint);
    const double l_imm = model.loss(test).immunogenicity;
    MESSAGE("beta=", beta, " L_imm=", l_imm);
    CHECK(l_imm <= previous);
    previous = l_imm;
  }
}

TEST_CASE("predictor checkpoint round trip") {
  EpitopePredictor model({.width = 16, .ffn_width = 24, .init_seed = 9});
  const auto dir = std::filesystem::temp_directory_path() / "immunokit_test_predictor";
  std::filesystem::remove_all(dir);
  save_predictor(dir, model, {});
  const auto loaded = load_predictor(dir);
  CHECK(loaded.config().width == 16);
  CHECK(loaded.config().ffn_width == 24);
  const Peptide p("SIINFEKL");
  CHECK(loaded.predict(p).immunogenicity_prob == model.predict(p).immunogenicity_prob);
  CHECK(loaded.predict(p).affinity_pred == model.predict(p).affinity_pred);
  std::filesystem::remove_all(dir);
}

TEST_CASE("report CSV layout") {
  TrainReport r;
  r.train_loss = {1.0};
  r.val_loss = {0.5};
  r.train_accuracy = {0.25};
  r.val_accuracy = {0.75};
  std::ostringstream out;
  write_report_csv(out, r);
  CHECK(out.str() == "epoch,train_loss,val_loss,train_acc,val_acc\n0,1,0.5,0.25,0.75\n");
}
