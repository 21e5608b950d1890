#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "immunokit/error.hpp"
#include "immunokit/metrics.hpp"
#include "immunokit/numcore/grad_check.hpp"
#include "immunokit/pipeline/autoencoder.hpp"
#include "immunokit/pipeline/cnn.hpp"
#include "immunokit/pipeline/gan.hpp"
#include "immunokit/pipeline/selector.hpp"
#include "immunokit/rng.hpp"
#include "layer_check.hpp"

using namespace immunokit;
using namespace immunokit::pipeline;
using seqdata::EpitopeRecord;
using seqdata::Peptide;

namespace {

seqdata::Dataset corpus(std::size_t n, double signal = 0.9, std::uint64_t seed = 7) {
  return seqdata::split_dataset(
      seqdata::generate_synthetic({.n = n, .signal_strength = signal, .seed = seed}), 0.8, 7);
}

std::vector<Peptide> motif_positives(std::size_t n) {
  std::vector<Peptide> out;
  for (const auto& r : seqdata::generate_synthetic({.n = 2 * n}).records)
    if (r.immunogenic) out.push_back(r.peptide);
  return out;
}

std::vector<EpitopeRecord> fixture() {
  return seqdata::load_records(std::string(IMMUNOKIT_TEST_DATA) + "/top_epitopes.csv",
                               seqdata::RecordFormat::csv)
      .records;
}

std::vector<EpitopeRecord> random_records(Rng& rng, std::size_t n, bool with_score) {
  std::vector<EpitopeRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (int k = 0; k < 9; ++k) s += seqdata::kAminoAcids[rng.below(20)];
    EpitopeRecord r{Peptide(s), "HLA-A*02:01", 50.0, rng.uniform(0, 100), 1, {}};
    // coarse scores so that priority ties occur
    if (with_score) r.score = static_cast<double>(rng.below(5)) / 4.0;
    out.push_back(r);
  }
  return out;
}

double held_out_auc(const std::vector<EpitopeRecord>& test,
                    const std::function<double(const Peptide&)>& prob) {
  std::vector<int> labels;
  std::vector<double> probs;
  for (const auto& r : test) {
    labels.push_back(r.immunogenic);
    probs.push_back(prob(r.peptide));
  }
  return metrics::roc_auc(labels, probs);
}

}  // namespace

// ------------------------------------------------------------------ CNN

TEST_CASE("CNN gradient check") {
  CnnClassifier model({.dropout = 0.0});
  const auto data = seqdata::generate_synthetic({.n = 8, .seed = 2});
  const std::span<const EpitopeRecord> batch(data.records);
  auto loss = [&](bool with_gradients) {
    if (with_gradients) return model.accumulate_batch(batch, 1).mean_loss();
    return model.evaluate(batch).mean_loss();
  };
  const auto r = nn::grad_check(loss, model.params(), 50, 3);
  CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter);
}

TEST_CASE("CNN learns the planted signal") {
  const auto data = corpus(2000);
  const auto report = train_cnn_classifier(data, {.epochs = 30});
  CHECK(report.val_accuracy[report.best_epoch] >= 0.9);
  const CnnClassifier model({}, report.best_checkpoint);
  CHECK(model.evaluate(data.test_records()).accuracy() >= 0.9);
}

TEST_CASE("CNN on a signal-free corpus stays at chance") {
  const auto data = corpus(5000, 0.5);
  const auto report = train_cnn_classifier(data, {.epochs = 30});
  const CnnClassifier model({}, report.best_checkpoint);
  const double acc = model.evaluate(data.test_records()).accuracy();
  MESSAGE("held-out accuracy ", acc);
  CHECK(std::abs(acc - 0.5) <= 0.05);
}

TEST_CASE("CNN checkpoint round trip and length contract") {
  CnnClassifier model({.channels = 8, .init_seed = 4});
  const auto dir = std::filesystem::temp_directory_path() / "immunokit_test_cnn";
  std::filesystem::remove_all(dir);
  save_cnn(dir, model, {});
  const auto loaded = load_cnn(dir);
  const Peptide p("YLQPRTFLL");
  CHECK(loaded.probability(p) == model.probability(p));
  CHECK(loaded.config().channels == 8);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(model.probability(Peptide("AAAAAAAAAAAAAAAA")), ValidationError);
}

// ---------------------------------------------------------- autoencoder

TEST_CASE("autoencoder gradient check") {
  for (bool linear : {false, true}) {
    AutoencoderSelector model({.latent_dim = 12, .linear_codec = linear});
    const auto data = seqdata::generate_synthetic({.n = 8, .seed = 2});
    const std::span<const EpitopeRecord> batch(data.records);
    auto loss = [&](bool with_gradients) {
      if (with_gradients) return model.accumulate_batch(batch, 1).mean_loss();
      return model.evaluate(batch).mean_loss();
    };
    const auto r = nn::grad_check(loss, model.params(), 50, 5);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter);
  }
}

TEST_CASE("one-hot encoding") {
  const auto x = one_hot(Peptide("AC"), 3);
  CHECK(x.shape() == std::vector<std::size_t>{1, 60});
  CHECK(x[0] == 1.0);
  CHECK(x[20 + 1] == 1.0);
  double sum = 0;
  for (double v : x.data()) sum += v;
  CHECK(sum == 2.0);
  CHECK_THROWS_AS(one_hot(Peptide("ACDE"), 3), ValidationError);
}

TEST_CASE("linear autoencoder at full width reaches identity") {
  const auto data = corpus(400);
  const std::size_t width = AutoencoderConfig{}.input_width();
  const auto train = data.train_records();
  AutoencoderSelector fresh({.latent_dim = width, .linear_codec = true});
  const double before = fresh.reconstruction_error(train);
  const auto report = train_autoencoder_selector(
      data, width, {.weights = {1.0, 0.0, 0.0}, .epochs = 200, .patience = 0},
      {.linear_codec = true});
  const AutoencoderSelector model({.latent_dim = width, .linear_codec = true},
                                  report.best_checkpoint);
  const double after = model.reconstruction_error(train);
  MESSAGE("reconstruction error ", before, " -> ", after);
  CHECK(after < 1e-3 * before);
  CHECK_THROWS_AS(train_autoencoder_selector(data, width + 1, {.epochs = 1}), ValidationError);
}

TEST_CASE("autoencoder selector generalizes and ranks by immunogenicity") {
  const auto data = corpus(2000);
  const auto report = train_autoencoder_selector(data, 32, {.epochs = 40});
  const AutoencoderSelector model({}, report.best_checkpoint);
  const double train_err = model.reconstruction_error(data.train_records());
  const double test_err = model.reconstruction_error(data.test_records());
  MESSAGE("reconstruction train ", train_err, " held-out ", test_err);
  CHECK(std::isfinite(test_err));
  CHECK(test_err <= 3.0 * train_err);
  const double auc = held_out_auc(data.test_records(), [&](const Peptide& p) {
    return model.read(p).immunogenicity;
  });
  MESSAGE("head AUC ", auc);
  CHECK(auc > 0.85);

  const auto dir = std::filesystem::temp_directory_path() / "immunokit_test_autoencoder";
  std::filesystem::remove_all(dir);
  save_autoencoder(dir, model, {});
  const auto loaded = load_autoencoder(dir);
  const Peptide p("YLQPRTFLL");
  CHECK(loaded.read(p).immunogenicity == model.read(p).immunogenicity);
  CHECK(loaded.read(p).reconstruction_error == model.read(p).reconstruction_error);
  std::filesystem::remove_all(dir);
}

// ------------------------------------------------------------- selector

TEST_CASE("selector singleton and validation") {
  Rng rng(1);
  const auto one = random_records(rng, 1, true);
  for (SelectorWeights w : {SelectorWeights{1, 0, 0}, SelectorWeights{0, 3, 0},
                            SelectorWeights{0.2, 0.5, 4}}) {
    const auto s = score_epitopes(nullptr, one, w);
    REQUIRE(s.size() == 1);
    CHECK(s[0].epitope.peptide == one[0].peptide);
  }
  CHECK_THROWS_AS(score_epitopes(nullptr, {}, {}), ValidationError);
  CHECK_THROWS_AS(score_epitopes(nullptr, random_records(rng, 2, false), {}), ValidationError);
  CHECK_THROWS_AS(score_epitopes(nullptr, one, {-1, 1, 0}), ValidationError);
  CHECK_THROWS_AS(score_epitopes(nullptr, one, {0, 0, 0}), ValidationError);
}

TEST_CASE("selector fixture ordering") {
  const auto ranked = score_epitopes(nullptr, fixture(), {});
  REQUIRE(ranked.size() == 5);
  CHECK(ranked[0].epitope.peptide.str() == "YLQPRTFLL");
  const std::set<std::string> middle{ranked[1].epitope.peptide.str(),
                                     ranked[2].epitope.peptide.str()};
  const std::set<std::string> last{ranked[3].epitope.peptide.str(),
                                   ranked[4].epitope.peptide.str()};
  CHECK(middle == std::set<std::string>{"TTDPNFLGRY", "NQKLIANQF"});
  CHECK(last == std::set<std::string>{"LSPRWYFYI", "SPRWYFYLL"});

  std::ostringstream csv;
  write_scores_csv(csv, ranked);
  CHECK(csv.str().rfind("peptide,priority,imm,cons,rec_err\nYLQPRTFLL,0.98,0.98,0.945,0\n", 0) ==
        0);
}

TEST_CASE("selector with an immunogenicity-only weight follows the head") {
  const auto data = corpus(200);
  const AutoencoderSelector model({.init_seed = 3});
  const auto records = data.test_records();
  const auto ranked = score_epitopes(&model, records, {1, 0, 0});
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    CHECK(model.read(ranked[i - 1].epitope.peptide).immunogenicity >=
          model.read(ranked[i].epitope.peptide).immunogenicity);
  }
}

TEST_CASE("priority is affine in each weight") {
  Rng rng(2);
  const AutoencoderSelector model({.init_seed = 5});
  for (int trial = 0; trial < 100; ++trial) {
    const auto rec = random_records(rng, 1, rng.bernoulli(0.5));
    SelectorWeights base{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    const auto comps = score_epitopes(&model, rec, base)[0].components;
    for (int k = 0; k < 3; ++k) {
      auto at = [&](double value) {
        auto w = base;
        (k == 0 ? w.immunogenicity : k == 1 ? w.conservation : w.reconstruction) = value;
        return priority_of(comps, w);
      };
      const double p0 = at(0.0), p1 = at(1.0), pa = at(2.5);
      CHECK(std::abs(pa - (p0 + 2.5 * (p1 - p0))) < 1e-12);
    }
  }
  const std::map<std::string, double> c{{kComponentImmunogenicity, 0.8},
                                        {kComponentConservation, 0.6},
                                        {kComponentReconstruction, 0.5}};
  CHECK(priority_of(c, {1, 1, 1}) == doctest::Approx(0.8 + 0.6 - 0.5));
  CHECK(priority_of(c, {2, 0, 0}) == doctest::Approx(1.6));
  CHECK(normalized_reconstruction_error(0.0) == 0.0);
  CHECK(normalized_reconstruction_error(1.0) == 0.5);
}

TEST_CASE("ranking is total, deterministic and scale invariant") {
  Rng rng(3);
  const AutoencoderSelector model({.init_seed = 5});
  for (int trial = 0; trial < 50; ++trial) {
    const auto records = random_records(rng, 2 + rng.below(20), true);
    const SelectorWeights w{rng.uniform(0.1, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    const auto ranked = score_epitopes(&model, records, w);
    auto shuffled = records;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto again = score_epitopes(&model, shuffled, w);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      CHECK(ranked[i].epitope.peptide == again[i].epitope.peptide);
      for (std::size_t j = 0; j < ranked.size(); ++j) {
        if (i == j) continue;
        CHECK(ranks_before(ranked[i], ranked[j]) != ranks_before(ranked[j], ranked[i]));
        CHECK(ranks_before(ranked[i], ranked[j]) == (i < j));
      }
    }
    const double c = rng.uniform(0.1, 10);
    const auto scaled =
        score_epitopes(&model, records, {c * w.immunogenicity, c * w.conservation,
                                         c * w.reconstruction});
    CHECK(scaled[0].epitope.peptide == ranked[0].epitope.peptide);
  }
}

// ------------------------------------------------------------------ GAN

TEST_CASE("GAN discriminator and generator gradients") {
  GanModel model({.init_seed = 3});
  Rng rng(4);
  {
    nn::ParamStore& disc = model.discriminator_params();
    disc.add("input", {9, 20}).value = layer_check::random_array(rng, {9, 20});
    auto loss = [&](bool with_gradients) {
      const double z = model.discriminator_forward(disc.value("input"));
      if (with_gradients) nn::add_inplace(disc.grad("input"), model.discriminator_backward(1.0));
      return z;
    };
    const auto r = nn::grad_check(loss, disc, 50, 5);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter);
  }
  {
    const auto noise = model.draw_noise(rng);
    const auto coeff = layer_check::random_array(rng, {9, 20});
    auto loss = [&](bool with_gradients) {
      if (with_gradients) {
        Rng sample_rng(1);
        model.generator_forward(noise, sample_rng);
        model.generator_backward(coeff);
      }
      return layer_check::weighted_sum(model.probabilities(noise), coeff);
    };
    const auto r = nn::grad_check(loss, model.generator_params(), 50, 6);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter);
  }
}

TEST_CASE("untrained GAN discriminator is at chance") {
  const GanModel model({.init_seed = 7});
  const auto real = motif_positives(500);
  const auto fake = sample_training_style(model, real.size(), 9);
  const double acc = discriminator_accuracy(model, real, fake);
  MESSAGE("accuracy ", acc);
  CHECK(std::abs(acc - 0.5) <= 0.1);
}

TEST_CASE("GAN generation determinism and candidate contract") {
  const GanModel model({.init_seed = 7});
  Rng a(5), b(5);
  const auto za = model.draw_noise(a);
  CHECK(model.decode_argmax(za) == model.decode_argmax(model.draw_noise(b)));
  Rng sa(6), sb(6);
  CHECK(model.sample(za, sa) == model.sample(za, sb));

  const auto four = generate_candidates(model, 4, 11);
  CHECK(four.size() == 4);
  for (std::size_t i = 1; i < four.size(); ++i) CHECK(four[i - 1].realism >= four[i].realism);
  CHECK_THROWS_AS(generate_candidates(model, 0, 1), ValidationError);

  std::ostringstream fasta;
  write_samples_fasta(fasta, four);
  CHECK(fasta.str().rfind(">cand1 realism=", 0) == 0);
}

TEST_CASE("GAN training run") {
  const auto positives = motif_positives(400);
  const TrainConfig cfg{.epochs = 3, .seed = 7};
  const auto run = train_gan(positives, cfg);
  const auto again = train_gan(positives, cfg);
  CHECK(run.report.d_loss.size() == 3);
  CHECK(run.report.g_loss.size() == 3);
  CHECK(run.report.d_loss == again.report.d_loss);
  CHECK(run.report.g_loss == again.report.g_loss);
  for (auto d : run.report.probe_distinct) CHECK(d >= 8);

  const auto samples = generate_candidates(run.model, 10000, 3);
  CHECK(samples.size() == 10000);
  for (const auto& s : samples) {
    CHECK(s.peptide.size() == 9);
    CHECK_NOTHROW(Peptide(s.peptide.str()));
    CHECK(s.realism > 0.0);
    CHECK(s.realism < 1.0);
  }

  const auto dir = std::filesystem::temp_directory_path() / "immunokit_test_gan";
  std::filesystem::remove_all(dir);
  save_gan(dir, run.model, cfg.adam);
  const auto loaded = load_gan(dir);
  const auto a = generate_candidates(loaded, 8, 3);
  const auto b = generate_candidates(run.model, 8, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].peptide == b[i].peptide);
    CHECK(a[i].realism == b[i].realism);
  }
  std::filesystem::remove_all(dir);

  std::ostringstream log;
  write_gan_log_csv(log, run.report);
  CHECK(log.str().rfind("epoch,d_loss,g_loss,probe_distinct\n0,", 0) == 0);
}

TEST_CASE("GAN guards") {
  const auto positives = motif_positives(400);
  CHECK_THROWS_AS(train_gan(std::span(positives).first(150), {.epochs = 1}), ValidationError);
  auto mixed = positives;
  mixed.push_back(Peptide("AAAAAAAAAA"));
  CHECK_THROWS_AS(train_gan(mixed, {.epochs = 1}), ValidationError);
  try {
    train_gan(positives, {.epochs = 2}, {.min_distinct = 257});
    FAIL("expected ModeCollapseError");
  } catch (const ModeCollapseError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}
