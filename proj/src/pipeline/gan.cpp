#include "immunokit/pipeline/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "immunokit/numcore/adam.hpp"
#include "immunokit/numcore/checkpoint.hpp"
#include "immunokit/rng.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::pipeline {

namespace {

constexpr const char* kModelTag = "peptide_gan";
constexpr std::size_t kAlphabet = seqdata::kAlphabetSize;

double clamp_open(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

// -log(sigmoid(z)) and -log(1 - sigmoid(z)), computed stably.
double neg_log_sigmoid(double z) { return z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }
double neg_log_one_minus_sigmoid(double z) { return neg_log_sigmoid(-z); }

void check_store(const nn::ParamStore& reference, const nn::ParamStore& given,
                 const std::string& what) {
  for (const auto& [name, p] : reference) {
    if (!given.contains(name)) throw ValidationError(what + ": missing parameter '" + name + "'");
    nn::expect_shape(given.value(name), p.value.shape(), what + " parameter '" + name + "'");
  }
  if (given.entry_count() != reference.entry_count()) {
    throw ValidationError(what + ": parameter set does not match the architecture");
  }
}

seqdata::Peptide peptide_from_indices(const std::vector<std::size_t>& idx) {
  std::string s;
  for (auto i : idx) s.push_back(seqdata::kAminoAcids[i]);
  return seqdata::Peptide(s);
}

}  // namespace

void GanConfig::validate() const {
  if (length == 0) throw ValidationError("GAN peptide length must be positive");
  if (noise_dim == 0 || hidden == 0 || disc_channels == 0) {
    throw ValidationError("GAN layer widths must be positive");
  }
  if (kernel % 2 == 0) throw ValidationError("convolution kernel must be odd");
  if (probe_size == 0) throw ValidationError("probe size must be positive");
}

nlohmann::ordered_json GanConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = kModelTag;
  j["length"] = length;
  j["noise_dim"] = noise_dim;
  j["hidden"] = hidden;
  j["disc_channels"] = disc_channels;
  j["kernel"] = kernel;
  j["probe_size"] = probe_size;
  j["min_distinct"] = min_distinct;
  j["init_seed"] = init_seed;
  return j;
}

GanConfig GanConfig::from_json(const nlohmann::json& j) {
  GanConfig c;
  try {
    if (j.value("model", std::string()) != kModelTag) {
      throw ValidationError("checkpoint does not hold a peptide GAN");
    }
    c.length = j.at("length").get<std::size_t>();
    c.noise_dim = j.at("noise_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.disc_channels = j.at("disc_channels").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.probe_size = j.at("probe_size").get<std::size_t>();
    c.min_distinct = j.at("min_distinct").get<std::size_t>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model metadata: ") + e.what());
  }
  c.validate();
  return c;
}

GanModel::GanModel(GanConfig config)
    : config_((config.validate(), config)),
      gen_hidden_("gen.hidden", config_.noise_dim, config_.hidden, nn::Activation::tanh),
      gen_out_("gen.out", config_.hidden, config_.length * kAlphabet),
      disc_conv_("disc.conv", kAlphabet, config_.disc_channels, config_.kernel,
                 nn::Activation::tanh),
      disc_head_("disc.head", config_.disc_channels, 1) {
  Rng rng(config_.init_seed);
  gen_hidden_.init(gen_params_, rng);
  gen_out_.init(gen_params_, rng);
  disc_conv_.init(disc_params_, rng);
  disc_head_.init(disc_params_, rng);
}

GanModel::GanModel(GanConfig config, nn::ParamStore generator, nn::ParamStore discriminator)
    : GanModel(config) {
  check_store(gen_params_, generator, "generator");
  check_store(disc_params_, discriminator, "discriminator");
  gen_params_ = std::move(generator);
  disc_params_ = std::move(discriminator);
}

nn::DenseArray GanModel::draw_noise(Rng& rng) const {
  nn::DenseArray z({1, config_.noise_dim});
  for (auto& v : z.data()) v = rng.normal();
  return z;
}

nn::DenseArray GanModel::probabilities(const nn::DenseArray& noise) const {
  auto logits = gen_out_.infer(gen_params_, gen_hidden_.infer(gen_params_, noise))
                    .reshaped({config_.length, kAlphabet});
  nn::softmax_rows_inplace(logits);
  return logits;
}

seqdata::Peptide GanModel::decode_argmax(const nn::DenseArray& noise) const {
  const auto probs = probabilities(noise);
  std::vector<std::size_t> idx(config_.length);
  for (std::size_t r = 0; r < config_.length; ++r) {
    const auto row = probs.row(r);
    idx[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return peptide_from_indices(idx);
}

namespace {

std::size_t draw_residue(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    acc += probs[c];
    if (u < acc) return c;
  }
  return probs.size() - 1;
}

}  // namespace

seqdata::Peptide GanModel::sample(const nn::DenseArray& noise, Rng& rng) const {
  const auto probs = probabilities(noise);
  std::vector<std::size_t> idx(config_.length);
  for (std::size_t r = 0; r < config_.length; ++r) idx[r] = draw_residue(probs.row(r), rng);
  return peptide_from_indices(idx);
}

nn::DenseArray GanModel::encode(const seqdata::Peptide& peptide) const {
  if (peptide.size() != config_.length) {
    throw ValidationError("peptide " + peptide.str() + " does not have the GAN length " +
                          std::to_string(config_.length));
  }
  nn::DenseArray x = nn::DenseArray::matrix(config_.length, kAlphabet);
  const auto idx = peptide.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) x(i, idx[i]) = 1.0;
  return x;
}

double GanModel::discriminator_logit(const nn::DenseArray& one_hot) const {
  return disc_head_.infer(disc_params_, disc_pool_.infer(disc_conv_.infer(disc_params_, one_hot)))[0];
}

double GanModel::realism(const seqdata::Peptide& peptide) const {
  return clamp_open(nn::sigmoid(discriminator_logit(encode(peptide))));
}

nn::DenseArray GanModel::generator_forward(const nn::DenseArray& noise, Rng& rng) {
  auto h = gen_hidden_.forward(gen_params_, noise, nn::Mode::train, 0);
  auto logits = gen_out_.forward(gen_params_, h, nn::Mode::train, 0)
                    .reshaped({config_.length, kAlphabet});
  nn::softmax_rows_inplace(logits);
  cached_probs_ = logits;
  nn::DenseArray one_hot = nn::DenseArray::matrix(config_.length, kAlphabet);
  for (std::size_t r = 0; r < config_.length; ++r) {
    one_hot(r, draw_residue(cached_probs_.row(r), rng)) = 1.0;
  }
  return one_hot;
}

void GanModel::generator_backward(const nn::DenseArray& grad_one_hot) {
  if (cached_probs_.size() == 0) {
    throw ValidationError("generator backward called before a train-mode forward");
  }
  // Straight-through: d one_hot / d probs taken as the identity.
  nn::DenseArray g_logits = nn::DenseArray::matrix(config_.length, kAlphabet);
  for (std::size_t r = 0; r < config_.length; ++r) {
    const auto p = cached_probs_.row(r);
    const auto g = grad_one_hot.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < kAlphabet; ++c) dot += p[c] * g[c];
    for (std::size_t c = 0; c < kAlphabet; ++c) g_logits(r, c) = p[c] * (g[c] - dot);
  }
  auto g = gen_out_.backward(gen_params_, g_logits.reshaped({1, config_.length * kAlphabet}));
  gen_hidden_.backward(gen_params_, g);
}

double GanModel::discriminator_forward(const nn::DenseArray& one_hot) {
  auto x = disc_conv_.forward(disc_params_, one_hot, nn::Mode::train, 0);
  return disc_head_.forward(disc_params_, disc_pool_.forward(x), nn::Mode::train, 0)[0];
}

nn::DenseArray GanModel::discriminator_backward(double grad_logit) {
  nn::DenseArray g({1, 1}, grad_logit);
  return disc_conv_.backward(disc_params_, disc_pool_.backward(disc_head_.backward(disc_params_, g)));
}

std::vector<seqdata::Peptide> sample_training_style(const GanModel& model, std::size_t n,
                                                    std::uint64_t seed) {
  std::vector<seqdata::Peptide> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const auto z = model.draw_noise(rng);
    out.push_back(model.sample(z, rng));
  }
  return out;
}

GanTraining train_gan(std::span<const seqdata::Peptide> positives, const TrainConfig& config,
                      GanConfig model_config) {
  config.validate();
  if (positives.size() < 200) {
    throw ValidationError("GAN training needs at least 200 positive peptides, got " +
                          std::to_string(positives.size()));
  }
  const std::size_t length = positives.front().size();
  for (const auto& p : positives) {
    if (p.size() != length) throw ValidationError("GAN training peptides must share one length");
  }
  model_config.length = length;
  model_config.init_seed = config.seed;
  GanTraining run{GanModel(model_config), {}};
  GanModel& model = run.model;
  auto& gen = model.generator_params();
  auto& disc = model.discriminator_params();

  std::vector<nn::DenseArray> real;
  real.reserve(positives.size());
  for (const auto& p : positives) real.push_back(model.encode(p));

  std::vector<std::size_t> order(real.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 3 * epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    }
    Rng rng(derive_seed(config.seed, 3 * epoch + 1));
    double d_sum = 0.0, g_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batches) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(stop - start);

      // Discriminator: real -> 1, generated -> 0.
      disc.zero_grad();
      double d_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const double z_real = model.discriminator_forward(real[order[i]]);
        d_loss += neg_log_sigmoid(z_real) * inv;
        model.discriminator_backward((nn::sigmoid(z_real) - 1.0) * inv);
        const auto fake = model.generator_forward(model.draw_noise(rng), rng);
        const double z_fake = model.discriminator_forward(fake);
        d_loss += neg_log_one_minus_sigmoid(z_fake) * inv;
        model.discriminator_backward(nn::sigmoid(z_fake) * inv);
      }
      gen.zero_grad();
      nn::adam_step(disc, config.adam);

      // Generator: non-saturating -log D(G(z)).
      double g_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto fake = model.generator_forward(model.draw_noise(rng), rng);
        const double z_fake = model.discriminator_forward(fake);
        g_loss += neg_log_sigmoid(z_fake) * inv;
        model.generator_backward(model.discriminator_backward((nn::sigmoid(z_fake) - 1.0) * inv));
      }
      nn::adam_step(gen, config.adam);
      disc.zero_grad();

      if (!std::isfinite(d_loss) || !std::isfinite(g_loss)) {
        throw NumericError("non-finite GAN loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      d_sum += d_loss;
      g_sum += g_loss;
    }
    run.report.d_loss.push_back(d_sum / static_cast<double>(batches));
    run.report.g_loss.push_back(g_sum / static_cast<double>(batches));

    const auto probe = sample_training_style(model, model_config.probe_size,
                                             derive_seed(config.seed, 3 * epoch + 2));
    const std::set<seqdata::Peptide> distinct(probe.begin(), probe.end());
    run.report.probe_distinct.push_back(distinct.size());
    if (distinct.size() < model_config.min_distinct) {
      throw ModeCollapseError("GAN mode collapse at epoch " + std::to_string(epoch) + ": " +
                              std::to_string(distinct.size()) + " distinct peptides in a probe of " +
                              std::to_string(probe.size()));
    }
  }
  return run;
}

std::vector<GanSample> generate_candidates(const GanModel& model, std::size_t n,
                                           std::uint64_t seed) {
  if (n == 0) throw ValidationError("candidate count must be positive");
  std::vector<GanSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    auto peptide = model.decode_argmax(model.draw_noise(rng));
    const double realism = model.realism(peptide);
    out.push_back(GanSample{std::move(peptide), realism});
  }
  std::stable_sort(out.begin(), out.end(), [](const GanSample& a, const GanSample& b) {
    if (a.realism != b.realism) return a.realism > b.realism;
    return a.peptide < b.peptide;
  });
  return out;
}

double discriminator_accuracy(const GanModel& model, std::span<const seqdata::Peptide> real,
                              std::span<const seqdata::Peptide> fake) {
  if (real.empty() && fake.empty()) throw ValidationError("empty discriminator probe");
  std::size_t correct = 0;
  for (const auto& p : real) correct += model.realism(p) >= 0.5;
  for (const auto& p : fake) correct += model.realism(p) < 0.5;
  return static_cast<double>(correct) / static_cast<double>(real.size() + fake.size());
}

void write_samples_fasta(std::ostream& out, const std::vector<GanSample>& samples) {
  std::vector<seqdata::FastaEntry> entries;
  entries.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    entries.push_back({"cand" + std::to_string(i + 1) + " realism=" +
                           format_number(samples[i].realism),
                       samples[i].peptide.str()});
  }
  seqdata::write_fasta(out, entries);
}

void save_gan(const std::filesystem::path& dir, const GanModel& model, const nn::AdamConfig& adam) {
  nn::save_checkpoint(dir / "generator", model.generator_params(), adam, model.config().to_json());
  nn::save_checkpoint(dir / "discriminator", model.discriminator_params(), adam,
                      model.config().to_json());
}

GanModel load_gan(const std::filesystem::path& dir) {
  auto gen = nn::load_checkpoint(dir / "generator");
  auto disc = nn::load_checkpoint(dir / "discriminator");
  return GanModel(GanConfig::from_json(gen.metadata), std::move(gen.params), std::move(disc.params));
}

void write_gan_log_csv(std::ostream& out, const GanReport& report) {
  out << "epoch,d_loss,g_loss,probe_distinct\n";
  for (std::size_t e = 0; e < report.d_loss.size(); ++e) {
    out << e << ',' << format_number(report.d_loss[e]) << ',' << format_number(report.g_loss[e])
        << ',' << report.probe_distinct[e] << '\n';
  }
}

}  // namespace immunokit::pipeline
