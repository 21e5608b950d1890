#include "immunokit/pipeline/autoencoder.hpp"

#include <algorithm>
#include <cmath>

#include "immunokit/error.hpp"
#include "immunokit/numcore/checkpoint.hpp"
#include "immunokit/predictor.hpp"
#include "immunokit/rng.hpp"

namespace immunokit::pipeline {

namespace {

constexpr const char* kModelTag = "autoencoder_selector";

double bce_item(int label, double prob) {
  const double p = std::clamp(prob, predictor::kProbabilityClamp, 1.0 - predictor::kProbabilityClamp);
  return label ? -std::log(p) : -std::log1p(-p);
}

}  // namespace

void AutoencoderConfig::validate() const {
  if (max_length == 0) throw ValidationError("max_length must be positive");
  if (latent_dim == 0 || latent_dim > input_width()) {
    throw ValidationError("latent_dim must lie in [1, " + std::to_string(input_width()) + "]");
  }
}

nlohmann::ordered_json AutoencoderConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = kModelTag;
  j["max_length"] = max_length;
  j["latent_dim"] = latent_dim;
  j["linear_codec"] = linear_codec;
  j["init_seed"] = init_seed;
  return j;
}

AutoencoderConfig AutoencoderConfig::from_json(const nlohmann::json& j) {
  AutoencoderConfig c;
  try {
    if (j.value("model", std::string()) != kModelTag) {
      throw ValidationError("checkpoint does not hold an autoencoder selector");
    }
    c.max_length = j.at("max_length").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.linear_codec = j.at("linear_codec").get<bool>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model metadata: ") + e.what());
  }
  c.validate();
  return c;
}

nn::DenseArray one_hot(const seqdata::Peptide& peptide, std::size_t max_length) {
  if (peptide.size() > max_length) {
    throw ValidationError("peptide " + peptide.str() + " exceeds the maximum length " +
                          std::to_string(max_length));
  }
  nn::DenseArray x({1, max_length * seqdata::kAlphabetSize});
  const auto idx = peptide.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) x[i * seqdata::kAlphabetSize + idx[i]] = 1.0;
  return x;
}

AutoencoderSelector::AutoencoderSelector(AutoencoderConfig config)
    : config_((config.validate(), config)),
      encoder_("encoder", config_.input_width(), config_.latent_dim,
               config_.linear_codec ? nn::Activation::identity : nn::Activation::tanh),
      decoder_("decoder", config_.latent_dim, config_.input_width()),
      heads_("heads", config_.latent_dim, 2) {
  Rng rng(config_.init_seed);
  encoder_.init(params_, rng);
  decoder_.init(params_, rng);
  heads_.init(params_, rng);
}

AutoencoderSelector::AutoencoderSelector(AutoencoderConfig config, nn::ParamStore params)
    : AutoencoderSelector(config) {
  for (const auto& [name, p] : params_) {
    if (!params.contains(name)) throw ValidationError("missing parameter '" + name + "'");
    nn::expect_shape(params.value(name), p.value.shape(), "parameter '" + name + "'");
  }
  if (params.entry_count() != params_.entry_count()) {
    throw ValidationError("parameter set does not match the model architecture");
  }
  params_ = std::move(params);
}

SelectorReadout AutoencoderSelector::read(const seqdata::Peptide& peptide) const {
  const auto x = one_hot(peptide, config_.max_length);
  const auto code = encoder_.infer(params_, x);
  const auto recon = decoder_.infer(params_, code);
  const auto heads = heads_.infer(params_, code);
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err += (recon[i] - x[i]) * (recon[i] - x[i]);
  return SelectorReadout{nn::sigmoid(heads[0]), nn::sigmoid(heads[1]),
                         err / static_cast<double>(x.size())};
}

double AutoencoderSelector::reconstruction_error(
    std::span<const seqdata::EpitopeRecord> records) const {
  if (records.empty()) throw ValidationError("reconstruction error of an empty record list");
  double sum = 0.0;
  for (const auto& r : records) sum += read(r.peptide).reconstruction_error;
  return sum / static_cast<double>(records.size());
}

double AutoencoderSelector::item_loss(const seqdata::EpitopeRecord& r,
                                      const SelectorReadout& out) const {
  const double dc = out.conservation - predictor::conservation_target(r);
  return predictor::weighted_total(out.reconstruction_error, bce_item(r.immunogenic, out.immunogenicity),
                                   dc * dc, weights_);
}

BatchStats AutoencoderSelector::accumulate_batch(std::span<const seqdata::EpitopeRecord> batch,
                                                 std::uint64_t seed) {
  BatchStats stats;
  if (batch.empty()) return stats;
  const double inv = 1.0 / static_cast<double>(batch.size());
  const auto& w = weights_;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = batch[i];
    const std::uint64_t s = derive_seed(seed, i);
    const auto x = one_hot(r.peptide, config_.max_length);
    const auto code = encoder_.forward(params_, x, nn::Mode::train, s);
    const auto recon = decoder_.forward(params_, code, nn::Mode::train, s);
    const auto heads = heads_.forward(params_, code, nn::Mode::train, s);

    SelectorReadout out{nn::sigmoid(heads[0]), nn::sigmoid(heads[1]), 0.0};
    const double width = static_cast<double>(x.size());
    nn::DenseArray g_recon({1, x.size()});
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = recon[j] - x[j];
      out.reconstruction_error += d * d;
      g_recon[j] = 2.0 * w.alpha * d / width * inv;
    }
    out.reconstruction_error /= width;
    stats.loss_sum += item_loss(r, out);
    stats.correct += (out.immunogenicity >= 0.5) == (r.immunogenic == 1);
    ++stats.count;

    const double dc = out.conservation - predictor::conservation_target(r);
    nn::DenseArray g_heads({1, 2});
    g_heads[0] = w.beta * (out.immunogenicity - r.immunogenic) * inv;
    g_heads[1] = 2.0 * w.gamma * dc * out.conservation * (1.0 - out.conservation) * inv;
    auto g_code = decoder_.backward(params_, g_recon);
    nn::add_inplace(g_code, heads_.backward(params_, g_heads));
    encoder_.backward(params_, g_code);
  }
  return stats;
}

BatchStats AutoencoderSelector::evaluate(std::span<const seqdata::EpitopeRecord> records) const {
  BatchStats stats;
  for (const auto& r : records) {
    const auto out = read(r.peptide);
    stats.loss_sum += item_loss(r, out);
    stats.correct += (out.immunogenicity >= 0.5) == (r.immunogenic == 1);
    ++stats.count;
  }
  return stats;
}

TrainReport train_autoencoder_selector(const seqdata::Dataset& data, std::size_t latent_dim,
                                       const TrainConfig& config, AutoencoderConfig model,
                                       const EpochCallback& on_epoch) {
  config.validate();
  model.latent_dim = latent_dim;
  model.init_seed = config.seed;
  AutoencoderSelector selector(model);
  selector.set_loss_weights(config.weights);
  return fit(selector, data, config, on_epoch);
}

void save_autoencoder(const std::filesystem::path& dir, const AutoencoderSelector& model,
                      const nn::AdamConfig& adam) {
  nn::save_checkpoint(dir, model.params(), adam, model.config().to_json());
}

AutoencoderSelector load_autoencoder(const std::filesystem::path& dir) {
  auto ckpt = nn::load_checkpoint(dir);
  return AutoencoderSelector(AutoencoderConfig::from_json(ckpt.metadata), std::move(ckpt.params));
}

}  // namespace immunokit::pipeline
