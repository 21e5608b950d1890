#include "immunokit/pipeline/cnn.hpp"

#include <algorithm>
#include <cmath>

#include "immunokit/error.hpp"
#include "immunokit/numcore/checkpoint.hpp"
#include "immunokit/predictor.hpp"
#include "immunokit/rng.hpp"

namespace immunokit::pipeline {

namespace {

constexpr const char* kModelTag = "cnn_classifier";

double bce_item(int label, double prob) {
  const double p = std::clamp(prob, predictor::kProbabilityClamp, 1.0 - predictor::kProbabilityClamp);
  return label ? -std::log(p) : -std::log1p(-p);
}

}  // namespace

void CnnConfig::validate() const {
  if (max_length == 0) throw ValidationError("max_length must be positive");
  if (embed_dim == 0 || channels == 0) throw ValidationError("layer widths must be positive");
  if (kernel % 2 == 0) throw ValidationError("convolution kernel must be odd");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

nlohmann::ordered_json CnnConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = kModelTag;
  j["max_length"] = max_length;
  j["embed_dim"] = embed_dim;
  j["channels"] = channels;
  j["kernel"] = kernel;
  j["dropout"] = dropout;
  j["init_seed"] = init_seed;
  return j;
}

CnnConfig CnnConfig::from_json(const nlohmann::json& j) {
  CnnConfig c;
  try {
    if (j.value("model", std::string()) != kModelTag) {
      throw ValidationError("checkpoint does not hold a CNN classifier");
    }
    c.max_length = j.at("max_length").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model metadata: ") + e.what());
  }
  c.validate();
  return c;
}

CnnClassifier::CnnClassifier(CnnConfig config)
    : config_((config.validate(), config)),
      embed_("embed", kVocab, config_.embed_dim),
      conv_("conv", config_.embed_dim, config_.channels, config_.kernel, nn::Activation::tanh),
      drop_(config_.dropout),
      head_("head", config_.channels, 1) {
  Rng rng(config_.init_seed);
  embed_.init(params_, rng);
  conv_.init(params_, rng);
  head_.init(params_, rng);
}

CnnClassifier::CnnClassifier(CnnConfig config, nn::ParamStore params) : CnnClassifier(config) {
  for (const auto& [name, p] : params_) {
    if (!params.contains(name)) throw ValidationError("missing parameter '" + name + "'");
    nn::expect_shape(params.value(name), p.value.shape(), "parameter '" + name + "'");
  }
  if (params.entry_count() != params_.entry_count()) {
    throw ValidationError("parameter set does not match the model architecture");
  }
  params_ = std::move(params);
}

nn::DenseArray CnnClassifier::tokens(const seqdata::Peptide& peptide) const {
  if (peptide.size() > config_.max_length) {
    throw ValidationError("peptide " + peptide.str() + " exceeds the maximum length " +
                          std::to_string(config_.max_length));
  }
  const auto idx = peptide.indices();
  nn::DenseArray out({idx.size() + 2});
  out[0] = static_cast<double>(kBos);
  for (std::size_t i = 0; i < idx.size(); ++i) out[i + 1] = static_cast<double>(idx[i]);
  out[idx.size() + 1] = static_cast<double>(kEos);
  return out;
}

double CnnClassifier::logit(const seqdata::Peptide& peptide) const {
  auto x = conv_.infer(params_, embed_.infer(params_, tokens(peptide)));
  return head_.infer(params_, pool_.infer(x))[0];
}

double CnnClassifier::probability(const seqdata::Peptide& peptide) const {
  return nn::sigmoid(logit(peptide));
}

BatchStats CnnClassifier::accumulate_batch(std::span<const seqdata::EpitopeRecord> batch,
                                           std::uint64_t seed) {
  BatchStats stats;
  if (batch.empty()) return stats;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = batch[i];
    const std::uint64_t s = derive_seed(seed, i);
    auto x = embed_.forward(params_, tokens(r.peptide), nn::Mode::train, s);
    x = conv_.forward(params_, x, nn::Mode::train, s);
    x = drop_.forward(params_, pool_.forward(x), nn::Mode::train, s);
    const auto out = head_.forward(params_, x, nn::Mode::train, s);
    const double p = nn::sigmoid(out[0]);
    stats.loss_sum += bce_item(r.immunogenic, p);
    stats.correct += (p >= 0.5) == (r.immunogenic == 1);
    ++stats.count;

    nn::DenseArray grad({1, 1}, (p - r.immunogenic) * inv);
    auto g = drop_.backward(params_, head_.backward(params_, grad));
    g = conv_.backward(params_, pool_.backward(g));
    embed_.backward(params_, g);
  }
  return stats;
}

BatchStats CnnClassifier::evaluate(std::span<const seqdata::EpitopeRecord> records) const {
  BatchStats stats;
  for (const auto& r : records) {
    const double p = probability(r.peptide);
    stats.loss_sum += bce_item(r.immunogenic, p);
    stats.correct += (p >= 0.5) == (r.immunogenic == 1);
    ++stats.count;
  }
  return stats;
}

TrainReport train_cnn_classifier(const seqdata::Dataset& data, const TrainConfig& config,
                                 CnnConfig model, const EpochCallback& on_epoch) {
  config.validate();
  model.dropout = config.dropout;
  model.init_seed = config.seed;
  CnnClassifier classifier(model);
  return fit(classifier, data, config, on_epoch);
}

void save_cnn(const std::filesystem::path& dir, const CnnClassifier& model,
              const nn::AdamConfig& adam) {
  nn::save_checkpoint(dir, model.params(), adam, model.config().to_json());
}

CnnClassifier load_cnn(const std::filesystem::path& dir) {
  auto ckpt = nn::load_checkpoint(dir);
  return CnnClassifier(CnnConfig::from_json(ckpt.metadata), std::move(ckpt.params));
}

}  // namespace immunokit::pipeline
