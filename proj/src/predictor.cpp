#include "immunokit/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "immunokit/error.hpp"
#include "immunokit/numcore/checkpoint.hpp"
#include "immunokit/rng.hpp"

namespace immunokit::predictor {

namespace {

constexpr std::size_t kHeadCount = 3;

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

double bce_term(int label, double prob) {
  const double p = clamp_probability(prob);
  return label ? -std::log(p) : -std::log1p(-p);
}

double logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

}  // namespace

void Model1Config::validate() const {
  if (max_length == 0) throw ValidationError("max_length must be positive");
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ValidationError("width must be a positive multiple of heads");
  }
  if (ffn_width == 0) throw ValidationError("ffn_width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

nlohmann::ordered_json Model1Config::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = "transformer_multitask";
  j["max_length"] = max_length;
  j["width"] = width;
  j["heads"] = heads;
  j["ffn_width"] = ffn_width;
  j["dropout"] = dropout;
  j["init_seed"] = init_seed;
  return j;
}

Model1Config Model1Config::from_json(const nlohmann::json& j) {
  Model1Config c;
  try {
    if (j.value("model", std::string()) != "transformer_multitask") {
      throw ValidationError("checkpoint does not hold a transformer multi-task model");
    }
    c.max_length = j.at("max_length").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ffn_width = j.at("ffn_width").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model metadata: ") + e.what());
  }
  c.validate();
  return c;
}

double bce(std::span<const int> labels, std::span<const double> probs) {
  if (labels.empty()) throw ValidationError("bce: empty input");
  if (labels.size() != probs.size()) throw ValidationError("bce: label and probability counts differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) sum += bce_term(labels[i], probs[i]);
  return sum / static_cast<double>(labels.size());
}

double weighted_total(double affinity, double immunogenicity, double conservation,
                      const LossWeights& w) {
  return w.alpha * affinity + w.beta * immunogenicity + w.gamma * conservation;
}

double affinity_target(const seqdata::EpitopeRecord& r) { return std::log10(r.affinity_nm); }
double conservation_target(const seqdata::EpitopeRecord& r) { return r.conservation_pct / 100.0; }

LossParts multitask_loss(std::span<const Model1Output> outputs,
                         std::span<const seqdata::EpitopeRecord> targets, const LossWeights& w) {
  if (outputs.empty()) throw ValidationError("multitask_loss: empty batch");
  if (outputs.size() != targets.size()) {
    throw ValidationError("multitask_loss: output and target counts differ");
  }
  LossParts parts;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const double da = outputs[i].affinity_pred - affinity_target(targets[i]);
    const double dc = outputs[i].conservation_pred - conservation_target(targets[i]);
    parts.affinity += da * da;
    parts.conservation += dc * dc;
    parts.immunogenicity += bce_term(targets[i].immunogenic, outputs[i].immunogenicity_prob);
  }
  const double n = static_cast<double>(outputs.size());
  parts.affinity /= n;
  parts.immunogenicity /= n;
  parts.conservation /= n;
  parts.total = weighted_total(parts.affinity, parts.immunogenicity, parts.conservation, w);
  return parts;
}

Model1Output to_output(const nn::DenseArray& heads) {
  return Model1Output{heads[0], clamp_probability(nn::sigmoid(heads[1])), nn::sigmoid(heads[2])};
}

EpitopePredictor::Layers EpitopePredictor::build(const Model1Config& c) {
  return Layers{
      nn::Embedding("embed", seqdata::kAlphabetSize, c.width),
      nn::SelfAttention("attention", c.width, c.heads),
      nn::Dropout(c.dropout),
      nn::Dense("ffn.in", c.width, c.ffn_width, nn::Activation::tanh),
      nn::Dense("ffn.out", c.ffn_width, c.width),
      nn::Dropout(c.dropout),
      nn::Dense("shared", c.width, c.width, nn::Activation::tanh),
      nn::Dropout(c.dropout),
      nn::Dense("head", c.width, kHeadCount),
  };
}

EpitopePredictor::EpitopePredictor(Model1Config config)
    : config_((config.validate(), config)), layers_(build(config_)) {
  Rng rng(config_.init_seed);
  layers_.embed.init(params_, rng);
  layers_.attention.init(params_, rng);
  layers_.ffn_in.init(params_, rng);
  layers_.ffn_out.init(params_, rng);
  layers_.shared.init(params_, rng);
  layers_.heads.init(params_, rng);
}

EpitopePredictor::EpitopePredictor(Model1Config config, nn::ParamStore params)
    : config_((config.validate(), config)), layers_(build(config_)), params_(std::move(params)) {
  // Shape check against a freshly initialised store.
  EpitopePredictor reference(config_);
  for (const auto& [name, p] : reference.params_) {
    if (!params_.contains(name)) throw ValidationError("missing parameter '" + name + "'");
    nn::expect_shape(params_.value(name), p.value.shape(), "parameter '" + name + "'");
  }
  if (params_.entry_count() != reference.params_.entry_count()) {
    throw ValidationError("parameter set does not match the model architecture");
  }
}

nn::DenseArray EpitopePredictor::encode(const seqdata::Peptide& peptide) const {
  if (peptide.size() > config_.max_length) {
    throw ValidationError("peptide " + peptide.str() + " has " + std::to_string(peptide.size()) +
                          " residues; the model accepts at most " +
                          std::to_string(config_.max_length));
  }
  const auto idx = peptide.indices();
  nn::DenseArray out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = static_cast<double>(idx[i]);
  return out;
}

nn::DenseArray EpitopePredictor::infer_sample(const seqdata::Peptide& peptide) const {
  auto x = layers_.embed.infer(params_, encode(peptide));
  nn::add_inplace(x, nn::positional_encoding(x.rows(), config_.width));
  nn::add_inplace(x, layers_.attention.infer(params_, x));
  nn::add_inplace(x, layers_.ffn_out.infer(params_, layers_.ffn_in.infer(params_, x)));
  auto shared = layers_.shared.infer(params_, nn::mean_rows(x));
  return layers_.heads.infer(params_, shared);
}

nn::DenseArray EpitopePredictor::forward_sample(const seqdata::Peptide& peptide, nn::Mode mode,
                                                std::uint64_t seed) {
  if (mode == nn::Mode::eval) return infer_sample(peptide);
  auto x = layers_.embed.forward(params_, encode(peptide), mode, seed);
  cached_tokens_ = x.rows();
  nn::add_inplace(x, nn::positional_encoding(x.rows(), config_.width));
  auto attended = layers_.attention.forward(params_, x, mode, seed);
  nn::add_inplace(x, layers_.attention_drop.forward(params_, attended, mode, derive_seed(seed, 1)));
  auto hidden = layers_.ffn_in.forward(params_, x, mode, seed);
  auto ffn = layers_.ffn_out.forward(params_, hidden, mode, seed);
  nn::add_inplace(x, layers_.ffn_drop.forward(params_, ffn, mode, derive_seed(seed, 2)));
  auto shared = layers_.shared.forward(params_, nn::mean_rows(x), mode, seed);
  shared = layers_.shared_drop.forward(params_, shared, mode, derive_seed(seed, 3));
  return layers_.heads.forward(params_, shared, mode, seed);
}

void EpitopePredictor::backward_sample(const nn::DenseArray& grad_heads) {
  auto g = layers_.heads.backward(params_, grad_heads);
  g = layers_.shared_drop.backward(params_, g);
  g = layers_.shared.backward(params_, g);
  auto g_x = nn::mean_rows_backward(g, cached_tokens_);
  auto g_ffn = layers_.ffn_drop.backward(params_, g_x);
  g_ffn = layers_.ffn_in.backward(params_, layers_.ffn_out.backward(params_, g_ffn));
  nn::add_inplace(g_x, g_ffn);
  auto g_att = layers_.attention.backward(params_, layers_.attention_drop.backward(params_, g_x));
  nn::add_inplace(g_x, g_att);
  layers_.embed.backward(params_, g_x);
}

std::vector<Model1Output> EpitopePredictor::forward(std::span<const seqdata::Peptide> peptides,
                                                    nn::Mode mode, std::uint64_t seed) {
  if (peptides.empty()) throw ValidationError("model forward: empty batch");
  std::vector<Model1Output> out;
  out.reserve(peptides.size());
  for (std::size_t i = 0; i < peptides.size(); ++i) {
    out.push_back(to_output(forward_sample(peptides[i], mode, derive_seed(seed, i))));
  }
  return out;
}

Model1Output EpitopePredictor::predict(const seqdata::Peptide& peptide) const {
  return to_output(infer_sample(peptide));
}

std::vector<Model1Output> EpitopePredictor::predict(
    std::span<const seqdata::Peptide> peptides) const {
  if (peptides.empty()) throw ValidationError("model forward: empty batch");
  std::vector<Model1Output> out;
  out.reserve(peptides.size());
  for (const auto& p : peptides) out.push_back(predict(p));
  return out;
}

void EpitopePredictor::calibrate_output_bias(std::span<const seqdata::EpitopeRecord> train) {
  if (train.empty()) return;
  double aff = 0.0, cons = 0.0;
  for (const auto& r : train) {
    aff += affinity_target(r);
    cons += conservation_target(r);
  }
  auto& bias = params_.at("head.bias").value;
  bias[0] = aff / static_cast<double>(train.size());
  bias[2] = logit(cons / static_cast<double>(train.size()));
}

BatchStats EpitopePredictor::accumulate_batch(std::span<const seqdata::EpitopeRecord> batch,
                                              std::uint64_t seed) {
  BatchStats stats;
  if (batch.empty()) return stats;
  const double inv = 1.0 / static_cast<double>(batch.size());
  const auto& w = weights_;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = batch[i];
    const auto heads = forward_sample(r.peptide, nn::Mode::train, derive_seed(seed, i));
    const double imm = nn::sigmoid(heads[1]);
    const double cons = nn::sigmoid(heads[2]);
    const double da = heads[0] - affinity_target(r);
    const double dc = cons - conservation_target(r);
    stats.loss_sum += weighted_total(da * da, bce_term(r.immunogenic, imm), dc * dc, w);
    stats.correct += (imm >= 0.5) == (r.immunogenic == 1);
    ++stats.count;

    nn::DenseArray grad({1, kHeadCount});
    grad[0] = 2.0 * w.alpha * da * inv;
    grad[1] = w.beta * (imm - r.immunogenic) * inv;
    grad[2] = 2.0 * w.gamma * dc * cons * (1.0 - cons) * inv;
    backward_sample(grad);
  }
  return stats;
}

BatchStats EpitopePredictor::evaluate(std::span<const seqdata::EpitopeRecord> records) const {
  BatchStats stats;
  for (const auto& r : records) {
    const auto out = predict(r.peptide);
    const double da = out.affinity_pred - affinity_target(r);
    const double dc = out.conservation_pred - conservation_target(r);
    stats.loss_sum +=
        weighted_total(da * da, bce_term(r.immunogenic, out.immunogenicity_prob), dc * dc, weights_);
    stats.correct += (out.immunogenicity_prob >= 0.5) == (r.immunogenic == 1);
    ++stats.count;
  }
  return stats;
}

LossParts EpitopePredictor::loss(std::span<const seqdata::EpitopeRecord> records) const {
  std::vector<Model1Output> outs;
  outs.reserve(records.size());
  for (const auto& r : records) outs.push_back(predict(r.peptide));
  return multitask_loss(outs, records, weights_);
}

TrainReport train_model1(const seqdata::Dataset& data, const TrainConfig& config,
                         Model1Config model, const EpochCallback& on_epoch) {
  config.validate();
  model.dropout = config.dropout;
  model.init_seed = config.seed;
  EpitopePredictor predictor(model);
  predictor.set_loss_weights(config.weights);
  predictor.calibrate_output_bias(data.train_records());
  return fit(predictor, data, config, on_epoch);
}

void save_predictor(const std::filesystem::path& dir, const EpitopePredictor& model,
                    const nn::AdamConfig& adam) {
  nn::save_checkpoint(dir, model.params(), adam, model.config().to_json());
}

EpitopePredictor load_predictor(const std::filesystem::path& dir) {
  auto ckpt = nn::load_checkpoint(dir);
  return EpitopePredictor(Model1Config::from_json(ckpt.metadata), std::move(ckpt.params));
}

}  // namespace immunokit::predictor
