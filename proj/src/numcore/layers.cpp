#include "immunokit/numcore/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "immunokit/error.hpp"
#include "immunokit/rng.hpp"

namespace immunokit::nn {

namespace {

void apply_activation(DenseArray& x, Activation act) {
  switch (act) {
    case Activation::identity:
      return;
    case Activation::tanh:
      for (auto& v : x.data()) v = std::tanh(v);
      return;
    case Activation::relu:
      for (auto& v : x.data()) v = v > 0.0 ? v : 0.0;
      return;
  }
}

// Multiplies `grad` by the activation derivative, expressed via the output.
void activation_backward(DenseArray& grad, const DenseArray& output, Activation act) {
  auto g = grad.data();
  auto y = output.data();
  switch (act) {
    case Activation::identity:
      return;
    case Activation::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
      return;
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] > 0.0 ? g[i] : 0.0;
      return;
  }
}

void add_bias(DenseArray& x, const DenseArray& bias) {
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) x(r, c) += bias[c];
  }
}

void accumulate_column_sums(DenseArray& target, const DenseArray& x) {
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) target[c] += x(r, c);
  }
}

void expect_matrix(const DenseArray& x, std::size_t cols, const std::string& what) {
  if (x.rank() != 2 || x.cols() != cols) {
    throw ShapeError(what + ": expected shape [n, " + std::to_string(cols) + "], got " +
                     shape_string(x.shape()));
  }
}

[[noreturn]] void backward_before_forward(std::string_view layer) {
  throw ValidationError(std::string(layer) + ": backward called before a train-mode forward");
}

DenseArray head_slice(const DenseArray& x, std::size_t head, std::size_t head_dim) {
  DenseArray out = DenseArray::matrix(x.rows(), head_dim);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < head_dim; ++c) out(r, c) = x(r, head * head_dim + c);
  }
  return out;
}

void add_head_slice(DenseArray& x, const DenseArray& part, std::size_t head, std::size_t head_dim) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < head_dim; ++c) x(r, head * head_dim + c) += part(r, c);
  }
}

DenseArray softmax_backward(const DenseArray& y, const DenseArray& upstream) {
  DenseArray grad = DenseArray::matrix(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) dot += upstream(r, c) * y(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) grad(r, c) = y(r, c) * (upstream(r, c) - dot);
  }
  return grad;
}

}  // namespace

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "embedding") return LayerKind::embedding;
  if (name == "dense") return LayerKind::dense;
  if (name == "self_attention") return LayerKind::self_attention;
  if (name == "conv1d") return LayerKind::conv1d;
  if (name == "dropout") return LayerKind::dropout;
  if (name == "softmax") return LayerKind::softmax;
  throw ValidationError("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::embedding: return "embedding";
    case LayerKind::dense: return "dense";
    case LayerKind::self_attention: return "self_attention";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

// ---------------------------------------------------------------- Embedding

Embedding::Embedding(std::string name, std::size_t vocab, std::size_t dim)
    : weight_(name + ".weight"), bias_(name + ".bias"), vocab_(vocab), dim_(dim) {
  if (vocab == 0 || dim == 0) throw ValidationError("embedding extents must be positive");
}

void Embedding::init(ParamStore& params, Rng& rng) const {
  // Each row is selected by a one-hot input, so fan_in is 1.
  params.add_uniform(weight_, {vocab_, dim_}, 1, rng);
  params.add(bias_, {dim_});
}

DenseArray Embedding::infer(const ParamStore& params, const DenseArray& input) const {
  if (input.rank() != 1 && !(input.rank() == 2 && input.cols() == 1)) {
    throw ShapeError("embedding: expected index shape [n], got " + shape_string(input.shape()));
  }
  const auto& w = params.value(weight_);
  const auto& b = params.value(bias_);
  const std::size_t n = input.size();
  DenseArray out = DenseArray::matrix(n, dim_);
  for (std::size_t t = 0; t < n; ++t) {
    const double raw = input[t];
    if (!(raw >= 0.0) || raw >= static_cast<double>(vocab_) || raw != std::floor(raw)) {
      throw ValidationError("embedding: index " + std::to_string(raw) + " outside vocabulary of " +
                            std::to_string(vocab_));
    }
    const auto idx = static_cast<std::size_t>(raw);
    for (std::size_t c = 0; c < dim_; ++c) out(t, c) = w(idx, c) + b[c];
  }
  return out;
}

DenseArray Embedding::forward(const ParamStore& params, const DenseArray& input, Mode mode,
                              std::uint64_t) {
  DenseArray out = infer(params, input);
  if (mode == Mode::train) input_ = input;
  return out;
}

DenseArray Embedding::backward(ParamStore& params, const DenseArray& upstream) {
  if (!input_) backward_before_forward("embedding");
  expect_shape(upstream, {input_->size(), dim_}, "embedding backward");
  auto& gw = params.grad(weight_);
  auto& gb = params.grad(bias_);
  for (std::size_t t = 0; t < input_->size(); ++t) {
    const auto idx = static_cast<std::size_t>((*input_)[t]);
    for (std::size_t c = 0; c < dim_; ++c) {
      gw(idx, c) += upstream(t, c);
      gb[c] += upstream(t, c);
    }
  }
  return DenseArray(input_->shape());
}

// -------------------------------------------------------------------- Dense

Dense::Dense(std::string name, std::size_t in, std::size_t out, Activation act)
    : weight_(name + ".weight"), bias_(name + ".bias"), in_(in), out_(out), act_(act) {
  if (in == 0 || out == 0) throw ValidationError("dense extents must be positive");
}

void Dense::init(ParamStore& params, Rng& rng) const {
  params.add_uniform(weight_, {in_, out_}, in_, rng);
  params.add_uniform(bias_, {out_}, in_, rng);
}

DenseArray Dense::infer(const ParamStore& params, const DenseArray& input) const {
  expect_matrix(input, in_, "dense");
  DenseArray out = matmul(input, params.value(weight_));
  add_bias(out, params.value(bias_));
  apply_activation(out, act_);
  return out;
}

DenseArray Dense::forward(const ParamStore& params, const DenseArray& input, Mode mode,
                          std::uint64_t) {
  DenseArray out = infer(params, input);
  if (mode == Mode::train) {
    input_ = input;
    output_ = out;
  }
  return out;
}

DenseArray Dense::backward(ParamStore& params, const DenseArray& upstream) {
  if (!input_) backward_before_forward("dense");
  expect_shape(upstream, output_->shape(), "dense backward");
  DenseArray grad = upstream;
  activation_backward(grad, *output_, act_);
  add_inplace(params.grad(weight_), matmul_at_b(*input_, grad));
  accumulate_column_sums(params.grad(bias_), grad);
  return matmul_a_bt(grad, params.value(weight_));
}

// ------------------------------------------------------------ SelfAttention

SelfAttention::SelfAttention(std::string name, std::size_t dim, std::size_t heads)
    : name_(std::move(name)), dim_(dim), heads_(heads) {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ValidationError("self_attention: width must be a positive multiple of the head count");
  }
}

void SelfAttention::init(ParamStore& params, Rng& rng) const {
  // No key bias: it shifts every score in a row equally and softmax cancels it.
  for (const char* p : {"q", "k", "v", "o"}) {
    params.add_uniform(name_ + ".w" + p, {dim_, dim_}, dim_, rng);
    if (*p != 'k') params.add_uniform(name_ + ".b" + p, {dim_}, dim_, rng);
  }
}

SelfAttention::Cache SelfAttention::run(const ParamStore& params, const DenseArray& input) const {
  expect_matrix(input, dim_, "self_attention");
  Cache cache;
  cache.input = input;
  auto project = [&](const char* p) {
    DenseArray out = matmul(input, params.value(name_ + ".w" + p));
    if (*p != 'k') add_bias(out, params.value(name_ + ".b" + p));
    return out;
  };
  cache.q = project("q");
  cache.k = project("k");
  cache.v = project("v");

  const std::size_t n = input.rows();
  const std::size_t hd = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  cache.context = DenseArray::matrix(n, dim_);
  for (std::size_t h = 0; h < heads_; ++h) {
    DenseArray scores = matmul_a_bt(head_slice(cache.q, h, hd), head_slice(cache.k, h, hd));
    for (auto& s : scores.data()) s *= scale;
    softmax_rows_inplace(scores);
    add_head_slice(cache.context, matmul(scores, head_slice(cache.v, h, hd)), h, hd);
    cache.attention.push_back(std::move(scores));
  }
  return cache;
}

DenseArray SelfAttention::project_out(const ParamStore& params, const DenseArray& context) const {
  DenseArray out = matmul(context, params.value(name_ + ".wo"));
  add_bias(out, params.value(name_ + ".bo"));
  return out;
}

DenseArray SelfAttention::infer(const ParamStore& params, const DenseArray& input) const {
  return project_out(params, run(params, input).context);
}

DenseArray SelfAttention::forward(const ParamStore& params, const DenseArray& input, Mode mode,
                                  std::uint64_t) {
  Cache cache = run(params, input);
  DenseArray out = project_out(params, cache.context);
  if (mode == Mode::train) cache_ = std::move(cache);
  return out;
}

DenseArray SelfAttention::backward(ParamStore& params, const DenseArray& upstream) {
  if (!cache_) backward_before_forward("self_attention");
  const Cache& c = *cache_;
  const std::size_t n = c.input.rows();
  const std::size_t hd = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  expect_shape(upstream, {n, dim_}, "self_attention backward");

  add_inplace(params.grad(name_ + ".wo"), matmul_at_b(c.context, upstream));
  accumulate_column_sums(params.grad(name_ + ".bo"), upstream);
  const DenseArray d_context = matmul_a_bt(upstream, params.value(name_ + ".wo"));

  DenseArray dq = DenseArray::matrix(n, dim_);
  DenseArray dk = DenseArray::matrix(n, dim_);
  DenseArray dv = DenseArray::matrix(n, dim_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const DenseArray& a = c.attention[h];
    const DenseArray d_out = head_slice(d_context, h, hd);
    const DenseArray qh = head_slice(c.q, h, hd);
    const DenseArray kh = head_slice(c.k, h, hd);
    const DenseArray vh = head_slice(c.v, h, hd);
    add_head_slice(dv, matmul_at_b(a, d_out), h, hd);
    DenseArray d_scores = softmax_backward(a, matmul_a_bt(d_out, vh));
    for (auto& s : d_scores.data()) s *= scale;
    add_head_slice(dq, matmul(d_scores, kh), h, hd);
    add_head_slice(dk, matmul_at_b(d_scores, qh), h, hd);
  }

  DenseArray d_input = DenseArray::matrix(n, dim_);
  for (auto [p, grad] : {std::pair<const char*, const DenseArray*>{"q", &dq},
                         {"k", &dk},
                         {"v", &dv}}) {
    add_inplace(params.grad(name_ + ".w" + p), matmul_at_b(c.input, *grad));
    if (*p != 'k') accumulate_column_sums(params.grad(name_ + ".b" + p), *grad);
    add_inplace(d_input, matmul_a_bt(*grad, params.value(name_ + ".w" + p)));
  }
  return d_input;
}

// ------------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::string name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, Activation act)
    : weight_(name + ".weight"),
      bias_(name + ".bias"),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      act_(act) {
  if (in_ == 0 || out_ == 0) throw ValidationError("conv1d channel counts must be positive");
  if (kernel_ == 0 || kernel_ % 2 == 0) throw ValidationError("conv1d kernel must be odd");
}

void Conv1d::init(ParamStore& params, Rng& rng) const {
  params.add_uniform(weight_, {kernel_, in_, out_}, kernel_ * in_, rng);
  params.add_uniform(bias_, {out_}, kernel_ * in_, rng);
}

DenseArray Conv1d::infer(const ParamStore& params, const DenseArray& input) const {
  expect_matrix(input, in_, "conv1d");
  const auto& w = params.value(weight_);
  const auto& b = params.value(bias_);
  const std::size_t n = input.rows();
  const auto half = static_cast<std::ptrdiff_t>(kernel_ / 2);
  DenseArray out = DenseArray::matrix(n, out_);
  const double* pw = w.data().data();
  for (std::size_t t = 0; t < n; ++t) {
    auto orow = out.row(t);
    for (std::size_t o = 0; o < out_; ++o) orow[o] = b[o];
    for (std::size_t k = 0; k < kernel_; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      const auto irow = input.row(static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < in_; ++c) {
        const double x = irow[c];
        const double* wrow = pw + (k * in_ + c) * out_;
        for (std::size_t o = 0; o < out_; ++o) orow[o] += x * wrow[o];
      }
    }
  }
  apply_activation(out, act_);
  return out;
}

DenseArray Conv1d::forward(const ParamStore& params, const DenseArray& input, Mode mode,
                           std::uint64_t) {
  DenseArray out = infer(params, input);
  if (mode == Mode::train) {
    input_ = input;
    output_ = out;
  }
  return out;
}

DenseArray Conv1d::backward(ParamStore& params, const DenseArray& upstream) {
  if (!input_) backward_before_forward("conv1d");
  expect_shape(upstream, output_->shape(), "conv1d backward");
  DenseArray grad = upstream;
  activation_backward(grad, *output_, act_);

  const std::size_t n = input_->rows();
  const auto half = static_cast<std::ptrdiff_t>(kernel_ / 2);
  const auto& w = params.value(weight_);
  auto& gw = params.grad(weight_);
  accumulate_column_sums(params.grad(bias_), grad);
  DenseArray d_input = DenseArray::matrix(n, in_);
  for (std::size_t t = 0; t < n; ++t) {
    const auto grow = grad.row(t);
    for (std::size_t k = 0; k < kernel_; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      const auto s = static_cast<std::size_t>(src);
      for (std::size_t c = 0; c < in_; ++c) {
        const double x = (*input_)(s, c);
        const std::size_t base = (k * in_ + c) * out_;
        double acc = 0.0;
        for (std::size_t o = 0; o < out_; ++o) {
          gw[base + o] += x * grow[o];
          acc += w[base + o] * grow[o];
        }
        d_input(s, c) += acc;
      }
    }
  }
  return d_input;
}

// ------------------------------------------------------------------ Dropout

Dropout::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
}

DenseArray Dropout::infer(const ParamStore&, const DenseArray& input) const { return input; }

DenseArray Dropout::forward(const ParamStore&, const DenseArray& input, Mode mode,
                            std::uint64_t seed) {
  if (mode == Mode::eval) return input;
  DenseArray mask(input.shape(), 1.0);
  if (rate_ > 0.0) {
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - rate_);
    for (auto& m : mask.data()) m = rng.bernoulli(rate_) ? 0.0 : keep_scale;
  }
  DenseArray out = input;
  auto o = out.data();
  auto mk = mask.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mk[i];
  mask_ = std::move(mask);
  return out;
}

DenseArray Dropout::backward(ParamStore&, const DenseArray& upstream) {
  if (!mask_) backward_before_forward("dropout");
  expect_shape(upstream, mask_->shape(), "dropout backward");
  DenseArray grad = upstream;
  auto g = grad.data();
  auto mk = mask_->data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mk[i];
  return grad;
}

// ------------------------------------------------------------------ Softmax

DenseArray Softmax::infer(const ParamStore&, const DenseArray& input) const {
  DenseArray out = input.rank() == 1 ? input.reshaped({1, input.size()}) : input;
  softmax_rows_inplace(out);
  return out.reshaped(input.shape());
}

DenseArray Softmax::forward(const ParamStore& params, const DenseArray& input, Mode mode,
                            std::uint64_t) {
  DenseArray out = infer(params, input);
  if (mode == Mode::train) output_ = out;
  return out;
}

DenseArray Softmax::backward(ParamStore&, const DenseArray& upstream) {
  if (!output_) backward_before_forward("softmax");
  expect_shape(upstream, output_->shape(), "softmax backward");
  const auto shape = output_->shape();
  const std::size_t cols = shape.back();
  const std::size_t rows = output_->size() / cols;
  return softmax_backward(output_->reshaped({rows, cols}), upstream.reshaped({rows, cols}))
      .reshaped(shape);
}

// ----------------------------------------------------------------- Factory

std::unique_ptr<Layer> make_layer(LayerKind kind, const LayerOptions& o) {
  switch (kind) {
    case LayerKind::embedding:
      return std::make_unique<Embedding>(o.name, o.vocab, o.output_width);
    case LayerKind::dense:
      return std::make_unique<Dense>(o.name, o.input_width, o.output_width, o.activation);
    case LayerKind::self_attention:
      return std::make_unique<SelfAttention>(o.name, o.input_width, o.heads);
    case LayerKind::conv1d:
      return std::make_unique<Conv1d>(o.name, o.input_width, o.output_width, o.kernel,
                                      o.activation);
    case LayerKind::dropout:
      return std::make_unique<Dropout>(o.rate);
    case LayerKind::softmax:
      return std::make_unique<Softmax>();
  }
  throw ValidationError("unknown layer kind");
}

// ----------------------------------------------------------------- Helpers

DenseArray positional_encoding(std::size_t n, std::size_t dim) {
  DenseArray pe = DenseArray::matrix(n, dim);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

DenseArray mean_rows(const DenseArray& input) {
  const std::size_t n = input.rows(), d = input.cols();
  DenseArray out = DenseArray::matrix(1, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[c] += input(r, c);
  }
  for (auto& v : out.data()) v /= static_cast<double>(n);
  return out;
}

DenseArray mean_rows_backward(const DenseArray& upstream, std::size_t n) {
  const std::size_t d = upstream.size();
  DenseArray grad = DenseArray::matrix(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) grad(r, c) = upstream[c] / static_cast<double>(n);
  }
  return grad;
}

DenseArray MaxPoolRows::infer(const DenseArray& input) const {
  const std::size_t n = input.rows(), d = input.cols();
  DenseArray out = DenseArray::matrix(1, d, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[c] = std::max(out[c], input(r, c));
  }
  return out;
}

DenseArray MaxPoolRows::forward(const DenseArray& input) {
  const std::size_t n = input.rows(), d = input.cols();
  rows_ = n;
  argmax_.assign(d, 0);
  DenseArray out = DenseArray::matrix(1, d);
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < n; ++r) {
      if (input(r, c) > input(best, c)) best = r;
    }
    argmax_[c] = best;
    out[c] = input(best, c);
  }
  return out;
}

DenseArray MaxPoolRows::backward(const DenseArray& upstream) const {
  if (argmax_.empty()) backward_before_forward("max_pool");
  DenseArray grad = DenseArray::matrix(rows_, argmax_.size());
  for (std::size_t c = 0; c < argmax_.size(); ++c) grad(argmax_[c], c) = upstream[c];
  return grad;
}

void softmax_rows_inplace(DenseArray& x) {
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    double peak = x(r, 0);
    for (std::size_t c = 1; c < d; ++c) peak = std::max(peak, x(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      x(r, c) = std::exp(x(r, c) - peak);
      total += x(r, c);
    }
    for (std::size_t c = 0; c < d; ++c) x(r, c) /= total;
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace immunokit::nn
