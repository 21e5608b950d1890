#pragma once

// Layers with hand-written backward passes. Parameters live in a ParamStore
// and are looked up by name, so a layer object carries only its
// configuration plus the state cached by the last train-mode forward pass.
//
// Activations are [tokens, features] arrays. forward(Mode::train) caches;
// infer() is const and safe to call concurrently on a frozen store.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "immunokit/numcore/dense_array.hpp"
#include "immunokit/numcore/param_store.hpp"

namespace immunokit {
class Rng;
}

namespace immunokit::nn {

enum class Mode { train, eval };
enum class LayerKind { embedding, dense, self_attention, conv1d, dropout, softmax };
enum class Activation { identity, tanh, relu };

// Throws ValidationError for an unknown kind name.
LayerKind parse_layer_kind(std::string_view name);
std::string_view to_string(LayerKind kind);

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  // Registers and initialises this layer's parameters.
  virtual void init(ParamStore& params, Rng& rng) const = 0;
  virtual DenseArray infer(const ParamStore& params, const DenseArray& input) const = 0;
  virtual DenseArray forward(const ParamStore& params, const DenseArray& input, Mode mode,
                             std::uint64_t seed) = 0;
  // Adds parameter gradients into `params`; returns the gradient w.r.t. the
  // input of the last train-mode forward call.
  virtual DenseArray backward(ParamStore& params, const DenseArray& upstream) = 0;
};

// Row lookup W_emb[idx] + b. Input is a rank-1 array of residue indices.
class Embedding final : public Layer {
 public:
  Embedding(std::string name, std::size_t vocab, std::size_t dim);
  LayerKind kind() const override { return LayerKind::embedding; }
  void init(ParamStore& params, Rng& rng) const override;
  DenseArray infer(const ParamStore& params, const DenseArray& input) const override;
  DenseArray forward(const ParamStore& params, const DenseArray& input, Mode mode,
                     std::uint64_t seed) override;
  DenseArray backward(ParamStore& params, const DenseArray& upstream) override;

  std::size_t vocab() const { return vocab_; }
  std::size_t dim() const { return dim_; }

 private:
  std::string weight_, bias_;
  std::size_t vocab_, dim_;
  std::optional<DenseArray> input_;
};

// act(x W + b), W is [in, out].
class Dense final : public Layer {
 public:
  Dense(std::string name, std::size_t in, std::size_t out, Activation act = Activation::identity);
  LayerKind kind() const override { return LayerKind::dense; }
  void init(ParamStore& params, Rng& rng) const override;
  DenseArray infer(const ParamStore& params, const DenseArray& input) const override;
  DenseArray forward(const ParamStore& params, const DenseArray& input, Mode mode,
                     std::uint64_t seed) override;
  DenseArray backward(ParamStore& params, const DenseArray& upstream) override;

 private:
  std::string weight_, bias_;
  std::size_t in_, out_;
  Activation act_;
  std::optional<DenseArray> input_, output_;
};

// Multi-head scaled dot-product self-attention with output projection.
class SelfAttention final : public Layer {
 public:
  SelfAttention(std::string name, std::size_t dim, std::size_t heads);
  LayerKind kind() const override { return LayerKind::self_attention; }
  void init(ParamStore& params, Rng& rng) const override;
  DenseArray infer(const ParamStore& params, const DenseArray& input) const override;
  DenseArray forward(const ParamStore& params, const DenseArray& input, Mode mode,
                     std::uint64_t seed) override;
  DenseArray backward(ParamStore& params, const DenseArray& upstream) override;

 private:
  struct Cache {
    DenseArray input, q, k, v, context;
    std::vector<DenseArray> attention;  // one [n, n] matrix per head
  };
  Cache run(const ParamStore& params, const DenseArray& input) const;
  DenseArray project_out(const ParamStore& params, const DenseArray& context) const;

  std::string name_;
  std::size_t dim_, heads_;
  std::optional<Cache> cache_;
};

// 1-D convolution over tokens with zero "same" padding; weight is
// [kernel, in_channels, out_channels]. Kernel must be odd.
class Conv1d final : public Layer {
 public:
  Conv1d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         Activation act = Activation::identity);
  LayerKind kind() const override { return LayerKind::conv1d; }
  void init(ParamStore& params, Rng& rng) const override;
  DenseArray infer(const ParamStore& params, const DenseArray& input) const override;
  DenseArray forward(const ParamStore& params, const DenseArray& input, Mode mode,
                     std::uint64_t seed) override;
  DenseArray backward(ParamStore& params, const DenseArray& upstream) override;

 private:
  std::string weight_, bias_;
  std::size_t in_, out_, kernel_;
  Activation act_;
  std::optional<DenseArray> input_, output_;
};

// Inverted dropout: train mode zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate); eval mode is the identity.
class Dropout final : public Layer {
 public:
  explicit Dropout(double rate);
  LayerKind kind() const override { return LayerKind::dropout; }
  void init(ParamStore&, Rng&) const override {}
  DenseArray infer(const ParamStore& params, const DenseArray& input) const override;
  DenseArray forward(const ParamStore& params, const DenseArray& input, Mode mode,
                     std::uint64_t seed) override;
  DenseArray backward(ParamStore& params, const DenseArray& upstream) override;
  double rate() const { return rate_; }

 private:
  double rate_;
  std::optional<DenseArray> mask_;
};

// Row-wise softmax.
class Softmax final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::softmax; }
  void init(ParamStore&, Rng&) const override {}
  DenseArray infer(const ParamStore& params, const DenseArray& input) const override;
  DenseArray forward(const ParamStore& params, const DenseArray& input, Mode mode,
                     std::uint64_t seed) override;
  DenseArray backward(ParamStore& params, const DenseArray& upstream) override;

 private:
  std::optional<DenseArray> output_;
};

struct LayerOptions {
  std::string name = "layer";
  std::size_t input_width = 0;   // dense/attention/conv input features
  std::size_t output_width = 0;  // dense/conv outputs, embedding width
  std::size_t vocab = 0;         // embedding rows
  std::size_t heads = 1;
  std::size_t kernel = 3;
  double rate = 0.0;
  Activation activation = Activation::identity;
};

std::unique_ptr<Layer> make_layer(LayerKind kind, const LayerOptions& options);

// Sinusoidal positional encoding, [n, dim].
DenseArray positional_encoding(std::size_t n, std::size_t dim);

// Column means of a [n, d] array -> [1, d]; backward spreads upstream / n.
DenseArray mean_rows(const DenseArray& input);
DenseArray mean_rows_backward(const DenseArray& upstream, std::size_t n);

// Column-wise max over rows with cached argmax.
class MaxPoolRows {
 public:
  DenseArray infer(const DenseArray& input) const;
  DenseArray forward(const DenseArray& input);
  DenseArray backward(const DenseArray& upstream) const;

 private:
  std::size_t rows_ = 0;
  std::vector<std::size_t> argmax_;
};

void softmax_rows_inplace(DenseArray& x);
double sigmoid(double x);

}  // namespace immunokit::nn
