#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "immunokit/error.hpp"
#include "immunokit/numcore/adam.hpp"
#include "immunokit/numcore/checkpoint.hpp"
#include "immunokit/numcore/grad_check.hpp"
#include "immunokit/numcore/layers.hpp"
#include "immunokit/rng.hpp"
#include "layer_check.hpp"

using namespace immunokit;
using namespace immunokit::nn;
using layer_check::check_layer;
using layer_check::random_array;

namespace {

constexpr int kConfigs = 20;
constexpr double kLayerTolerance = 1e-4;

Activation pick_activation(Rng& rng) {
  static constexpr Activation all[] = {Activation::identity, Activation::tanh, Activation::relu};
  return all[rng.below(3)];
}

ParamStore scalar_store(double value, double grad) {
  ParamStore s;
  auto& p = s.add("w", {1});
  p.value[0] = value;
  p.grad[0] = grad;
  return s;
}

}  // namespace

TEST_CASE("DenseArray shape contract") {
  DenseArray a({2, 3}, 1.5);
  CHECK(a.size() == 6);
  CHECK(a.cols() == 3);
  CHECK_THROWS_AS(DenseArray({2, 0}), ShapeError);
  CHECK_THROWS_AS(DenseArray({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(expect_shape(a, {3, 2}, "x"), ShapeError);

  DenseArray l({2, 2}, std::vector<double>{1, 2, 3, 4});
  DenseArray r({2, 1}, std::vector<double>{5, 6});
  const auto m = matmul(l, r);
  CHECK(m[0] == 17);
  CHECK(m[1] == 39);
  CHECK(matmul_at_b(l, r) == DenseArray({2, 1}, std::vector<double>{23, 34}));
  CHECK(matmul_a_bt(l, l) == DenseArray({2, 2}, std::vector<double>{5, 11, 11, 25}));
  CHECK_THROWS_AS(matmul(r, r), ShapeError);
}

TEST_CASE("ParamStore contract") {
  Rng rng(1);
  ParamStore s;
  auto& p = s.add_uniform("w", {4, 5}, 4, rng);
  CHECK(p.grad.shape() == p.value.shape());
  CHECK(p.m.shape() == p.value.shape());
  CHECK(p.v.shape() == p.value.shape());
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    CHECK(std::abs(p.value[i]) <= 0.5);
    CHECK(p.m[i] == 0.0);
    CHECK(p.v[i] == 0.0);
  }
  CHECK_THROWS_AS(s.add("w", {1}), ValidationError);
  CHECK_THROWS_AS(s.at("missing"), ValidationError);
  CHECK(s.step_count() == 0);
}

TEST_CASE("layer forward examples") {
  Rng rng(3);
  ParamStore empty;
  Softmax softmax;
  const auto x = random_array(rng, {5, 7}, 50.0);
  const auto y = softmax.infer(empty, x);
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (double v : y.row(r)) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }

  Dropout none(0.0);
  CHECK(none.forward(empty, x, Mode::train, 9) == x);
  Dropout half(0.5);
  CHECK(half.forward(empty, x, Mode::eval, 9) == x);

  ParamStore params;
  Embedding embed("e", 6, 4);
  embed.init(params, rng);
  const auto rows = embed.infer(params, DenseArray({2}, std::vector<double>{2, 2}));
  const auto& w = params.value("e.weight");
  const auto& b = params.value("e.bias");
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(rows(0, c) == rows(1, c));
    CHECK(rows(0, c) == w(2, c) + b[c]);
  }
}

TEST_CASE("layer errors") {
  CHECK_THROWS_AS(parse_layer_kind("lstm"), ValidationError);
  CHECK(parse_layer_kind("self_attention") == LayerKind::self_attention);
  Rng rng(4);
  ParamStore params;
  Dense dense("d", 3, 2);
  dense.init(params, rng);
  CHECK_THROWS_AS(dense.infer(params, DenseArray({2, 4})), ShapeError);
  CHECK_THROWS_AS(dense.backward(params, DenseArray({2, 2})), ValidationError);
  CHECK_THROWS_AS(Dropout(1.0), ValidationError);
  CHECK_THROWS_AS(Conv1d("c", 2, 2, 2), ValidationError);
  CHECK_THROWS_AS(SelfAttention("a", 6, 4), ValidationError);
  Embedding embed("e", 3, 2);
  embed.init(params, rng);
  CHECK_THROWS_AS(embed.infer(params, DenseArray({1}, std::vector<double>{3})), ValidationError);
}

TEST_CASE("zero upstream gives zero parameter gradients") {
  Rng rng(5);
  ParamStore params;
  std::vector<std::unique_ptr<Layer>> layers;
  layers.push_back(std::make_unique<Dense>("d", 4, 4, Activation::tanh));
  layers.push_back(std::make_unique<SelfAttention>("a", 4, 2));
  layers.push_back(std::make_unique<Conv1d>("c", 4, 4, 3, Activation::tanh));
  for (auto& l : layers) l->init(params, rng);
  const auto x = random_array(rng, {3, 4});
  for (auto& l : layers) {
    l->forward(params, x, Mode::train, 1);
    const auto gin = l->backward(params, DenseArray({3, 4}));
    CHECK(gin.shape() == x.shape());
    for (double g : gin.data()) CHECK(g == 0.0);
  }
  for (auto& [name, p] : params)
    for (double g : p.grad.data()) CHECK(g == 0.0);
}

TEST_CASE("dense gradient matches finite differences") {
  Rng rng(10);
  for (int i = 0; i < kConfigs; ++i) {
    const std::size_t n = 1 + rng.below(4), in = 1 + rng.below(6), out = 1 + rng.below(6);
    ParamStore params;
    Dense layer("d", in, out, pick_activation(rng));
    layer.init(params, rng);
    const auto r = check_layer(layer, params, random_array(rng, {n, in}), true, 100 + i);
    CHECK_MESSAGE(r.max_relative_error < 1e-5, r.worst_parameter);
  }
}

TEST_CASE("embedding gradient matches finite differences") {
  Rng rng(11);
  for (int i = 0; i < kConfigs; ++i) {
    const std::size_t n = 1 + rng.below(6), vocab = 2 + rng.below(20), dim = 1 + rng.below(8);
    ParamStore params;
    Embedding layer("e", vocab, dim);
    layer.init(params, rng);
    DenseArray idx({n});
    for (std::size_t t = 0; t < n; ++t) idx[t] = static_cast<double>(rng.below(vocab));
    const auto r = check_layer(layer, params, idx, false, 200 + i);
    CHECK_MESSAGE(r.max_relative_error < kLayerTolerance, r.worst_parameter);
  }
}

TEST_CASE("self-attention gradient matches finite differences") {
  Rng rng(12);
  {
    ParamStore params;
    SelfAttention layer("a", 8, 2);
    layer.init(params, rng);
    const auto r = check_layer(layer, params, random_array(rng, {4, 8}), true, 299);
    CHECK(r.max_relative_error < 1e-4);
  }
  for (int i = 0; i < kConfigs; ++i) {
    const std::size_t heads = 1 + rng.below(3), per_head = 1 + rng.below(3);
    const std::size_t n = 1 + rng.below(5);
    ParamStore params;
    SelfAttention layer("a", heads * per_head, heads);
    layer.init(params, rng);
    const auto r =
        check_layer(layer, params, random_array(rng, {n, heads * per_head}), true, 300 + i);
    CHECK_MESSAGE(r.max_relative_error < kLayerTolerance, r.worst_parameter);
  }
}

TEST_CASE("conv1d gradient matches finite differences") {
  Rng rng(13);
  for (int i = 0; i < kConfigs; ++i) {
    const std::size_t n = 1 + rng.below(6), in = 1 + rng.below(4), out = 1 + rng.below(4);
    const std::size_t kernel = 1 + 2 * rng.below(3);
    ParamStore params;
    Conv1d layer("c", in, out, kernel, pick_activation(rng));
    layer.init(params, rng);
    const auto r = check_layer(layer, params, random_array(rng, {n, in}), true, 400 + i);
    CHECK_MESSAGE(r.max_relative_error < kLayerTolerance, r.worst_parameter);
  }
}

TEST_CASE("dropout gradient matches finite differences") {
  Rng rng(14);
  for (int i = 0; i < kConfigs; ++i) {
    ParamStore params;
    Dropout layer(rng.uniform(0.0, 0.9));
    const auto r =
        check_layer(layer, params, random_array(rng, {1 + rng.below(4), 1 + rng.below(6)}),
                    true, 500 + i);
    CHECK(r.max_relative_error < kLayerTolerance);
  }
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(15);
  for (int i = 0; i < kConfigs; ++i) {
    ParamStore params;
    Softmax layer;
    const auto r = check_layer(
        layer, params, random_array(rng, {1 + rng.below(4), 1 + rng.below(6)}, 3.0), true, 600 + i);
    CHECK(r.max_relative_error < kLayerTolerance);
  }
}

TEST_CASE("pooling and mean gradients match finite differences") {
  Rng rng(16);
  for (int i = 0; i < kConfigs; ++i) {
    const std::size_t n = 1 + rng.below(6), d = 1 + rng.below(5);
    ParamStore params;
    params.add("input", {n, d}).value = random_array(rng, {n, d});
    const auto coeff = random_array(rng, {1, d});
    MaxPoolRows pool;
    auto pooled = [&](bool with_gradients) {
      auto out = pool.forward(params.value("input"));
      if (with_gradients) add_inplace(params.grad("input"), pool.backward(coeff));
      return layer_check::weighted_sum(out, coeff);
    };
    CHECK(grad_check(pooled, params, 50, 700 + i).max_relative_error < kLayerTolerance);
    auto mean = [&](bool with_gradients) {
      auto out = mean_rows(params.value("input"));
      if (with_gradients) add_inplace(params.grad("input"), mean_rows_backward(coeff, n));
      return layer_check::weighted_sum(out, coeff);
    };
    CHECK(grad_check(mean, params, 50, 800 + i).max_relative_error < kLayerTolerance);
  }
}

TEST_CASE("make_layer builds every kind") {
  Rng rng(17);
  for (auto kind : {LayerKind::embedding, LayerKind::dense, LayerKind::self_attention,
                    LayerKind::conv1d, LayerKind::dropout, LayerKind::softmax}) {
    LayerOptions o{.name = std::string(to_string(kind)), .input_width = 4, .output_width = 4,
                   .vocab = 5, .heads = 2, .kernel = 3, .rate = 0.2};
    auto layer = make_layer(kind, o);
    CHECK(layer->kind() == kind);
    CHECK(parse_layer_kind(to_string(kind)) == kind);
  }
}

TEST_CASE("dropout preserves the expected activation") {
  Dropout layer(0.5);
  ParamStore empty;
  const DenseArray x({1, 1}, 2.0);
  double sum = 0;
  constexpr int kTrials = 100000;
  for (int t = 0; t < kTrials; ++t) sum += layer.forward(empty, x, Mode::train, t)[0];
  CHECK(std::abs(sum / kTrials - 2.0) <= 0.02 * 2.0);
}

TEST_CASE("layers stay finite on large inputs") {
  Rng rng(18);
  ParamStore params;
  Dense dense("d", 6, 6, Activation::tanh);
  SelfAttention attention("a", 6, 2);
  Conv1d conv("c", 6, 6, 3, Activation::relu);
  Softmax softmax;
  for (Layer* l : std::initializer_list<Layer*>{&dense, &attention, &conv}) l->init(params, rng);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_array(rng, {1 + rng.below(6), 6}, 1e3);
    for (Layer* l : std::initializer_list<Layer*>{&dense, &attention, &conv, &softmax}) {
      CHECK(l->infer(params, x).all_finite());
      l->forward(params, x, Mode::train, trial);
      CHECK(l->backward(params, random_array(rng, x.shape(), 1e3)).all_finite());
    }
  }
  for (auto& [name, p] : params) CHECK(p.grad.all_finite());
}

TEST_CASE("adam single step by hand") {
  auto s = scalar_store(0.0, 1.0);
  adam_step(s, {});
  const auto& p = s.at("w");
  CHECK(std::abs(p.m[0] - 0.1) <= 1e-12);
  CHECK(std::abs(p.v[0] - 0.001) <= 1e-12);
  CHECK(std::abs(p.value[0] - (-1e-3 / (1.0 + 1e-8))) <= 1e-15);
  CHECK(p.grad[0] == 0.0);
  CHECK(s.step_count() == 1);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  auto s = scalar_store(0.75, 0.0);
  for (int i = 0; i < 5; ++i) adam_step(s, {});
  CHECK(s.at("w").value[0] == 0.75);
}

TEST_CASE("adam constant gradient step approaches the learning rate") {
  auto s = scalar_store(0.0, 0.0);
  double previous = 0.0, step = 0.0;
  for (int t = 0; t < 1000; ++t) {
    s.grad("w")[0] = 3.7;
    adam_step(s, {});
    step = std::abs(s.at("w").value[0] - previous);
    previous = s.at("w").value[0];
  }
  CHECK(std::abs(step - 1e-3) <= 0.01 * 1e-3);
}

TEST_CASE("adam with zero betas is a normalized gradient step") {
  Rng rng(19);
  for (int i = 0; i < 50; ++i) {
    const double g = rng.uniform(-5, 5), w = rng.uniform(-1, 1);
    auto s = scalar_store(w, g);
    adam_step(s, {.learning_rate = 0.01, .beta1 = 0.0, .beta2 = 0.0});
    CHECK(s.at("w").value[0] == doctest::Approx(w - 0.01 * g / (std::abs(g) + 1e-8)).epsilon(1e-12));
  }
}

TEST_CASE("adam rejects non-finite gradients before updating") {
  ParamStore s;
  s.add("a", {1}).grad[0] = 1.0;
  s.add("b", {1}).grad[0] = std::nan("");
  try {
    adam_step(s, {});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(s.at("a").value[0] == 0.0);
  CHECK(s.step_count() == 0);
  CHECK_THROWS_AS(AdamConfig{.beta1 = 1.0}.validate(), ValidationError);
  CHECK_THROWS_AS(AdamConfig{.epsilon = 0.0}.validate(), ValidationError);
}

TEST_CASE("grad_check on y = w x, loss y^2") {
  auto s = scalar_store(1.0, 0.0);
  const double x = 2.0;
  double analytic = 0.0;
  auto loss = [&](bool with_gradients) {
    const double w = s.value("w")[0];
    if (with_gradients) {
      s.grad("w")[0] += 2 * w * x * x;
      analytic = s.grad("w")[0];
    }
    return (w * x) * (w * x);
  };
  const auto r = grad_check(loss, s, 5, 1);
  CHECK(analytic == 8.0);
  CHECK(r.max_relative_error < 1e-8);
}

TEST_CASE("grad_check with zero input gives zero gradients both ways") {
  Rng rng(20);
  ParamStore s;
  Dense a("a", 4, 4, Activation::tanh), b("b", 4, 3, Activation::identity);
  a.init(s, rng);
  b.init(s, rng);
  for (auto* name : {"a.bias", "b.bias"}) s.at(name).value.fill(0.0);
  const DenseArray x({2, 4});
  auto loss = [&](bool with_gradients) {
    auto out = b.forward(s, a.forward(s, x, Mode::train, 0), Mode::train, 0);
    double l = 0;
    for (double v : out.data()) l += v * v;
    if (with_gradients) {
      DenseArray up = out;
      for (std::size_t i = 0; i < up.size(); ++i) up[i] *= 2;
      a.backward(s, b.backward(s, up));
      for (std::string name : {"a.weight", "b.weight"})
        for (double g : s.at(name).grad.data()) CHECK(g == 0.0);
    }
    return l;
  };
  CHECK(grad_check(loss, s, 30, 2).max_relative_error == 0.0);
}

TEST_CASE("grad_check rejects a non-finite loss") {
  auto s = scalar_store(1.0, 0.0);
  CHECK_THROWS_AS(grad_check([](bool) { return std::nan(""); }, s, 3, 1), NumericError);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(21);
  ParamStore s;
  s.add_uniform("layer.weight", {3, 4}, 3, rng);
  s.add_uniform("layer.bias", {4}, 3, rng);
  for (auto& [name, p] : s)
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] = rng.uniform(-1, 1);
  adam_step(s, {.learning_rate = 0.01});
  adam_step(s, {.learning_rate = 0.01});

  const auto dir = std::filesystem::temp_directory_path() / "immunokit_test_checkpoint";
  std::filesystem::remove_all(dir);
  const AdamConfig adam{.learning_rate = 0.01, .beta1 = 0.8};
  save_checkpoint(dir, s, adam, {{"model", "toy"}});
  const auto loaded = load_checkpoint(dir);
  CHECK(loaded.params.step_count() == 2);
  CHECK(loaded.adam.learning_rate == 0.01);
  CHECK(loaded.adam.beta1 == 0.8);
  CHECK(loaded.metadata["model"] == "toy");
  for (const auto& [name, p] : s) {
    const auto& q = loaded.params.at(name);
    CHECK(q.value == p.value);
    CHECK(q.m == p.m);
    CHECK(q.v == p.v);
  }

  std::filesystem::resize_file(dir / "layer.bias.f64", 8);
  CHECK_THROWS_AS(load_checkpoint(dir), ValidationError);
  std::ofstream(dir / "manifest.json") << R"({"format":"other"})";
  CHECK_THROWS_AS(load_checkpoint(dir), ValidationError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_checkpoint(dir), ValidationError);
}
