#include <cmath>
#include <random>

#include "aerosdf/unet.hpp"
#include "doctest.h"

using namespace aerosdf;
using namespace aerosdf::unet;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

UNetConfig tiny_config() {
  UNetConfig c;
  c.dims = {16, 8, 8};
  c.depth = 2;
  c.base_width = 2;
  c.head_width = 8;
  c.seed = 3;
  return c;
}

// Owns the stores a standalone block needs.
struct Harness {
  ParameterStore<double> params;
  StatsStore<double> stats;
  Initializer init{17};
};

// Gradient check of a block over its parameters and input.
template <typename Block>
ad::GradCheckResult check_block(const Block& block, Harness& h, const Tensor<double>& input, std::uint64_t seed) {
  const auto out_weights = [&] {
    Tape<double> tape;
    Binder<double> bind(tape, h.params, false);
    Context<double> ctx{bind, h.stats, &h.stats, 0.0, 0};
    return random_tensor(block.apply(ctx, tape.leaf(input)).shape(), seed);
  }();
  Tensor<double> x = input;
  auto build = [&](Tape<double>& tape) {
    Binder<double> bind(tape, h.params, true);
    Context<double> ctx{bind, h.stats, &h.stats, 0.0, 0};
    auto xin = tape.leaf(x, true);
    auto loss = ad::weighted_sum(block.apply(ctx, xin), out_weights);
    return std::tuple{loss, xin, bind.vars()};
  };
  std::vector<Tensor<double>> grads;
  std::vector<Tensor<double>*> targets{&x};
  std::vector<std::string> names{"input"};
  {
    Tape<double> tape;
    auto [loss, xin, vars] = build(tape);
    tape.backward(loss);
    grads.push_back(tape.grad(xin));
    for (std::size_t i = 0; i < vars.size(); ++i) {
      grads.push_back(tape.grad(vars[i]));
      targets.push_back(&h.params.value(i));
      names.push_back(h.params.name(i));
    }
  }
  return ad::compare_gradients(targets, names, grads, [&] {
    Tape<double> tape;
    return std::get<0>(build(tape)).value()[0];
  });
}

}  // namespace

TEST_CASE("encoder block halves the spatial extents") {
  UNetConfig config;
  Harness h;
  const auto block = build_encoder_block(8, 16, config, "b");
  block.declare(h.params, h.stats, h.init);
  Tape<double> tape;
  Binder<double> bind(tape, h.params, false);
  Context<double> ctx{bind, h.stats, nullptr, 0.0, 0};
  const auto input = random_tensor({1, 8, 16, 4, 4}, 1);
  auto y = block.apply(ctx, tape.leaf(input));
  CHECK(y.shape() == Shape{1, 16, 8, 2, 2});
  auto y2 = block.apply(ctx, tape.leaf(input));
  CHECK(y.value() == y2.value());
}

TEST_CASE("encoder block gradients") {
  UNetConfig config;
  Harness h;
  const auto block = build_encoder_block(2, 3, config, "b");
  block.declare(h.params, h.stats, h.init);
  const auto r = check_block(block, h, random_tensor({2, 2, 6, 4, 4}, 2), 3);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("SE block with saturated gates is the identity") {
  Harness h;
  const auto se = build_se_block(4, 2, "se");
  se.declare(h.params, h.init);
  h.params.at("se.fc2.w").fill(0.0);
  h.params.at("se.fc2.b").fill(60.0);
  h.params.at("se.spatial.w").fill(0.0);
  h.params.at("se.spatial.b").fill(60.0);
  Tape<double> tape;
  Binder<double> bind(tape, h.params, false);
  Context<double> ctx{bind, h.stats, nullptr, 0.0, 0};
  const auto input = random_tensor({2, 4, 3, 3, 2}, 4);
  CHECK(se.apply(ctx, tape.leaf(input)).value() == input);
}

TEST_CASE("SE output is bounded by the input in magnitude") {
  Harness h;
  const auto se = build_se_block(6, 3, "se");
  se.declare(h.params, h.init);
  Tape<double> tape;
  Binder<double> bind(tape, h.params, false);
  Context<double> ctx{bind, h.stats, nullptr, 0.0, 0};
  const auto input = random_tensor({2, 6, 4, 3, 2}, 5);
  auto y = se.apply(ctx, tape.leaf(input));
  for (std::size_t i = 0; i < input.size(); ++i) CHECK(std::abs(y.value()[i]) <= std::abs(input[i]));
}

TEST_CASE("SE block gradients") {
  Harness h;
  const auto se = build_se_block(4, 2, "se");
  se.declare(h.params, h.init);
  const auto r = check_block(se, h, random_tensor({2, 4, 3, 2, 2}, 6), 7);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("c_d head shapes, determinism and live gradients") {
  UNetConfig config;
  config.head_width = 5;
  config.dropout = 0.2;
  Harness h;
  const auto head = build_cd_head(12, config, "head");
  head.declare(h.params, h.stats, h.init);
  const auto input = random_tensor({7, 3, 2, 2, 1}, 8);
  {
    Tape<double> tape;
    Binder<double> bind(tape, h.params, false);
    Context<double> ctx{bind, h.stats, nullptr, config.dropout, 0};
    auto a = head.apply(ctx, tape.leaf(input));
    auto b = head.apply(ctx, tape.leaf(input));
    CHECK(a.shape() == Shape{7, 1});
    CHECK(a.value() == b.value());
  }
  Tape<double> tape;
  Binder<double> bind(tape, h.params, true);
  Context<double> ctx{bind, h.stats, &h.stats, config.dropout, 99};
  auto y = head.apply(ctx, tape.leaf(input));
  tape.backward(ad::weighted_sum(y, random_tensor({7, 1}, 9)));
  for (std::size_t i = 0; i < bind.vars().size(); ++i) {
    const auto g = tape.grad(bind.vars()[i]);
    double mag = 0;
    for (double v : g.values()) mag += std::abs(v);
    INFO(h.params.name(i));
    CHECK(mag > 0.0);
  }
}

TEST_CASE("velocity decoders output one channel at full resolution") {
  UNetConfig config;
  config.dims = {64, 16, 16};
  config.depth = 4;
  config.base_width = 2;
  config.head_width = 4;
  config.predict_fields = true;
  const UNetModel<float> model(config);
  Tape<float> tape;
  auto out = model.forward(tape, Tensor<float>({2, 1, 64, 16, 16}, 0.5f));
  CHECK(out.fields.shape() == Shape{2, 3, 64, 16, 16});
  CHECK(out.cd.shape() == Shape{2, 1});
}

TEST_CASE("skip connections are live") {
  auto config = tiny_config();
  config.predict_fields = true;
  Harness h;
  const auto dec = build_velocity_decoder(config, "dec");
  dec.declare(h.params, h.stats, h.init);
  const auto w = config.widths();
  std::vector<Tensor<double>> skips;
  for (std::size_t l = 0; l <= config.depth; ++l) {
    const auto d = config.level_dims(l);
    skips.push_back(random_tensor({1, w[l], d[0], d[1], d[2]}, 20 + l));
  }
  auto run = [&](bool zero_skips) {
    Tape<double> tape;
    Binder<double> bind(tape, h.params, false);
    Context<double> ctx{bind, h.stats, nullptr, 0.0, 0};
    std::vector<Var<double>> vars;
    for (std::size_t l = 0; l < skips.size(); ++l) {
      auto t = skips[l];
      if (zero_skips && l < config.depth) t.fill(0.0);
      vars.push_back(tape.leaf(t));
    }
    return dec.apply(ctx, vars).value();
  };
  const auto with = run(false);
  CHECK(with.shape() == Shape{1, 1, 16, 8, 8});
  CHECK(with != run(true));
}

TEST_CASE("velocity decoder gradients") {
  auto config = tiny_config();
  config.dims = {8, 4, 4};
  Harness h;
  const auto dec = build_velocity_decoder(config, "dec");
  dec.declare(h.params, h.stats, h.init);
  const auto w = config.widths();
  std::vector<Tensor<double>> skips;
  for (std::size_t l = 0; l <= config.depth; ++l) {
    const auto d = config.level_dims(l);
    skips.push_back(random_tensor({2, w[l], d[0], d[1], d[2]}, 30 + l));
  }
  const auto weights = random_tensor({2, 1, 8, 4, 4}, 40);
  auto build = [&](Tape<double>& tape) {
    Binder<double> bind(tape, h.params, true);
    Context<double> ctx{bind, h.stats, &h.stats, 0.0, 0};
    std::vector<Var<double>> vars;
    for (const auto& s : skips) vars.push_back(tape.leaf(s, true));
    return std::tuple{ad::weighted_sum(dec.apply(ctx, vars), weights), vars, bind.vars()};
  };
  std::vector<Tensor<double>> grads;
  std::vector<Tensor<double>*> targets;
  std::vector<std::string> names;
  {
    Tape<double> tape;
    auto [loss, inputs, params] = build(tape);
    tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      grads.push_back(tape.grad(inputs[i]));
      targets.push_back(&skips[i]);
      names.push_back("skip" + std::to_string(i));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      grads.push_back(tape.grad(params[i]));
      targets.push_back(&h.params.value(i));
      names.push_back(h.params.name(i));
    }
  }
  const auto r = ad::compare_gradients(targets, names, grads, [&] {
    Tape<double> tape;
    return std::get<0>(build(tape)).value()[0];
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("c_d-only model allocates no decoder") {
  const UNetModel<float> model(tiny_config());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) CHECK(model.parameters().name(i).rfind("dec", 0) != 0);
  Tape<float> tape;
  auto out = model.forward(tape, Tensor<float>({1, 1, 16, 8, 8}, 0.1f));
  CHECK_FALSE(out.fields.valid());
}

TEST_CASE("smoke: batch of one on 32x8x8 with depth 3") {
  UNetConfig config;
  config.dims = {32, 8, 8};
  config.depth = 3;
  const UNetModel<float> model(config);
  const auto cd = model.predict_cd(random_tensor({1, 1, 32, 8, 8}, 50).cast<float>());
  REQUIRE(cd.size() == 1);
  CHECK(std::isfinite(cd[0]));
}

TEST_CASE("eval mode is batch independent and idempotent") {
  const UNetModel<float> model(tiny_config());
  const auto input = random_tensor({3, 1, 16, 8, 8}, 60).cast<float>();
  Tensor<float> permuted(input.shape());
  const std::size_t per = input.size() / 3;
  const std::size_t order[3] = {2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i) std::copy_n(input.data() + order[i] * per, per, permuted.data() + i * per);
  const auto a = model.predict_cd(input);
  const auto b = model.predict_cd(permuted);
  for (std::size_t i = 0; i < 3; ++i) CHECK(b[i] == a[order[i]]);
  CHECK(model.predict_cd(input) == a);
}

TEST_CASE("input dimension mismatch names the axis") {
  const UNetModel<float> model(tiny_config());
  try {
    model.predict_cd(Tensor<float>({1, 1, 16, 4, 8}));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis y") != std::string::npos);
  }
  UNetConfig bad = tiny_config();
  bad.dims = {16, 6, 8};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("parameter count: closed form equals the built store") {
  ParameterStore<float> dense;
  dense.add("w", Tensor<float>({4, 2}));
  dense.add("b", Tensor<float>({2}));
  CHECK(element_count(dense) == 10);

  for (std::size_t depth : {1u, 2u, 3u}) {
    for (std::size_t base : {1u, 2u, 5u}) {
      for (bool fields : {false, true}) {
        UNetConfig c;
        c.dims = {32, 16, 8};
        c.depth = depth;
        c.base_width = base;
        c.max_width = 12;
        c.se_reduction = 3;
        c.head_width = 7;
        c.predict_fields = fields;
        const UNetModel<float> model(c);
        CHECK(element_count(model.parameters()) == parameter_count(c));
      }
    }
  }
}

TEST_CASE("bottleneck extents") {
  UNetConfig c;
  c.dims = {256, 64, 64};
  c.depth = 6;
  CHECK(c.level_dims(6) == std::array<std::size_t, 3>{4, 1, 1});
}

TEST_CASE("width sweep toward a 20M-26M parameter c_d model at full resolution") {
  UNetConfig c;
  c.dims = {256, 64, 64};
  c.depth = 6;
  c.head_width = 256;
  std::size_t found = 0;
  for (std::size_t base = 1; base <= 128 && !found; ++base) {
    c.base_width = base;
    const auto n = parameter_count(c);
    if (n >= 20'000'000 && n <= 26'000'000) found = base;
  }
  MESSAGE("base width with 20M-26M parameters: " << found);
  CHECK(found > 0);
}

TEST_CASE("tiny full model passes the gradient check") {
  auto config = tiny_config();
  config.predict_fields = true;
  config.dropout = 0.1;
  ad::GradCheckOptions options;
  options.retry_epsilons = {1e-6, 1e-4};
  const auto r = check_model_gradients(config, 3, 77, options);
  INFO(r.worst);
  MESSAGE("entries checked: " << r.entries << ", retried: " << r.retried << ", max relative error " << r.max_rel_error);
  CHECK(r.max_rel_error < 1e-3);
}
