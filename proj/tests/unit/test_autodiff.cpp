#include <cmath>
#include <random>

#include "aerosdf/autodiff/gradcheck.hpp"
#include "aerosdf/autodiff/kernels.hpp"
#include "aerosdf/autodiff/ops.hpp"
#include "aerosdf/common/parallel.hpp"
#include "doctest.h"

using namespace aerosdf;
using namespace aerosdf::ad;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Random projection so that no gradient is structurally tiny.
Var<double> project(const Var<double>& y, std::uint64_t seed) {
  return weighted_sum(y, random_tensor(y.shape(), seed, 0.5, 1.5));
}

constexpr double kPrimitiveTol = 1e-4;
constexpr double kCompositeTol = 1e-3;

}  // namespace

TEST_CASE("conv3d of ones") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({1, 1, 3, 3, 3}, 1.0));
  auto w = tape.leaf(Tensor<double>({1, 1, 3, 3, 3}, 1.0));
  auto y = conv3d(x, w, Var<double>{});
  CHECK(y.shape() == Shape{1, 1, 1, 1, 1});
  CHECK(y.value()[0] == 27.0);
}

TEST_CASE("identity kernel reproduces the input") {
  Tape<double> tape;
  const auto xt = random_tensor({2, 1, 4, 5, 3}, 1);
  Tensor<double> k({1, 1, 3, 3, 3}, 0.0);
  k[13] = 1.0;
  auto y = conv3d(tape.leaf(xt), tape.leaf(k), Var<double>{}, 1, 1, 1);
  CHECK(y.value() == xt);
}

TEST_CASE("conv3d gradients with dilation 2") {
  auto r = gradcheck(
      [](const std::vector<Var<double>>& in) { return project(conv3d(in[0], in[1], in[2], 1, 2, 2), 7); },
      {random_tensor({1, 2, 5, 5, 5}, 1), random_tensor({3, 2, 3, 3, 3}, 2), random_tensor({3}, 3)});
  INFO(r.worst);
  CHECK(r.max_rel_error < kPrimitiveTol);
}

TEST_CASE("conv3d gradients with stride 2") {
  auto r = gradcheck(
      [](const std::vector<Var<double>>& in) { return project(conv3d(in[0], in[1], in[2], 2, 1, 1), 8); },
      {random_tensor({2, 2, 5, 6, 4}, 4), random_tensor({2, 2, 3, 3, 3}, 5), random_tensor({2}, 6)});
  INFO(r.worst);
  CHECK(r.max_rel_error < kPrimitiveTol);
}

TEST_CASE("conv3d shape errors name the axis") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({1, 2, 4, 4, 4}));
  try {
    conv3d(x, tape.leaf(Tensor<double>({1, 3, 3, 3, 3})), Var<double>{});
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis C") != std::string::npos);
  }
  try {
    conv3d(tape.leaf(Tensor<double>({1, 1, 4, 2, 4})), tape.leaf(Tensor<double>({1, 1, 3, 3, 3})), Var<double>{});
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis H") != std::string::npos);
  }
}

TEST_CASE("output extents follow the closed form on dims 1..8") {
  for (std::size_t n = 1; n <= 8; ++n)
    for (std::size_t k = 1; k <= 3; ++k)
      for (std::size_t s = 1; s <= 3; ++s)
        for (std::size_t p = 0; p <= 2; ++p)
          for (std::size_t d = 1; d <= 2; ++d) {
            const long padded = static_cast<long>(n + 2 * p), span = static_cast<long>(d * (k - 1) + 1);
            if (padded < span) {
              CHECK_THROWS_AS(kernels::conv_output_extent(n, k, s, p, d, "D"), ShapeError);
              continue;
            }
            const std::size_t expected = static_cast<std::size_t>((padded - span) / static_cast<long>(s)) + 1;
            CHECK(kernels::conv_output_extent(n, k, s, p, d, "D") == expected);
            Tape<double> tape;
            auto y = conv3d(tape.leaf(Tensor<double>({1, 1, n, 1 + 2 * d, n})),
                            tape.leaf(Tensor<double>({1, 1, k, 1, k})), Var<double>{}, s, p, d);
            CHECK(y.shape()[2] == expected);
            CHECK(y.shape()[4] == expected);
          }
}

TEST_CASE("fast convolution kernels agree with the reference loops") {
  for (auto [stride, pad, dil] : {std::tuple{1, 1, 1}, std::tuple{2, 1, 1}, std::tuple{1, 2, 2}, std::tuple{2, 0, 1}}) {
    const auto x = random_tensor({3, 4, 6, 5, 7}, 11);
    const auto w = random_tensor({5, 4, 3, 3, 3}, 12);
    const auto b = random_tensor({5}, 13);
    const auto g = kernels::make_conv_geometry(x.shape(), w.shape(), stride, pad, dil);
    Tensor<double> y1({g.n, g.f, g.out[0], g.out[1], g.out[2]}), y2 = y1;
    kernels::conv3d_forward(g, x.data(), w.data(), b.data(), y1.data());
    kernels::reference::conv3d_forward(g, x.data(), w.data(), b.data(), y2.data());
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));

    const auto dy = random_tensor(y1.shape(), 14);
    Tensor<double> dx1(x.shape()), dx2(x.shape()), dw1(w.shape()), dw2(w.shape()), db1({5}), db2({5});
    kernels::conv3d_backward_input(g, w.data(), dy.data(), dx1.data());
    kernels::reference::conv3d_backward_input(g, w.data(), dy.data(), dx2.data());
    for (std::size_t i = 0; i < dx1.size(); ++i) CHECK(dx1[i] == doctest::Approx(dx2[i]).epsilon(1e-12));
    kernels::conv3d_backward_weight(g, x.data(), dy.data(), dw1.data(), db1.data());
    kernels::reference::conv3d_backward_weight(g, x.data(), dy.data(), dw2.data(), db2.data());
    for (std::size_t i = 0; i < dw1.size(); ++i) CHECK(dw1[i] == doctest::Approx(dw2[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < 5; ++i) CHECK(db1[i] == doctest::Approx(db2[i]).epsilon(1e-12));
  }
}

TEST_CASE("convolution results do not depend on the worker count") {
  const auto x = random_tensor({4, 3, 6, 6, 6}, 21).cast<float>();
  const auto w = random_tensor({4, 3, 3, 3, 3}, 22).cast<float>();
  const auto g = kernels::make_conv_geometry(x.shape(), w.shape(), 1, 1, 1);
  const auto dy = random_tensor({4, 4, 6, 6, 6}, 23).cast<float>();
  auto run = [&] {
    Tensor<float> dw(w.shape()), db({4});
    kernels::conv3d_backward_weight(g, x.data(), dy.data(), dw.data(), db.data());
    return dw;
  };
  const auto many = run();
  parallel::WorkerScope one(1);
  CHECK(run() == many);
}

TEST_CASE("conv3d_transpose is the adjoint of conv3d") {
  const auto x = random_tensor({2, 3, 4, 6, 4}, 31);
  const auto y = random_tensor({2, 5, 8, 12, 8}, 32);
  const auto w = random_tensor({5, 3, 3, 3, 3}, 33);
  Tape<double> tape;
  // conv maps [2,5,8,12,8] -> [2,3,4,6,4] with kernel [3,5,...] viewed as [F=3, C=5].
  Tensor<double> wc({3, 5, 3, 3, 3});
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t c = 0; c < 5; ++c)
      for (std::size_t k = 0; k < 27; ++k) wc[(f * 5 + c) * 27 + k] = w[(c * 3 + f) * 27 + k];
  auto cy = conv3d(tape.leaf(y), tape.leaf(wc), Var<double>{}, 2, 1, 1);
  REQUIRE(cy.shape() == x.shape());
  Tensor<double> wt({3, 5, 3, 3, 3});
  wt = wc;  // transpose kernels are [C_in, C_out, ...]
  auto tx = conv3d_transpose(tape.leaf(x), tape.leaf(wt), Var<double>{}, 2, 1, 1);
  REQUIRE(tx.shape() == y.shape());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) lhs += cy.value()[i] * x[i];
  for (std::size_t i = 0; i < y.size(); ++i) rhs += y[i] * tx.value()[i];
  CHECK(std::abs(lhs - rhs) <= 1e-5 * std::abs(lhs));
}

TEST_CASE("stride-2 transpose doubles every spatial extent") {
  Tape<double> tape;
  auto y = conv3d_transpose(tape.leaf(Tensor<double>({1, 2, 4, 2, 1}, 1.0)), tape.leaf(Tensor<double>({2, 3, 3, 3, 3}, 1.0)),
                            Var<double>{});
  CHECK(y.shape() == Shape{1, 3, 8, 4, 2});
}

TEST_CASE("transpose convolution of a constant input is not uniform") {
  Tape<double> tape;
  auto y = conv3d_transpose(tape.leaf(Tensor<double>({1, 1, 4, 4, 4}, 1.0)),
                            tape.leaf(Tensor<double>({1, 1, 3, 3, 3}, 1.0)), Var<double>{});
  double lo = INFINITY, hi = -INFINITY;
  // Interior only, so the non-uniformity is not a border effect.
  for (std::size_t z = 2; z < 6; ++z)
    for (std::size_t yy = 2; yy < 6; ++yy)
      for (std::size_t x = 2; x < 6; ++x) {
        const double v = y.value()[(z * 8 + yy) * 8 + x];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  CHECK(hi > lo);
}

TEST_CASE("conv3d_transpose gradients") {
  auto r = gradcheck(
      [](const std::vector<Var<double>>& in) {
        return project(conv3d_transpose(in[0], in[1], in[2], 2, 1, 1), 9);
      },
      {random_tensor({2, 2, 3, 2, 3}, 41), random_tensor({2, 3, 3, 3, 3}, 42), random_tensor({3}, 43)});
  INFO(r.worst);
  CHECK(r.max_rel_error < kPrimitiveTol);
}

TEST_CASE("maxpool picks the maximum and breaks ties to the first element") {
  Tape<double> tape;
  Tensor<double> ramp({1, 1, 2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) ramp[i] = static_cast<double>(i);
  auto y = maxpool3d(tape.leaf(ramp));
  CHECK(y.value()[0] == 7.0);

  Tape<double> t2;
  auto x = t2.leaf(Tensor<double>({1, 1, 2, 2, 2}, 3.0), true);
  auto p = maxpool3d(x);
  t2.backward(sum(p));
  const auto g = t2.grad(x);
  CHECK(g[0] == 1.0);
  for (std::size_t i = 1; i < 8; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("maxpool gradients away from ties") {
  auto r = gradcheck([](const std::vector<Var<double>>& in) { return project(maxpool3d(in[0]), 10); },
                     {random_tensor({2, 3, 4, 6, 2}, 51)});
  CHECK(r.max_rel_error < kPrimitiveTol);
}

TEST_CASE("batchnorm normalizes per channel in train mode") {
  Tape<double> tape;
  const auto xt = random_tensor({4, 3, 2, 2, 2}, 61, -3.0, 5.0);
  auto state = BatchNormState<double>::fresh(3);
  auto y = batchnorm(tape.leaf(xt), tape.leaf(Tensor<double>({3}, 1.0)), tape.leaf(Tensor<double>({3}, 0.0)), state,
                     Mode::kTrain, {0.1, 0.0});
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t k = 0; k < 8; ++k) m += y.value()[(n * 3 + c) * 8 + k];
    m /= 32;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t k = 0; k < 8; ++k) v += std::pow(y.value()[(n * 3 + c) * 8 + k] - m, 2);
    v /= 32;
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-5);
  }
  CHECK(state.mean[0] != 0.0);
}

TEST_CASE("batchnorm eval mode with unit running stats is the identity up to epsilon") {
  Tape<double> tape;
  const auto xt = random_tensor({2, 2, 3}, 62);
  auto state = BatchNormState<double>::fresh(2);
  auto y = batchnorm(tape.leaf(xt), tape.leaf(Tensor<double>({2}, 1.0)), tape.leaf(Tensor<double>({2}, 0.0)), state,
                     Mode::kEval);
  for (std::size_t i = 0; i < xt.size(); ++i) CHECK(y.value()[i] == doctest::Approx(xt[i] / std::sqrt(1 + 1e-5)));
  CHECK(state.mean[0] == 0.0);
  CHECK(state.var[0] == 1.0);
}

TEST_CASE("batchnorm running statistics follow the momentum rule") {
  Tape<double> tape;
  Tensor<double> xt({4, 1}, std::vector<double>{1, 2, 3, 6});
  auto state = BatchNormState<double>::fresh(1);
  batchnorm(tape.leaf(xt), tape.leaf(Tensor<double>({1}, 1.0)), tape.leaf(Tensor<double>({1}, 0.0)), state,
            Mode::kTrain);
  // mean 3, unbiased variance (4 + 1 + 0 + 9) / 3
  CHECK(state.mean[0] == doctest::Approx(0.3));
  CHECK(state.var[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
}

TEST_CASE("batchnorm gradients") {
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    auto r = gradcheck(
        [mode](const std::vector<Var<double>>& in) {
          BatchNormState<double> state{Tensor<double>({3}, std::vector<double>{0.1, -0.2, 0.3}),
                                       Tensor<double>({3}, std::vector<double>{0.5, 1.5, 2.0})};
          return project(batchnorm(in[0], in[1], in[2], state, mode), 12);
        },
        {random_tensor({4, 3, 2, 2, 2}, 71), random_tensor({3}, 72, 0.5, 1.5), random_tensor({3}, 73)});
    INFO(r.worst);
    CHECK(r.max_rel_error < kCompositeTol);
  }
}

TEST_CASE("dropout modes") {
  Tape<double> tape;
  const auto xt = random_tensor({100, 100}, 81);
  auto x = tape.leaf(xt);
  CHECK(dropout(x, 0.0, Mode::kTrain, 1).value() == xt);
  CHECK(dropout(x, 0.7, Mode::kEval, 1).value() == xt);
  auto y = dropout(x, 0.5, Mode::kTrain, 1234);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (y.value()[i] != 0.0) {
      ++kept;
      CHECK(y.value()[i] == doctest::Approx(2.0 * xt[i]));
    }
  }
  const double fraction = static_cast<double>(kept) / 10000.0;
  CHECK(fraction >= 0.47);
  CHECK(fraction <= 0.53);
  CHECK(dropout(x, 0.5, Mode::kTrain, 1234).value() == y.value());
  CHECK(dropout(x, 0.5, Mode::kTrain, 1235).value() != y.value());
}

TEST_CASE("dropout gradients") {
  auto r = gradcheck([](const std::vector<Var<double>>& in) { return project(dropout(in[0], 0.3, Mode::kTrain, 5), 13); },
                     {random_tensor({3, 7}, 82)});
  CHECK(r.max_rel_error < kPrimitiveTol);
}

TEST_CASE("relu, dense identity and elementwise basics") {
  Tape<double> tape;
  auto r = relu(tape.leaf(Tensor<double>({2}, std::vector<double>{-2, 3})));
  CHECK(r.value()[0] == 0.0);
  CHECK(r.value()[1] == 3.0);

  const auto xt = random_tensor({3, 4}, 91);
  Tensor<double> eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  auto d = dense(tape.leaf(xt), tape.leaf(eye), tape.leaf(Tensor<double>({4}, 0.0)));
  CHECK(d.value() == xt);
  CHECK_THROWS_AS(dense(tape.leaf(xt), tape.leaf(Tensor<double>({3, 4})), Var<double>{}), ShapeError);
}

TEST_CASE("gradients of the elementwise and reduction primitives") {
  struct Case {
    const char* name;
    GraphFn fn;
    std::vector<Tensor<double>> inputs;
  };
  std::vector<Case> cases{
      {"dense", [](auto& in) { return project(dense(in[0], in[1], in[2]), 1); },
       {random_tensor({3, 4}, 1), random_tensor({4, 2}, 2), random_tensor({2}, 3)}},
      {"relu", [](auto& in) { return project(relu(in[0]), 2); }, {random_tensor({3, 5}, 4)}},
      {"sigmoid", [](auto& in) { return project(sigmoid(in[0]), 3); }, {random_tensor({3, 5}, 5, -4, 4)}},
      {"square", [](auto& in) { return project(square(in[0]), 4); }, {random_tensor({6}, 6)}},
      {"scale", [](auto& in) { return project(scale(in[0], -2.5), 5); }, {random_tensor({6}, 7)}},
      {"global_avg_pool", [](auto& in) { return project(global_avg_pool(in[0]), 6); },
       {random_tensor({2, 3, 2, 3, 2}, 8)}},
      {"channel_max", [](auto& in) { return project(channel_max(in[0]), 7); }, {random_tensor({2, 4, 2, 3, 2}, 9)}},
      {"maximum", [](auto& in) { return project(maximum(in[0], in[1]), 8); },
       {random_tensor({2, 3, 4}, 10), random_tensor({2, 3, 4}, 11)}},
      {"concat", [](auto& in) { return project(concat<double>({in[0], in[1]}), 9); },
       {random_tensor({2, 1, 3, 2, 2}, 12), random_tensor({2, 3, 3, 2, 2}, 13)}},
      {"slice_channels", [](auto& in) { return project(slice_channels(in[0], 1, 3), 10); },
       {random_tensor({2, 4, 3}, 14)}},
      {"flatten", [](auto& in) { return project(flatten(in[0]), 11); }, {random_tensor({2, 3, 2, 2, 1}, 15)}},
      {"add broadcast", [](auto& in) { return project(add(in[0], in[1]), 12); },
       {random_tensor({2, 3, 2, 2, 2}, 16), random_tensor({2, 3, 1, 1, 1}, 17)}},
      {"sub broadcast", [](auto& in) { return project(sub(in[0], in[1]), 13); },
       {random_tensor({2, 1, 2, 2, 2}, 18), random_tensor({2, 3, 2, 2, 2}, 19)}},
      {"mul broadcast", [](auto& in) { return project(mul(in[0], in[1]), 14); },
       {random_tensor({2, 3, 2, 2, 2}, 20), random_tensor({2, 1, 2, 2, 2}, 21)}},
      {"sum", [](auto& in) { return sum(mul(in[0], in[0])); }, {random_tensor({5}, 22)}},
      {"mean", [](auto& in) { return mean(mul(in[0], in[1])); }, {random_tensor({5}, 23), random_tensor({5}, 24)}},
      {"weighted_sum", [](auto& in) { return weighted_sum(square(in[0]), random_tensor({4}, 25)); },
       {random_tensor({4}, 26)}},
  };
  for (const auto& c : cases) {
    auto r = gradcheck(c.fn, c.inputs);
    INFO(c.name << ": " << r.worst);
    CHECK(r.max_rel_error < kPrimitiveTol);
  }
}

TEST_CASE("composed conv, relu, pool and dense block") {
  auto r = gradcheck(
      [](const std::vector<Var<double>>& in) {
        auto h = maxpool3d(relu(conv3d(in[0], in[1], in[2], 1, 1, 1)));
        return project(dense(flatten(h), in[3], in[4]), 15);
      },
      {random_tensor({2, 2, 4, 4, 4}, 101), random_tensor({3, 2, 3, 3, 3}, 102), random_tensor({3}, 103),
       random_tensor({24, 2}, 104), random_tensor({2}, 105)});
  INFO(r.worst);
  CHECK(r.max_rel_error < kPrimitiveTol);
}

TEST_CASE("backward basics") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({3}, std::vector<double>{1, 2, 3}), true);
  tape.backward(sum(x));
  for (std::size_t i = 0; i < 3; ++i) CHECK(tape.grad(x)[i] == 1.0);
  CHECK_THROWS_AS(tape.backward(sum(x)), Error);

  Tape<double> t2;
  auto y = t2.leaf(Tensor<double>({3}, std::vector<double>{1, 2, 3}), true);
  t2.backward(sum(mul(y, y)));
  CHECK(t2.grad(y) == Tensor<double>({3}, std::vector<double>{2, 4, 6}));

  Tape<double> t3;
  auto z = t3.leaf(Tensor<double>({3}, 1.0), true);
  CHECK_THROWS_AS(t3.backward(mul(z, z)), ShapeError);
}

TEST_CASE("reset reopens a tape") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({2}, 1.0), true);
  tape.backward(sum(x));
  CHECK_THROWS_AS(tape.leaf(Tensor<double>({1})), Error);
  tape.reset();
  CHECK(tape.size() == 0);
  auto y = tape.leaf(Tensor<double>({2}, 2.0), true);
  tape.backward(sum(square(y)));
  CHECK(tape.grad(y)[0] == 4.0);
}

TEST_CASE("forward and backward are bitwise repeatable") {
  auto run = [] {
    Tape<float> tape;
    auto x = tape.leaf(random_tensor({2, 2, 6, 6, 6}, 201).cast<float>(), true);
    auto w = tape.leaf(random_tensor({4, 2, 3, 3, 3}, 202).cast<float>(), true);
    auto y = maxpool3d(relu(conv3d(x, w, Var<float>{}, 1, 2, 2)));
    tape.backward(sum(square(y)));
    return std::pair{tape.grad(x), tape.grad(w)};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
