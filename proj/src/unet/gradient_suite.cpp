#include "aerosdf/gradient_suite.hpp"

#include <chrono>
#include <cstdio>
#include <random>

#include "aerosdf/autodiff/ops.hpp"
#include "aerosdf/unet.hpp"

namespace aerosdf::ad {

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Fixed positive projection so that no output gradient is structurally tiny.
Var<double> project(const Var<double>& y, std::uint64_t seed) {
  return weighted_sum(y, random_tensor(y.shape(), seed, 0.5, 1.5));
}

struct Case {
  std::string name;
  CheckKind kind;
  GraphFn fn;
  std::vector<Tensor<double>> inputs;
};

std::vector<Case> cases() {
  using In = const std::vector<Var<double>>&;
  const auto P = CheckKind::kPrimitive;
  const auto C = CheckKind::kComposition;
  auto bn = [](Mode mode) {
    return [mode](In in) {
      BatchNormState<double> state{Tensor<double>({3}, std::vector<double>{0.1, -0.2, 0.3}),
                                   Tensor<double>({3}, std::vector<double>{0.5, 1.5, 2.0})};
      return project(batchnorm(in[0], in[1], in[2], state, mode), 12);
    };
  };
  return {
      {"conv3d dilation 2", P, [](In in) { return project(conv3d(in[0], in[1], in[2], 1, 2, 2), 7); },
       {random_tensor({1, 2, 5, 5, 5}, 1), random_tensor({3, 2, 3, 3, 3}, 2), random_tensor({3}, 3)}},
      {"conv3d stride 2", P, [](In in) { return project(conv3d(in[0], in[1], in[2], 2, 1, 1), 8); },
       {random_tensor({2, 2, 5, 6, 4}, 4), random_tensor({2, 2, 3, 3, 3}, 5), random_tensor({2}, 6)}},
      {"conv3d_transpose", P, [](In in) { return project(conv3d_transpose(in[0], in[1], in[2], 2, 1, 1), 9); },
       {random_tensor({2, 2, 3, 2, 3}, 41), random_tensor({2, 3, 3, 3, 3}, 42), random_tensor({3}, 43)}},
      {"maxpool3d", P, [](In in) { return project(maxpool3d(in[0]), 10); }, {random_tensor({2, 3, 4, 6, 2}, 51)}},
      {"batchnorm train", P, bn(Mode::kTrain),
       {random_tensor({4, 3, 2, 2, 2}, 71), random_tensor({3}, 72, 0.5, 1.5), random_tensor({3}, 73)}},
      {"batchnorm eval", P, bn(Mode::kEval),
       {random_tensor({4, 3, 2, 2, 2}, 71), random_tensor({3}, 72, 0.5, 1.5), random_tensor({3}, 73)}},
      {"dropout", P, [](In in) { return project(dropout(in[0], 0.3, Mode::kTrain, 5), 13); },
       {random_tensor({3, 7}, 82)}},
      {"dense", P, [](In in) { return project(dense(in[0], in[1], in[2]), 1); },
       {random_tensor({3, 4}, 1), random_tensor({4, 2}, 2), random_tensor({2}, 3)}},
      {"relu", P, [](In in) { return project(relu(in[0]), 2); }, {random_tensor({3, 5}, 4)}},
      {"sigmoid", P, [](In in) { return project(sigmoid(in[0]), 3); }, {random_tensor({3, 5}, 5, -4, 4)}},
      {"square", P, [](In in) { return project(square(in[0]), 4); }, {random_tensor({6}, 6)}},
      {"scale", P, [](In in) { return project(scale(in[0], -2.5), 5); }, {random_tensor({6}, 7)}},
      {"global_avg_pool", P, [](In in) { return project(global_avg_pool(in[0]), 6); },
       {random_tensor({2, 3, 2, 3, 2}, 8)}},
      {"channel_max", P, [](In in) { return project(channel_max(in[0]), 7); }, {random_tensor({2, 4, 2, 3, 2}, 9)}},
      {"maximum", P, [](In in) { return project(maximum(in[0], in[1]), 8); },
       {random_tensor({2, 3, 4}, 10), random_tensor({2, 3, 4}, 11)}},
      {"concat", P, [](In in) { return project(concat<double>({in[0], in[1]}), 9); },
       {random_tensor({2, 1, 3, 2, 2}, 12), random_tensor({2, 3, 3, 2, 2}, 13)}},
      {"slice_channels", P, [](In in) { return project(slice_channels(in[0], 1, 3), 10); },
       {random_tensor({2, 4, 3}, 14)}},
      {"flatten", P, [](In in) { return project(flatten(in[0]), 11); }, {random_tensor({2, 3, 2, 2, 1}, 15)}},
      {"reshape", P, [](In in) { return project(reshape(in[0], {3, 4}), 16); }, {random_tensor({2, 6}, 27)}},
      {"add broadcast", P, [](In in) { return project(add(in[0], in[1]), 12); },
       {random_tensor({2, 3, 2, 2, 2}, 16), random_tensor({2, 3, 1, 1, 1}, 17)}},
      {"sub broadcast", P, [](In in) { return project(sub(in[0], in[1]), 13); },
       {random_tensor({2, 1, 2, 2, 2}, 18), random_tensor({2, 3, 2, 2, 2}, 19)}},
      {"mul broadcast", P, [](In in) { return project(mul(in[0], in[1]), 14); },
       {random_tensor({2, 3, 2, 2, 2}, 20), random_tensor({2, 1, 2, 2, 2}, 21)}},
      {"sum", P, [](In in) { return sum(mul(in[0], in[0])); }, {random_tensor({5}, 22)}},
      {"mean", P, [](In in) { return mean(mul(in[0], in[1])); }, {random_tensor({5}, 23), random_tensor({5}, 24)}},
      {"weighted_sum", P, [](In in) { return weighted_sum(square(in[0]), random_tensor({4}, 25)); },
       {random_tensor({4}, 26)}},
      {"conv-relu-pool-dense", C,
       [](In in) {
         auto h = maxpool3d(relu(conv3d(in[0], in[1], in[2], 1, 1, 1)));
         return project(dense(flatten(h), in[3], in[4]), 15);
       },
       {random_tensor({2, 2, 4, 4, 4}, 101), random_tensor({3, 2, 3, 3, 3}, 102), random_tensor({3}, 103),
        random_tensor({24, 2}, 104), random_tensor({2}, 105)}},
      {"gated skip merge", C,
       [](In in) {
         auto up = conv3d_transpose(in[0], in[1], Var<double>{}, 2, 1, 1);
         auto gate = reshape(sigmoid(global_avg_pool(in[2])), {2, 2, 1, 1, 1});
         return project(concat<double>({mul(up, gate), in[2]}), 17);
       },
       {random_tensor({2, 2, 2, 2, 2}, 111), random_tensor({2, 2, 3, 3, 3}, 112), random_tensor({2, 2, 4, 4, 4}, 113)}},
  };
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

std::vector<SuiteRow> run_gradient_suite(bool include_model) {
  std::vector<SuiteRow> rows;
  for (const auto& c : cases()) {
    const auto start = std::chrono::steady_clock::now();
    SuiteRow row{c.name, c.kind,
                 c.kind == CheckKind::kPrimitive ? kPrimitiveTolerance : kCompositionTolerance,
                 gradcheck(c.fn, c.inputs), 0.0};
    row.seconds = elapsed(start);
    rows.push_back(std::move(row));
  }
  if (include_model) {
    unet::UNetConfig config;
    config.dims = {16, 8, 8};
    config.depth = 2;
    config.base_width = 2;
    config.head_width = 8;
    config.predict_fields = true;
    config.seed = 3;
    GradCheckOptions options;
    options.retry_epsilons = {1e-6, 1e-4};
    const auto start = std::chrono::steady_clock::now();
    SuiteRow row{"u-net 16x8x8 depth 2", CheckKind::kComposition, kCompositionTolerance,
                 unet::check_model_gradients(config, 3, 77, options), 0.0};
    row.seconds = elapsed(start);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string suite_table(const std::vector<SuiteRow>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-12s %12s %10s %8s  %s\n", "check", "kind", "max_rel_err", "tolerance",
                "entries", "result");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %-12s %12.3e %10.0e %8zu  %s\n", r.name.c_str(),
                  r.kind == CheckKind::kPrimitive ? "primitive" : "composition", r.result.max_rel_error, r.tolerance,
                  r.result.entries, r.passed() ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace aerosdf::ad
