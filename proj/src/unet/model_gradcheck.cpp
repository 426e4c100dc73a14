#include <random>

#include "aerosdf/unet.hpp"

namespace aerosdf::unet {

ad::GradCheckResult check_model_gradients(const UNetConfig& config, std::size_t batch, std::uint64_t seed,
                                          const ad::GradCheckOptions& options) {
  UNetModel<double> model(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 1.5);
  Tensor<double> input({batch, 1, config.dims[0], config.dims[1], config.dims[2]});
  for (auto& v : input.values()) v = u(rng);
  Tensor<double> cd_weights({batch, 1});
  for (auto& v : cd_weights.values()) v = pos(rng);
  Tensor<double> field_weights({batch, 3, config.dims[0], config.dims[1], config.dims[2]});
  for (auto& v : field_weights.values()) v = pos(rng);

  const std::uint64_t dropout_seed = seed ^ 0x5eed;
  auto& store = model.parameters();
  std::vector<Tensor<double>*> targets;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < store.size(); ++i) {
    targets.push_back(&store.value(i));
    names.push_back(store.name(i));
  }

  // Each output is checked against its own projection so that the large field
  // sum does not drown small c_d gradients in round-off.
  ad::GradCheckResult worst;
  for (const bool fields : {false, true}) {
    if (fields && !config.predict_fields) break;
    auto build = [&](Tape<double>& tape) {
      auto out = model.forward(tape, input, Mode::kTrain, dropout_seed);
      auto loss = fields ? ad::weighted_sum(out.fields, field_weights) : ad::weighted_sum(out.cd, cd_weights);
      return std::pair{loss, out.params};
    };
    std::vector<Tensor<double>> grads;
    {
      Tape<double> tape;
      auto [loss, params] = build(tape);
      tape.backward(loss);
      for (const auto& p : params) {
        if (!p.valid()) throw Error("gradient check: parameter not used by the forward pass");
        grads.push_back(tape.grad(p));
      }
    }
    const auto r = ad::compare_gradients(targets, names, grads,
                                         [&] {
                                           Tape<double> tape;
                                           return build(tape).first.value()[0];
                                         },
                                         options);
    worst.entries += r.entries;
    worst.retried += r.retried;
    if (r.max_rel_error >= worst.max_rel_error) {
      worst.max_rel_error = r.max_rel_error;
      worst.worst = r.worst;
    }
  }
  return worst;
}

}  // namespace aerosdf::unet
