#include "aerosdf/autodiff/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace aerosdf::ad {

GradCheckResult compare_gradients(const std::vector<Tensor<double>*>& params, const std::vector<std::string>& names,
                                  const std::vector<Tensor<double>>& analytic, const std::function<double()>& loss,
                                  const GradCheckOptions& options) {
  if (params.size() != analytic.size() || params.size() != names.size()) {
    throw Error("compare_gradients: parameter, name and gradient lists differ in length");
  }
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& param = *params[p];
    if (analytic[p].shape() != param.shape()) {
      throw ShapeError("compare_gradients: gradient of " + names[p] + " has the wrong shape");
    }
    const std::size_t count = param.size();
    std::size_t step = 1;
    if (options.max_entries > 0 && count > options.max_entries) step = count / options.max_entries;
    for (std::size_t i = 0; i < count; i += step) {
      const double a = analytic[p][i];
      auto estimate = [&](double eps) {
        const double saved = param[i];
        param[i] = saved + eps;
        const double up = loss();
        param[i] = saved - eps;
        const double down = loss();
        param[i] = saved;
        return (up - down) / (2.0 * eps);
      };
      auto error_of = [&](double numeric) { return std::abs(a - numeric) / (std::abs(a) + 1e-8); };
      double numeric = estimate(options.epsilon);
      double err = error_of(numeric);
      if (err > options.retry_above && !options.retry_epsilons.empty()) {
        ++result.retried;
        for (double eps : options.retry_epsilons) {
          const double n = estimate(eps);
          if (error_of(n) < err) {
            numeric = n;
            err = error_of(n);
          }
        }
      }
      ++result.entries;
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result.max_rel_error = std::isfinite(err) ? err : INFINITY;
        std::ostringstream os;
        os.precision(10);
        os << names[p] << "[" << i << "]: analytic=" << a << " numeric=" << numeric;
        result.worst = os.str();
      }
    }
  }
  return result;
}

GradCheckResult gradcheck(const GraphFn& fn, std::vector<Tensor<double>> inputs, const GradCheckOptions& options) {
  std::vector<Tensor<double>> grads;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    auto loss = fn(vars);
    tape.backward(loss);
    for (const auto& v : vars) grads.push_back(tape.grad(v));
  }
  std::vector<Tensor<double>*> params;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params.push_back(&inputs[i]);
    names.push_back("input" + std::to_string(i));
  }
  auto eval = [&]() {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    return fn(vars).value()[0];
  };
  return compare_gradients(params, names, grads, eval, options);
}

}  // namespace aerosdf::ad
