#include "pcgn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcgn/random.hpp"

namespace pcgn {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ParameterStore& store, const ScalarFunction& f) {
  Tape tape;
  Var out = f(tape, store);
  return out.value().item();
}

template <class Eval>
double numeric_derivative(Tensor& theta, std::size_t i, double h, Stencil stencil, Eval eval) {
  const double saved = theta[i];
  auto at = [&](double offset) {
    theta[i] = saved + offset;
    return eval();
  };
  if (stencil == Stencil::TwoPoint) {
    const double plus = at(h);
    const double minus = at(-h);
    theta[i] = saved;
    return (plus - minus) / (2.0 * h);
  }
  const double p2 = at(2.0 * h);
  const double p1 = at(h);
  const double m1 = at(-h);
  const double m2 = at(-2.0 * h);
  theta[i] = saved;
  return (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
}

}  // namespace

GradCheckReport check_gradients(ParameterStore& store, const ScalarFunction& f, double eps,
                                const std::vector<ParamId>& params, std::size_t max_coords_per_param,
                                std::uint64_t seed, Stencil stencil) {
  if (!(eps > 0.0)) throw DomainError("gradient check: eps must be positive");
  std::vector<ParamId> ids = params;
  if (ids.empty()) {
    ids.resize(store.size());
    std::iota(ids.begin(), ids.end(), ParamId{0});
  }

  GradientSet analytic;
  {
    Tape tape;
    Var out = f(tape, store);
    analytic = backprop(tape, out);
  }

  Rng rng(seed);
  GradCheckReport report;
  for (ParamId id : ids) {
    Tensor& theta = store.value(id);
    std::vector<std::size_t> coords(theta.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(max_coords_per_param);
    }
    const Tensor* grad = analytic.find(id);
    for (std::size_t i : coords) {
      const double numeric = numeric_derivative(theta, i, eps, stencil, [&] { return evaluate(store, f); });
      const double a = grad ? (*grad)[i] : 0.0;
      const double err = relative_error(a, numeric);
      ++report.coordinates_checked;
      if (err > report.max_relative_error || report.coordinates_checked == 1) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_parameter = store.name(id);
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& theta, double eps,
                              Stencil stencil) {
  ParameterStore store;
  const ParamId id = store.add("theta", theta);
  ScalarFunction wrapped = [&](Tape& tape, const ParameterStore& s) { return f(tape, tape.param(s, id)); };
  return check_gradients(store, wrapped, eps, {}, 0, 0, stencil).max_relative_error;
}

}  // namespace pcgn
