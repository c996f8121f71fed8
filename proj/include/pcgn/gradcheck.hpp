#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcgn/autodiff.hpp"

namespace pcgn {

/// Builds a scalar on the supplied tape, reading parameters from the store it is given.
using ScalarFunction = std::function<Var(Tape&, const ParameterStore&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Two-point: (f(x+h) - f(x-h)) / 2h. Five-point: (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h,
/// which tolerates a larger h and so resolves gradients near 1e-9 that the two-point rule
/// loses to rounding.
enum class Stencil { TwoPoint, FivePoint };

/// Relative error with the denominator floored at 1e-8.
double relative_error(double analytic, double numeric);

/// Central differences against backprop for the listed parameters (all when empty). When
/// `max_coords_per_param` is nonzero, at most that many coordinates per tensor are probed,
/// chosen with `seed`. The store is perturbed in place and restored exactly.
GradCheckReport check_gradients(ParameterStore& store, const ScalarFunction& f, double eps = 1e-5,
                                const std::vector<ParamId>& params = {}, std::size_t max_coords_per_param = 0,
                                std::uint64_t seed = 0, Stencil stencil = Stencil::TwoPoint);

/// Single-tensor form: f receives θ as a parameter leaf. Returns the max relative error.
double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& theta, double eps = 1e-5,
                              Stencil stencil = Stencil::TwoPoint);

}  // namespace pcgn
