#pragma once

#include <functional>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "masra/autodiff.hpp"

namespace masra {

struct ParamGradCheck {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool finite = true;
  bool pass = true;
};

struct GradReport {
  std::map<std::string, ParamGradCheck> params;
  double max_rel_err = 0.0;
  bool pass = true;

  /// {name: {max_rel_err, pass}, ..., "pass": bool}
  nlohmann::json to_json() const;
};

/// Builds a scalar loss on a graph bound to some parameter store.
using LossBuilder = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of `loss` against central differences
/// (f(p+eps) - f(p-eps)) / 2eps for every entry of every trainable
/// parameter. Relative error is |analytic - numeric| / max(|analytic|,
/// |numeric|, kRelErrFloor).
GradReport finite_diff_grad_check(const LossBuilder& loss, const ParamStore& params,
                                  double eps = 1e-5, double tol = 1e-4);

/// Variant for losses containing stop-gradients: analytic gradients come from
/// `loss`, central differences from `surrogate`, which must equal `loss` at
/// the unperturbed point and hold every stopped operand fixed at its
/// unperturbed value.
GradReport finite_diff_grad_check(const LossBuilder& loss, const LossBuilder& surrogate,
                                  const ParamStore& params, double eps = 1e-5,
                                  double tol = 1e-4);

inline constexpr double kRelErrFloor = 1e-5;

}  // namespace masra
