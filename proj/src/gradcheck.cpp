#include "masra/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace masra {

nlohmann::json GradReport::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, check] : params) {
    out[name] = {{"max_rel_err", check.max_rel_err}, {"pass", check.pass}};
  }
  out["pass"] = pass;
  return out;
}

GradReport finite_diff_grad_check(const LossBuilder& loss, const ParamStore& params,
                                  double eps, double tol) {
  return finite_diff_grad_check(loss, loss, params, eps, tol);
}

GradReport finite_diff_grad_check(const LossBuilder& loss, const LossBuilder& surrogate,
                                  const ParamStore& params, double eps, double tol) {
  if (!(eps > 0.0)) throw ValueError("finite_diff_grad_check: eps must be > 0");

  std::map<std::string, Matrix> analytic;
  {
    Graph g(&params);
    Var l = loss(g);
    g.backward(l);
    analytic = g.param_grads();
  }

  ParamStore work = params;
  auto eval = [&]() {
    Graph g(&work);
    return surrogate(g).scalar();
  };

  GradReport report;
  for (const auto& [name, param] : params.entries()) {
    if (!param.trainable) continue;
    ParamGradCheck check;
    Matrix& value = work.value(name);
    const auto it = analytic.find(name);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + eps;
      const double up = eval();
      value.data()[i] = saved - eps;
      const double down = eval();
      value.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        check.finite = false;
        continue;
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = it == analytic.end() ? 0.0 : it->second.data()[i];
      const double abs_err = std::abs(exact - numeric);
      const double denom = std::max({std::abs(exact), std::abs(numeric), kRelErrFloor});
      check.max_abs_err = std::max(check.max_abs_err, abs_err);
      check.max_rel_err = std::max(check.max_rel_err, abs_err / denom);
    }
    check.pass = check.finite && check.max_rel_err <= tol;
    report.max_rel_err = std::max(report.max_rel_err, check.max_rel_err);
    report.pass = report.pass && check.pass;
    report.params.emplace(name, check);
  }
  return report;
}

}  // namespace masra
