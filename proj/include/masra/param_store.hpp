#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace masra {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::RowVectorXd;

enum class Init { Zeros, Ones, Normal };

struct Parameter {
  Matrix value;
  bool trainable = true;
};

/// Named parameter tensors. Initialization draws from one generator in
/// registration order, so a fixed seed plus a fixed model layout gives
/// identical weights.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  /// Registers a new parameter. Throws if `name` already exists.
  const Parameter& add(const std::string& name, Eigen::Index rows,
                       Eigen::Index cols, Init init, double scale = 1.0,
                       bool trainable = true);

  bool contains(const std::string& name) const;
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  Matrix& value(const std::string& name) { return at(name).value; }
  const Matrix& value(const std::string& name) const { return at(name).value; }

  const std::map<std::string, Parameter>& entries() const { return params_; }
  std::map<std::string, Parameter>& entries() { return params_; }
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::map<std::string, Parameter> params_;
};

}  // namespace masra
