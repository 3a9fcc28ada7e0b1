#include "masra/param_store.hpp"

#include <stdexcept>

namespace masra {

const Parameter& ParamStore::add(const std::string& name, Eigen::Index rows,
                                 Eigen::Index cols, Init init, double scale,
                                 bool trainable) {
  if (params_.count(name)) {
    throw std::invalid_argument("parameter registered twice: " + name);
  }
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("parameter " + name + " must be non-empty");
  }
  Parameter p;
  p.trainable = trainable;
  switch (init) {
    case Init::Zeros:
      p.value = Matrix::Zero(rows, cols);
      break;
    case Init::Ones:
      p.value = Matrix::Constant(rows, cols, scale);
      break;
    case Init::Normal: {
      std::normal_distribution<double> dist(0.0, scale);
      p.value.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) p.value(r, c) = dist(rng_);
      break;
    }
  }
  return params_.emplace(name, std::move(p)).first->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

}  // namespace masra
