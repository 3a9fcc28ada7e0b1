#include "masra/lrca.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace masra {

namespace {
void require_two_rows(Eigen::Index rows, const char* what) {
  if (rows < 2) {
    throw DimensionError(std::string(what) + ": need at least 2 rows, got " +
                         std::to_string(rows));
  }
}
}  // namespace

Var similarity_matrix(Var features) {
  require_two_rows(features.rows(), "similarity_matrix");
  Var n = ops::normalize_rows(features);
  return ops::matmul_nt(n, n);
}

SimilarityMatrix similarity_matrix(const Tensor2D& features) {
  require_two_rows(features.rows(), "similarity_matrix");
  Eigen::VectorXd norms = features.rowwise().norm().cwiseMax(1e-8);
  Matrix n = (features.array().colwise() / norms.array()).matrix();
  Matrix s = n * n.transpose();
  return ((s + s.transpose()) * 0.5).cwiseMax(-1.0).cwiseMin(1.0);
}

SimilarityMatrix textual_relation_matrix(const Tensor2D& captions) {
  return similarity_matrix(captions);
}

Var relation_loss(Var similarity, const SimilarityMatrix& relation) {
  if (similarity.rows() != relation.rows() || similarity.cols() != relation.cols()) {
    throw DimensionError("relation_loss: size mismatch " +
                         shape_pair(similarity.value(), relation));
  }
  Graph& g = similarity.graph();
  return ops::mean(ops::square(ops::sub(similarity, g.constant(relation))));
}

double relation_loss(const SimilarityMatrix& s, const SimilarityMatrix& r) {
  if (s.rows() != r.rows() || s.cols() != r.cols()) {
    throw DimensionError("relation_loss: size mismatch " + shape_pair(s, r));
  }
  return (s - r).array().square().mean();
}

SecondOrderRelationalAttention::SecondOrderRelationalAttention(ParamStore& store,
                                                               const std::string& name,
                                                               int model_dim,
                                                               int hidden_channels)
    : name_(name), hidden_(hidden_channels) {
  store.add(name_ + ".conv1.weight", hidden_, 9, Init::Normal, 1.0 / 3.0);
  store.add(name_ + ".conv1.bias", hidden_, 1, Init::Zeros);
  store.add(name_ + ".conv2.weight", 1, hidden_ * 9, Init::Zeros);
  store.add(name_ + ".conv2.bias", 1, 1, Init::Zeros);
  mlp_ = Mlp(store, name_ + ".mlp", {model_dim, model_dim, model_dim});
}

Var SecondOrderRelationalAttention::refine(Graph& g, Var similarity) const {
  Var h = ops::conv3x3(similarity, g.param(name_ + ".conv1.weight"),
                       g.param(name_ + ".conv1.bias"), 1);
  h = ops::relu(h);
  Var phi = ops::conv3x3(h, g.param(name_ + ".conv2.weight"), g.param(name_ + ".conv2.bias"),
                         hidden_);
  return ops::add(similarity, phi);
}

SecondOrderRelationalAttention::Output SecondOrderRelationalAttention::operator()(
    Graph& g, Var similarity, Var features, bool refine_map) const {
  if (similarity.rows() != similarity.cols() || similarity.rows() != features.rows()) {
    throw DimensionError("sora_refine: similarity/features mismatch " +
                         shape_pair(similarity.value(), features.value()));
  }
  Var refined = refine_map ? refine(g, similarity) : similarity;
  Var weights = ops::softmax_rows(refined);
  return {refined, ops::matmul(weights, mlp_(g, features))};
}

SecondOrderRelationalAttention::Output sora_refine(Graph& g, Var similarity, Var features,
                                                   const SecondOrderRelationalAttention& sora) {
  return sora(g, similarity, features, true);
}

void write_csv_grid(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << m(r, c);
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Matrix read_csv_grid(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("ragged CSV grid: " + path.string());
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

}  // namespace masra
