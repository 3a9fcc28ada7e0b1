#pragma once

#include <filesystem>

#include "masra/nn.hpp"

namespace masra {

/// T x T clip-to-clip relation values.
using SimilarityMatrix = Matrix;

/// Pairwise cosine similarity of the rows of `features`, differentiable.
/// Zero rows get zero similarity to everything (including themselves).
Var similarity_matrix(Var features);
SimilarityMatrix similarity_matrix(const Tensor2D& features);

/// Caption relation matrix R. Supervision only; no gradient.
SimilarityMatrix textual_relation_matrix(const Tensor2D& captions);

/// Mean squared difference over all T^2 entries. Gradient reaches only
/// `similarity`; `relation` is treated as a constant target.
Var relation_loss(Var similarity, const SimilarityMatrix& relation);
double relation_loss(const SimilarityMatrix& s, const SimilarityMatrix& r);

/// Residual refinement of a similarity map plus row-softmax reweighting of
/// the temporal features:
///   refined  = S + conv3x3(relu(conv3x3(S)))   (1 -> hidden -> 1 channels)
///   features = softmax_rows(refined) * MLP(E)
/// The last convolution starts at zero, so `refined == S` at initialization.
class SecondOrderRelationalAttention {
 public:
  SecondOrderRelationalAttention() = default;
  SecondOrderRelationalAttention(ParamStore& store, const std::string& name, int model_dim,
                                 int hidden_channels = 8);

  struct Output {
    Var refined;   // S~ (T x T)
    Var features;  // F (T x C)
  };
  /// With `refine == false` the convolutional branch is skipped and S is
  /// used as-is.
  Output operator()(Graph& g, Var similarity, Var features, bool refine = true) const;

  Var refine(Graph& g, Var similarity) const;

 private:
  std::string name_;
  int hidden_ = 8;
  Mlp mlp_;
};

SecondOrderRelationalAttention::Output sora_refine(Graph& g, Var similarity, Var features,
                                                   const SecondOrderRelationalAttention& sora);

/// Writes a numeric grid, one row per line, comma separated.
void write_csv_grid(const std::filesystem::path& path, const Matrix& m);
Matrix read_csv_grid(const std::filesystem::path& path);

}  // namespace masra
