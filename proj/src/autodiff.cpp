#include "masra/autodiff.hpp"

#include <cmath>

namespace masra {

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("expected a scalar node, got " +
                         shape_str(v.rows(), v.cols()));
  }
  return v(0, 0);
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var Graph::param(const std::string& name) {
  if (params_ == nullptr) {
    throw std::logic_error("graph has no parameter store; cannot bind " + name);
  }
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  auto entry = params_->entries().find(name);
  if (entry == params_->entries().end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  Node n;
  n.value = entry->second.value;
  n.requires_grad = entry->second.trainable;
  n.param_name = &entry->first;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(name, id);
  return Var(this, id);
}

Var Graph::emit(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  return emit(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Graph::emit(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.graph() != this) throw std::logic_error("mixing vars of different graphs");
    if (nodes_[p.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

void Graph::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw DimensionError("backward root must be 1x1, got " +
                         shape_str(root.rows(), root.cols()));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

std::map<std::string, Matrix> Graph::param_grads() const {
  std::map<std::string, Matrix> out;
  for (const auto& n : nodes_) {
    if (n.param_name == nullptr || !n.requires_grad) continue;
    Matrix g = n.grad.size() ? n.grad : Matrix::Zero(n.value.rows(), n.value.cols());
    auto [it, inserted] = out.emplace(*n.param_name, g);
    if (!inserted) it->second += g;
  }
  return out;
}

namespace ops {
namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_pair(a.value(), b.value()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " +
                         shape_pair(a.value(), b.value()));
  }
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value() * b.value(), {a, b}, [ia, ib](Graph& g, int s) {
    const Matrix& d = g.grad(s);
    if (g.requires_grad(ia)) g.accumulate_expr(ia, d * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate_expr(ib, g.value(ia).transpose() * d);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ " +
                         shape_pair(a.value(), b.value()));
  }
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value() * b.value().transpose(), {a, b},
                        [ia, ib](Graph& g, int s) {
                          const Matrix& d = g.grad(s);
                          if (g.requires_grad(ia)) g.accumulate_expr(ia, d * g.value(ib));
                          if (g.requires_grad(ib))
                            g.accumulate_expr(ib, d.transpose() * g.value(ia));
                        });
}

Var transpose(Var a) {
  int ia = a.id();
  return a.graph().emit(a.value().transpose(), {a}, [ia](Graph& g, int s) {
    g.accumulate_expr(ia, g.grad(s).transpose());
  });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, int s) {
    g.accumulate(ia, g.grad(s));
    g.accumulate(ib, g.grad(s));
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value() - b.value(), {a, b}, [ia, ib](Graph& g, int s) {
    g.accumulate(ia, g.grad(s));
    g.accumulate_expr(ib, -g.grad(s));
  });
}

Var hadamard(Var a, Var b) {
  require_same(a, b, "hadamard");
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value().cwiseProduct(b.value()), {a, b},
                        [ia, ib](Graph& g, int s) {
                          const Matrix& d = g.grad(s);
                          g.accumulate_expr(ia, d.cwiseProduct(g.value(ib)));
                          g.accumulate_expr(ib, d.cwiseProduct(g.value(ia)));
                        });
}

Var divide(Var a, Var b) {
  require_same(a, b, "divide");
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value().cwiseQuotient(b.value()), {a, b},
                        [ia, ib](Graph& g, int s) {
                          const Matrix& d = g.grad(s);
                          const Matrix& bv = g.value(ib);
                          g.accumulate_expr(ia, d.cwiseQuotient(bv));
                          g.accumulate_expr(
                              ib, -(d.cwiseProduct(g.value(s))).cwiseQuotient(bv));
                        });
}

Var scale(Var a, double k) {
  int ia = a.id();
  return a.graph().emit(a.value() * k, {a}, [ia, k](Graph& g, int s) {
    g.accumulate_expr(ia, g.grad(s) * k);
  });
}

Var add_scalar(Var a, double k) {
  int ia = a.id();
  return a.graph().emit(a.value().array() + k, {a}, [ia](Graph& g, int s) {
    g.accumulate(ia, g.grad(s));
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: row shape mismatch " +
                         shape_pair(a.value(), row.value()));
  }
  int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.graph().emit(std::move(out), {a, row}, [ia, ir](Graph& g, int s) {
    g.accumulate(ia, g.grad(s));
    if (g.requires_grad(ir)) g.accumulate_expr(ir, g.grad(s).colwise().sum());
  });
}

Var add_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw DimensionError("add_col: column shape mismatch " +
                         shape_pair(a.value(), col.value()));
  }
  int ia = a.id(), ic = col.id();
  Matrix out = a.value().colwise() + col.value().col(0);
  return a.graph().emit(std::move(out), {a, col}, [ia, ic](Graph& g, int s) {
    g.accumulate(ia, g.grad(s));
    if (g.requires_grad(ic)) g.accumulate_expr(ic, g.grad(s).rowwise().sum());
  });
}

Var relu(Var a) {
  int ia = a.id();
  return a.graph().emit(a.value().cwiseMax(0.0), {a}, [ia](Graph& g, int s) {
    g.accumulate_expr(
        ia, (g.value(ia).array() > 0.0).cast<double>().matrix().cwiseProduct(g.grad(s)));
  });
}

Var sigmoid(Var a) {
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  int ia = a.id();
  return a.graph().emit(std::move(y), {a}, [ia](Graph& g, int s) {
    const auto y = g.value(s).array();
    g.accumulate_expr(ia, (g.grad(s).array() * y * (1.0 - y)).matrix());
  });
}

Var log(Var a, double floor) {
  int ia = a.id();
  Matrix y = a.value().cwiseMax(floor).array().log().matrix();
  return a.graph().emit(std::move(y), {a}, [ia, floor](Graph& g, int s) {
    const auto x = g.value(ia).array();
    g.accumulate_expr(ia, (g.grad(s).array() * (x > floor).cast<double>() /
                           x.max(floor))
                              .matrix());
  });
}

Var abs(Var a) {
  int ia = a.id();
  return a.graph().emit(a.value().cwiseAbs(), {a}, [ia](Graph& g, int s) {
    g.accumulate_expr(ia, (g.grad(s).array() * g.value(ia).array().sign()).matrix());
  });
}

Var square(Var a) {
  int ia = a.id();
  return a.graph().emit(a.value().array().square().matrix(), {a},
                        [ia](Graph& g, int s) {
                          g.accumulate_expr(
                              ia, (2.0 * g.grad(s).array() * g.value(ia).array()).matrix());
                        });
}

Var minimum(Var a, Var b) {
  require_same(a, b, "minimum");
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value().cwiseMin(b.value()), {a, b},
                        [ia, ib](Graph& g, int s) {
                          auto pick_a = (g.value(ia).array() <= g.value(ib).array())
                                            .cast<double>();
                          g.accumulate_expr(ia, (g.grad(s).array() * pick_a).matrix());
                          g.accumulate_expr(ib,
                                            (g.grad(s).array() * (1.0 - pick_a)).matrix());
                        });
}

Var maximum(Var a, Var b) {
  require_same(a, b, "maximum");
  int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value().cwiseMax(b.value()), {a, b},
                        [ia, ib](Graph& g, int s) {
                          auto pick_a = (g.value(ia).array() >= g.value(ib).array())
                                            .cast<double>();
                          g.accumulate_expr(ia, (g.grad(s).array() * pick_a).matrix());
                          g.accumulate_expr(ib,
                                            (g.grad(s).array() * (1.0 - pick_a)).matrix());
                        });
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  int ia = a.id();
  return a.graph().emit(std::move(y), {a}, [ia](Graph& g, int s) {
    const Matrix& y = g.value(s);
    const Matrix& d = g.grad(s);
    Eigen::VectorXd dot = d.cwiseProduct(y).rowwise().sum();
    g.accumulate_expr(ia, y.cwiseProduct(d.colwise() - dot));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Eigen::Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw DimensionError("layer_norm: affine shape mismatch " +
                         shape_pair(x.value(), gamma.value()));
  }
  const Matrix& v = x.value();
  Matrix xhat(v.rows(), n);
  Eigen::VectorXd inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.graph().emit(
      std::move(y), {x, gamma, beta},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g,
                                                                         int s) {
        const Matrix& d = g.grad(s);
        if (g.requires_grad(ig)) g.accumulate_expr(ig, d.cwiseProduct(xhat).colwise().sum());
        if (g.requires_grad(ib)) g.accumulate_expr(ib, d.colwise().sum());
        if (g.requires_grad(ix)) {
          Matrix dxhat = (d.array().rowwise() * g.value(ig).row(0).array()).matrix();
          Eigen::VectorXd mean_d = dxhat.rowwise().mean();
          Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = dxhat;
          dx.colwise() -= mean_d;
          dx -= (xhat.array().colwise() * mean_dx.array()).matrix();
          dx = (dx.array().colwise() * inv_std.array()).matrix();
          g.accumulate(ix, dx);
        }
      });
}

Var normalize_rows(Var a, double eps) {
  const Matrix& x = a.value();
  Eigen::VectorXd denom = x.rowwise().norm().cwiseMax(eps);
  Matrix y = (x.array().colwise() / denom.array()).matrix();
  int ia = a.id();
  return a.graph().emit(std::move(y), {a}, [ia, eps, denom](Graph& g, int s) {
    const Matrix& y = g.value(s);
    const Matrix& d = g.grad(s);
    Matrix dx(d.rows(), d.cols());
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      if (denom(r) > eps) {
        dx.row(r) = (d.row(r) - y.row(r) * y.row(r).dot(d.row(r))) / denom(r);
      } else {
        dx.row(r) = d.row(r) / eps;
      }
    }
    g.accumulate(ia, dx);
  });
}

Var mean_rows(Var a) {
  if (a.rows() < 1) throw ValueError("mean_rows: empty input");
  int ia = a.id();
  const double n = static_cast<double>(a.rows());
  return a.graph().emit(a.value().colwise().mean(), {a}, [ia, n](Graph& g, int s) {
    const Eigen::Index rows = g.value(ia).rows();
    g.accumulate_expr(ia, (g.grad(s) / n).replicate(rows, 1));
  });
}

Var sum(Var a) {
  int ia = a.id();
  return a.graph().emit(Matrix::Constant(1, 1, a.value().sum()), {a},
                        [ia](Graph& g, int s) {
                          const Matrix& x = g.value(ia);
                          g.accumulate_expr(ia, Matrix::Constant(x.rows(), x.cols(),
                                                                 g.grad(s)(0, 0)));
                        });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                         std::to_string(start + n) + ") outside " +
                         shape_str(a.rows(), a.cols()));
  }
  int ia = a.id();
  return a.graph().emit(a.value().middleRows(start, n), {a},
                        [ia, start, n](Graph& g, int s) {
                          const Matrix& x = g.value(ia);
                          Matrix full = Matrix::Zero(x.rows(), x.cols());
                          full.middleRows(start, n) = g.grad(s);
                          g.accumulate(ia, full);
                        });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + n) + ") outside " +
                         shape_str(a.rows(), a.cols()));
  }
  int ia = a.id();
  return a.graph().emit(a.value().middleCols(start, n), {a},
                        [ia, start, n](Graph& g, int s) {
                          const Matrix& x = g.value(ia);
                          Matrix full = Matrix::Zero(x.rows(), x.cols());
                          full.middleCols(start, n) = g.grad(s);
                          g.accumulate(ia, full);
                        });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(rows[i]) +
                           " outside " + shape_str(a.rows(), a.cols()));
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  int ia = a.id();
  return a.graph().emit(std::move(out), {a}, [ia, rows](Graph& g, int s) {
    const Matrix& x = g.value(ia);
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    const Matrix& d = g.grad(s);
    for (std::size_t i = 0; i < rows.size(); ++i)
      full.row(rows[i]) += d.row(static_cast<Eigen::Index>(i));
    g.accumulate(ia, full);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_pair(parts.front().value(), p.value()));
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.rows();
  }
  return parts.front().graph().emit(std::move(out), parts, [spans](Graph& g, int s) {
    const Matrix& d = g.grad(s);
    for (const auto& [id, start] : spans) {
      if (g.requires_grad(id)) g.accumulate_expr(id, d.middleRows(start, g.value(id).rows()));
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " +
                           shape_pair(parts.front().value(), p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts.front().graph().emit(std::move(out), parts, [spans](Graph& g, int s) {
    const Matrix& d = g.grad(s);
    for (const auto& [id, start] : spans) {
      if (g.requires_grad(id)) g.accumulate_expr(id, d.middleCols(start, g.value(id).cols()));
    }
  });
}

Var element(Var a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) {
    throw DimensionError("element: index outside " + shape_str(a.rows(), a.cols()));
  }
  int ia = a.id();
  return a.graph().emit(Matrix::Constant(1, 1, a.value()(r, c)), {a},
                        [ia, r, c](Graph& g, int s) {
                          const Matrix& x = g.value(ia);
                          Matrix full = Matrix::Zero(x.rows(), x.cols());
                          full(r, c) = g.grad(s)(0, 0);
                          g.accumulate(ia, full);
                        });
}

Var stop_gradient(Var a) { return a.graph().constant(a.value()); }

Var conv3x3(Var input, Var weight, Var bias, int in_channels) {
  if (in_channels < 1 || input.rows() % in_channels != 0) {
    throw DimensionError("conv3x3: input rows not divisible by channel count " +
                         std::to_string(in_channels));
  }
  const Eigen::Index h = input.rows() / in_channels;
  const Eigen::Index w = input.cols();
  const Eigen::Index out_channels = weight.rows();
  if (weight.cols() != in_channels * 9 || bias.rows() != out_channels || bias.cols() != 1) {
    throw DimensionError("conv3x3: kernel shape mismatch " +
                         shape_pair(weight.value(), bias.value()));
  }
  const Matrix& x = input.value();
  const Matrix& k = weight.value();
  Matrix y(out_channels * h, w);
  for (Eigen::Index o = 0; o < out_channels; ++o) {
    auto plane = y.middleRows(o * h, h);
    plane.setConstant(bias.value()(o, 0));
    for (int c = 0; c < in_channels; ++c) {
      const auto src = x.middleRows(c * h, h);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double kv = k(o, c * 9 + (dy + 1) * 3 + (dx + 1));
          if (kv == 0.0) continue;
          // out(i, j) += kv * src(i + dy, j + dx) over the valid window
          const Eigen::Index i0 = std::max<Eigen::Index>(0, -dy);
          const Eigen::Index i1 = std::min<Eigen::Index>(h, h - dy);
          const Eigen::Index j0 = std::max<Eigen::Index>(0, -dx);
          const Eigen::Index j1 = std::min<Eigen::Index>(w, w - dx);
          if (i1 <= i0 || j1 <= j0) continue;
          plane.block(i0, j0, i1 - i0, j1 - j0) +=
              kv * src.block(i0 + dy, j0 + dx, i1 - i0, j1 - j0);
        }
      }
    }
  }
  int ix = input.id(), ik = weight.id(), ib = bias.id();
  return input.graph().emit(
      std::move(y), {input, weight, bias},
      [ix, ik, ib, in_channels, h, w, out_channels](Graph& g, int s) {
        const Matrix& d = g.grad(s);
        const Matrix& x = g.value(ix);
        const Matrix& k = g.value(ik);
        const bool need_x = g.requires_grad(ix);
        const bool need_k = g.requires_grad(ik);
        Matrix dx = need_x ? Matrix::Zero(x.rows(), x.cols()) : Matrix();
        Matrix dk = need_k ? Matrix::Zero(k.rows(), k.cols()) : Matrix();
        Matrix db(out_channels, 1);
        for (Eigen::Index o = 0; o < out_channels; ++o) {
          const auto dplane = d.middleRows(o * h, h);
          db(o, 0) = dplane.sum();
          for (int c = 0; c < in_channels; ++c) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dxo = -1; dxo <= 1; ++dxo) {
                const Eigen::Index i0 = std::max<Eigen::Index>(0, -dy);
                const Eigen::Index i1 = std::min<Eigen::Index>(h, h - dy);
                const Eigen::Index j0 = std::max<Eigen::Index>(0, -dxo);
                const Eigen::Index j1 = std::min<Eigen::Index>(w, w - dxo);
                if (i1 <= i0 || j1 <= j0) continue;
                const int tap = c * 9 + (dy + 1) * 3 + (dxo + 1);
                const auto dwin = dplane.block(i0, j0, i1 - i0, j1 - j0);
                if (need_k) {
                  dk(o, tap) += dwin.cwiseProduct(
                                        x.block(c * h + i0 + dy, j0 + dxo, i1 - i0, j1 - j0))
                                    .sum();
                }
                if (need_x) {
                  dx.block(c * h + i0 + dy, j0 + dxo, i1 - i0, j1 - j0) += k(o, tap) * dwin;
                }
              }
            }
          }
        }
        if (need_x) g.accumulate(ix, dx);
        if (need_k) g.accumulate(ik, dk);
        if (g.requires_grad(ib)) g.accumulate(ib, db);
      });
}

}  // namespace ops
}  // namespace masra
