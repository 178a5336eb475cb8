#include "herbgen/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace herbgen::compute {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

using EigenMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

ConstEigenMap as_matrix(const Tensor& t) {
  return ConstEigenMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                       static_cast<Eigen::Index>(t.cols()));
}

EigenMap as_matrix(Tensor& t) {
  return EigenMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

Graph::Id Graph::push(Tensor value, std::function<void(Graph&)> backward_fn,
                      const char* op_name) {
  if (!value.all_finite()) {
    throw std::runtime_error(std::string("non-finite values produced by ") +
                             op_name);
  }
  auto node = std::make_unique<Node>();
  node->owned = std::move(value);
  node->value = &node->owned;
  node->backward = std::move(backward_fn);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Graph::Id Graph::constant(Tensor value) {
  auto node = std::make_unique<Node>();
  node->owned = std::move(value);
  node->value = &node->owned;
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Graph::Id Graph::leaf(Tensor value) {
  return push(std::move(value), nullptr, "leaf");
}

Graph::Id Graph::param(const Tensor* value, Tensor* grad_sink) {
  auto node = std::make_unique<Node>();
  node->value = value;
  node->grad_sink = grad_sink;
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Graph::Id Graph::matmul(Id a, Id b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul shape mismatch: " + av.shape_string() +
                                " x " + bv.shape_string());
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  as_matrix(out) = as_matrix(av) * as_matrix(bv);
  const Id id = push(std::move(out), nullptr, "matmul");
  nodes_[id]->backward = [id, a, b](Graph& g) {
    const Tensor& dc = g.grad(id);
    as_matrix(g.grad_ref(a)) +=
        as_matrix(dc) * as_matrix(g.value(b)).transpose();
    as_matrix(g.grad_ref(b)) +=
        as_matrix(g.value(a)).transpose() * as_matrix(dc);
  };
  return id;
}

Graph::Id Graph::transpose(Id a) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) throw std::invalid_argument("transpose needs a matrix");
  Tensor out = Tensor::matrix(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out.at(c, r) = av.at(r, c);
  }
  const Id id = push(std::move(out), nullptr, "transpose");
  nodes_[id]->backward = [id, a](Graph& g) {
    const Tensor& dc = g.grad(id);
    Tensor& da = g.grad_ref(a);
    for (std::size_t r = 0; r < dc.rows(); ++r) {
      for (std::size_t c = 0; c < dc.cols(); ++c) da.at(c, r) += dc.at(r, c);
    }
  };
  return id;
}

Graph::Id Graph::add(Id a, Id b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) {
    throw std::invalid_argument("add shape mismatch: " + av.shape_string() +
                                " vs " + bv.shape_string());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const Id id = push(std::move(out), nullptr, "add");
  nodes_[id]->backward = [id, a, b](Graph& g) {
    const Tensor& dc = g.grad(id);
    Tensor& da = g.grad_ref(a);
    Tensor& db = g.grad_ref(b);
    for (std::size_t i = 0; i < dc.numel(); ++i) {
      da[i] += dc[i];
      db[i] += dc[i];
    }
  };
  return id;
}

Graph::Id Graph::add_row_broadcast(Id m, Id row) {
  const Tensor& mv = value(m);
  const Tensor& rv = value(row);
  if (mv.ndim() != 2 || rv.ndim() != 1 || rv.cols() != mv.cols()) {
    throw std::invalid_argument("add_row_broadcast shape mismatch: " +
                                mv.shape_string() + " + " + rv.shape_string());
  }
  Tensor out = mv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += rv[c];
  }
  const Id id = push(std::move(out), nullptr, "add_row_broadcast");
  nodes_[id]->backward = [id, m, row](Graph& g) {
    const Tensor& dc = g.grad(id);
    Tensor& dm = g.grad_ref(m);
    Tensor& dr = g.grad_ref(row);
    for (std::size_t r = 0; r < dc.rows(); ++r) {
      for (std::size_t c = 0; c < dc.cols(); ++c) {
        dm.at(r, c) += dc.at(r, c);
        dr[c] += dc.at(r, c);
      }
    }
  };
  return id;
}

Graph::Id Graph::scale(Id a, double factor) {
  Tensor out = value(a);
  for (double& v : out.data) v *= factor;
  const Id id = push(std::move(out), nullptr, "scale");
  nodes_[id]->backward = [id, a, factor](Graph& g) {
    const Tensor& dc = g.grad(id);
    Tensor& da = g.grad_ref(a);
    for (std::size_t i = 0; i < dc.numel(); ++i) da[i] += factor * dc[i];
  };
  return id;
}

Graph::Id Graph::gelu(Id x) {
  const Tensor& xv = value(x);
  Tensor out = xv;
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  const Id id = push(std::move(out), nullptr, "gelu");
  nodes_[id]->backward = [id, x](Graph& g) {
    const Tensor& dc = g.grad(id);
    const Tensor& xv2 = g.value(x);
    Tensor& dx = g.grad_ref(x);
    for (std::size_t i = 0; i < dc.numel(); ++i) {
      const double v = xv2[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      dx[i] += dc[i] * (cdf + v * pdf);
    }
  };
  return id;
}

Graph::Id Graph::layer_norm(Id x, Id gamma, Id beta, double eps) {
  const Tensor& xv = value(x);
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  if (xv.ndim() != 2 || gv.ndim() != 1 || bv.ndim() != 1 ||
      gv.cols() != xv.cols() || bv.cols() != xv.cols()) {
    throw std::invalid_argument("layer_norm shape mismatch");
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out = Tensor::matrix(rows, cols);
  Tensor xhat = Tensor::matrix(rows, cols);
  Tensor inv_std = Tensor::vector(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xv.at(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xv.at(r, c) - mean) * istd;
      xhat.at(r, c) = h;
      out.at(r, c) = gv[c] * h + bv[c];
    }
  }
  const Id id = push(std::move(out), nullptr, "layer_norm");
  nodes_[id]->backward = [id, x, gamma, beta, xhat = std::move(xhat),
                          inv_std = std::move(inv_std)](Graph& g) {
    const Tensor& dy = g.grad(id);
    const Tensor& gv2 = g.value(gamma);
    Tensor& dx = g.grad_ref(x);
    Tensor& dgamma = g.grad_ref(gamma);
    Tensor& dbeta = g.grad_ref(beta);
    const std::size_t rows = dy.rows(), cols = dy.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      double mean_dxhat = 0.0;
      double mean_dxhat_xhat = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double dyv = dy.at(r, c);
        dgamma[c] += dyv * xhat.at(r, c);
        dbeta[c] += dyv;
        const double dxhat = dyv * gv2[c];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat.at(r, c);
      }
      mean_dxhat /= static_cast<double>(cols);
      mean_dxhat_xhat /= static_cast<double>(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        const double dxhat = dy.at(r, c) * gv2[c];
        dx.at(r, c) += inv_std[r] * (dxhat - mean_dxhat -
                                     xhat.at(r, c) * mean_dxhat_xhat);
      }
    }
  };
  return id;
}

Graph::Id Graph::gather_rows(Id table, std::span<const int> indices) {
  const Tensor& tv = value(table);
  if (tv.ndim() != 2) throw std::invalid_argument("gather_rows needs a matrix");
  Tensor out = Tensor::matrix(indices.size(), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= tv.rows()) {
      throw std::out_of_range("gather_rows index " + std::to_string(idx) +
                              " outside table of " + std::to_string(tv.rows()) +
                              " rows");
    }
    for (std::size_t c = 0; c < tv.cols(); ++c) {
      out.at(i, c) = tv.at(static_cast<std::size_t>(idx), c);
    }
  }
  const Id id = push(std::move(out), nullptr, "gather_rows");
  nodes_[id]->backward = [id, table,
                          idx = std::vector<int>(indices.begin(),
                                                 indices.end())](Graph& g) {
    const Tensor& dc = g.grad(id);
    Tensor& dt = g.grad_ref(table);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < dc.cols(); ++c) {
        dt.at(static_cast<std::size_t>(idx[i]), c) += dc.at(i, c);
      }
    }
  };
  return id;
}

Graph::Id Graph::slice_cols(Id x, std::size_t start, std::size_t count) {
  const Tensor& xv = value(x);
  if (xv.ndim() != 2 || start + count > xv.cols()) {
    throw std::invalid_argument("slice_cols out of range");
  }
  Tensor out = Tensor::matrix(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = xv.at(r, start + c);
  }
  const Id id = push(std::move(out), nullptr, "slice_cols");
  nodes_[id]->backward = [id, x, start](Graph& g) {
    const Tensor& dc = g.grad(id);
    Tensor& dx = g.grad_ref(x);
    for (std::size_t r = 0; r < dc.rows(); ++r) {
      for (std::size_t c = 0; c < dc.cols(); ++c) {
        dx.at(r, start + c) += dc.at(r, c);
      }
    }
  };
  return id;
}

Graph::Id Graph::concat_cols(std::span<const Id> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t total_cols = 0;
  for (const Id p : parts) {
    const Tensor& pv = value(p);
    if (pv.ndim() != 2 || pv.rows() != rows) {
      throw std::invalid_argument("concat_cols row mismatch");
    }
    total_cols += pv.cols();
  }
  Tensor out = Tensor::matrix(rows, total_cols);
  std::size_t offset = 0;
  for (const Id p : parts) {
    const Tensor& pv = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < pv.cols(); ++c) {
        out.at(r, offset + c) = pv.at(r, c);
      }
    }
    offset += pv.cols();
  }
  const Id id = push(std::move(out), nullptr, "concat_cols");
  nodes_[id]->backward = [id, ps = std::vector<Id>(parts.begin(),
                                                   parts.end())](Graph& g) {
    const Tensor& dc = g.grad(id);
    std::size_t offset = 0;
    for (const Id p : ps) {
      Tensor& dp = g.grad_ref(p);
      for (std::size_t r = 0; r < dp.rows(); ++r) {
        for (std::size_t c = 0; c < dp.cols(); ++c) {
          dp.at(r, c) += dc.at(r, offset + c);
        }
      }
      offset += dp.cols();
    }
  };
  return id;
}

Graph::Id Graph::dropout(Id x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
  const Tensor& xv = value(x);
  if (rate == 0.0) return x;
  Tensor keep = Tensor::zeros_like(xv);
  const double scale = 1.0 / (1.0 - rate);
  Tensor out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (rng.next_bernoulli(rate)) {
      out[i] = 0.0;
    } else {
      keep[i] = scale;
      out[i] *= scale;
    }
  }
  const Id id = push(std::move(out), nullptr, "dropout");
  nodes_[id]->backward = [id, x, keep = std::move(keep)](Graph& g) {
    const Tensor& dc = g.grad(id);
    Tensor& dx = g.grad_ref(x);
    for (std::size_t i = 0; i < dc.numel(); ++i) dx[i] += dc[i] * keep[i];
  };
  return id;
}

Graph::Id Graph::masked_softmax(Id scores, const Tensor& mask) {
  const Tensor& sv = value(scores);
  if (sv.ndim() != 2 || !sv.same_shape(mask)) {
    throw std::invalid_argument("masked_softmax shape mismatch: scores " +
                                sv.shape_string() + " vs mask " +
                                mask.shape_string());
  }
  const std::size_t rows = sv.rows(), cols = sv.cols();
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double max_allowed = kNegInf;
    for (std::size_t c = 0; c < cols; ++c) {
      const double m = mask.at(r, c);
      if (m != 0.0 && m != kNegInf) {
        throw std::invalid_argument(
            "mask entries must be exactly 0 or -inf, found " +
            std::to_string(m));
      }
      if (m == 0.0) max_allowed = std::max(max_allowed, sv.at(r, c));
    }
    if (max_allowed == kNegInf) {
      throw std::invalid_argument("masked_softmax: fully masked row " +
                                  std::to_string(r));
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.at(r, c) == 0.0) {
        const double e = std::exp(sv.at(r, c) - max_allowed);
        out.at(r, c) = e;
        denom += e;
      }
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= denom;
  }
  const Id id = push(std::move(out), nullptr, "masked_softmax");
  nodes_[id]->backward = [id, scores](Graph& g) {
    const Tensor& p = g.value(id);
    const Tensor& dp = g.grad(id);
    Tensor& ds = g.grad_ref(scores);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) {
        dot += dp.at(r, c) * p.at(r, c);
      }
      for (std::size_t c = 0; c < p.cols(); ++c) {
        ds.at(r, c) += p.at(r, c) * (dp.at(r, c) - dot);
      }
    }
  };
  return id;
}

Graph::Id Graph::cross_entropy_mean(Id logits, std::span<const int> targets) {
  const Tensor& lv = value(logits);
  if (lv.ndim() != 2 || lv.rows() != targets.size()) {
    throw std::invalid_argument("cross_entropy_mean: logits " +
                                lv.shape_string() + " vs " +
                                std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) {
    throw std::invalid_argument("cross_entropy_mean: no loss positions");
  }
  const std::size_t rows = lv.rows(), cols = lv.cols();
  Tensor probs = Tensor::matrix(rows, cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= cols) {
      throw std::out_of_range("target id " + std::to_string(t) +
                              " outside vocabulary of size " +
                              std::to_string(cols));
    }
    double row_max = lv.at(r, 0);
    for (std::size_t c = 1; c < cols; ++c) {
      row_max = std::max(row_max, lv.at(r, c));
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(lv.at(r, c) - row_max);
      probs.at(r, c) = e;
      denom += e;
    }
    for (std::size_t c = 0; c < cols; ++c) probs.at(r, c) /= denom;
    loss -= lv.at(r, static_cast<std::size_t>(t)) - row_max - std::log(denom);
  }
  loss /= static_cast<double>(rows);
  const Id id = push(Tensor::scalar(loss), nullptr, "cross_entropy_mean");
  nodes_[id]->backward = [id, logits, probs = std::move(probs),
                          tgt = std::vector<int>(targets.begin(),
                                                 targets.end())](Graph& g) {
    const double upstream = g.grad(id).scalar_value();
    const double inv_n = upstream / static_cast<double>(tgt.size());
    Tensor& dl = g.grad_ref(logits);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      for (std::size_t c = 0; c < probs.cols(); ++c) {
        double d = probs.at(r, c);
        if (c == static_cast<std::size_t>(tgt[r])) d -= 1.0;
        dl.at(r, c) += inv_n * d;
      }
    }
  };
  return id;
}

void Graph::backward(Id root) {
  const Tensor& rv = value(root);
  if (rv.numel() != 1) {
    throw std::invalid_argument("backward root must be scalar, got " +
                                rv.shape_string());
  }
  for (auto& node : nodes_) {
    node->grad = Tensor::zeros_like(*node->value);
  }
  nodes_[root]->grad = Tensor::scalar(1.0);
  if (!rv.shape.empty()) nodes_[root]->grad.shape = rv.shape;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i]->backward) nodes_[i]->backward(*this);
  }
  for (auto& node : nodes_) {
    if (node->grad_sink == nullptr) continue;
    if (!node->grad_sink->same_shape(node->grad)) {
      *node->grad_sink = Tensor::zeros_like(node->grad);
    }
    for (std::size_t i = 0; i < node->grad.numel(); ++i) {
      (*node->grad_sink)[i] += node->grad[i];
    }
  }
}

Graph::Id scaled_masked_attention(Graph& g, Graph::Id q, Graph::Id k,
                                  Graph::Id v, const Tensor& mask,
                                  Graph::Id* attn_probs_out) {
  const std::size_t d_k = g.value(q).cols();
  if (d_k == 0) throw std::invalid_argument("attention with d_k == 0");
  const auto scores =
      g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(double(d_k)));
  const auto probs = g.masked_softmax(scores, mask);
  if (attn_probs_out != nullptr) *attn_probs_out = probs;
  return g.matmul(probs, v);
}

Graph::Id attention_head(Graph& g, Graph::Id h, Graph::Id wq, Graph::Id wk,
                         Graph::Id wv, const Tensor& mask) {
  const auto q = g.matmul(h, wq);
  const auto k = g.matmul(h, wk);
  const auto v = g.matmul(h, wv);
  return scaled_masked_attention(g, q, k, v, mask);
}

}  // namespace herbgen::compute
