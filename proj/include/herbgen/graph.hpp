#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "herbgen/rng.hpp"
#include "herbgen/tensor.hpp"

namespace herbgen::compute {

// Reverse-mode autodiff tape. Ops append nodes in topological order;
// backward() walks the tape in reverse. One Graph per forward pass;
// parameters live outside the graph and receive gradients through
// registered sinks.
class Graph {
 public:
  using Id = std::size_t;

  Graph() = default;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Value the graph does not differentiate through (e.g. a mask).
  Id constant(Tensor value);

  // Differentiable input owned by the graph; its gradient is readable
  // through grad() after backward().
  Id leaf(Tensor value);

  // External parameter. The tensor must outlive the graph; after
  // backward(), the node gradient is accumulated into *grad_sink.
  Id param(const Tensor* value, Tensor* grad_sink);

  // --- ops -----------------------------------------------------------
  Id matmul(Id a, Id b);
  Id transpose(Id a);
  Id add(Id a, Id b);                       // same shape
  Id add_row_broadcast(Id m, Id row);       // row added to every row of m
  Id scale(Id a, double factor);
  Id gelu(Id x);
  Id layer_norm(Id x, Id gamma, Id beta, double eps = 1e-12);
  Id gather_rows(Id table, std::span<const int> indices);
  Id slice_cols(Id x, std::size_t start, std::size_t count);
  Id concat_cols(std::span<const Id> parts);
  Id dropout(Id x, double rate, Rng& rng);

  // Row softmax over scores + mask, where mask entries are exactly 0 or
  // -inf. Entries masked -inf come out exactly 0; every row must keep at
  // least one unmasked column.
  Id masked_softmax(Id scores, const Tensor& mask);

  // Mean negative log-likelihood of targets under row-wise softmax(logits).
  Id cross_entropy_mean(Id logits, std::span<const int> targets);

  // --------------------------------------------------------------------
  void backward(Id root);  // root must be scalar

  const Tensor& value(Id id) const { return *nodes_[id]->value; }
  const Tensor& grad(Id id) const { return nodes_[id]->grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;                 // storage unless the value is external
    const Tensor* value = nullptr;
    Tensor grad;
    Tensor* grad_sink = nullptr;
    std::function<void(Graph&)> backward;
  };

  Id push(Tensor value, std::function<void(Graph&)> backward_fn,
          const char* op_name);
  Tensor& grad_ref(Id id) { return nodes_[id]->grad; }

  std::vector<std::unique_ptr<Node>> nodes_;
};

// softmax((H Wq)(H Wk)^T / sqrt(d_k) + mask) (H Wv), with d_k taken from
// the Wq column count.
Graph::Id attention_head(Graph& g, Graph::Id h, Graph::Id wq, Graph::Id wk,
                         Graph::Id wv, const Tensor& mask);

// Attention from already-projected matrices; used per head by the model.
Graph::Id scaled_masked_attention(Graph& g, Graph::Id q, Graph::Id k,
                                  Graph::Id v, const Tensor& mask,
                                  Graph::Id* attn_probs_out = nullptr);

}  // namespace herbgen::compute
