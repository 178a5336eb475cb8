#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "herbgen/adam.hpp"
#include "herbgen/encoding.hpp"
#include "herbgen/graph.hpp"
#include "herbgen/rng.hpp"
#include "herbgen/tensor.hpp"

namespace herbgen::model {

struct ModelConfig {
  std::size_t hidden_size = 768;
  std::size_t num_layers = 6;
  std::size_t num_heads = 12;
  std::size_t ff_multiplier = 4;
  std::size_t max_len = 256;
  std::size_t vocab_size = 0;
  bool tie_output = true;
  double dropout = 0.0;

  std::size_t head_dim() const { return hidden_size / num_heads; }
  std::size_t ff_size() const { return hidden_size * ff_multiplier; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  compute::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  compute::Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  compute::Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

// All learnable tensors plus matching gradient buffers. The output
// projection shares the token embedding table unless config.tie_output is
// off.
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  compute::Tensor token_embedding;     // vocab_size x hidden
  compute::Tensor position_embedding;  // max_len x hidden
  compute::Tensor segment_embedding;   // 2 x hidden
  std::vector<LayerParams> layers;
  compute::Tensor output_projection;   // vocab_size x hidden when untied

  // Stable name -> tensor listing; gradients share the ordering.
  std::vector<compute::NamedParam> named_params();
  void zero_grads();

  bool operator==(const ModelParams& other) const;

 private:
  friend ModelParams load_checkpoint(const std::string&);
  friend ModelParams adapt_pretrained(const ModelParams&, const ModelConfig&);
  void allocate_grads();

  ModelConfig config_;
  // Gradient buffers, aligned with named_params() order.
  std::vector<compute::Tensor> grads_;
};

struct ForwardResult {
  compute::Graph graph;
  compute::Graph::Id embeddings = 0;    // H^0, N x hidden
  compute::Graph::Id final_hidden = 0;  // H^L, N x hidden
  compute::Graph::Id logits = 0;        // N x vocab
  // Attention probabilities, indexed [layer][head], for inspection.
  std::vector<std::vector<compute::Graph::Id>> attention_probs;
};

// Summed token/segment/position embeddings.
compute::Tensor embed(const ModelParams& params,
                      const encoding::EncodedExample& example);

// Full transformer pass. With accumulate_grads the graph binds parameter
// gradient sinks so a later backward() updates them; dropout_rng enables
// the configured dropout rate.
ForwardResult forward(ModelParams& params,
                      const encoding::EncodedExample& example,
                      bool accumulate_grads = false,
                      Rng* dropout_rng = nullptr);

// Convenience inference pass returning the logits tensor.
compute::Tensor forward_logits(ModelParams& params,
                               const encoding::EncodedExample& example);

// Mean cross-entropy over the example's loss rows (throws if there are
// none).
compute::Graph::Id sequence_loss(compute::Graph& graph,
                                 compute::Graph::Id logits,
                                 const encoding::EncodedExample& example);

// Checkpoint container: magic, format version, config as canonical JSON,
// then named tensors as little-endian 64-bit floats with shape prefixes.
void save_checkpoint(ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Initializes a (possibly shallower) model from pretrained weights by
// copying embeddings and the lowest layers. Vocabulary size, hidden size
// and head count must match; position rows are truncated when the target
// is shorter.
ModelParams adapt_pretrained(const ModelParams& pretrained,
                             const ModelConfig& target);

}  // namespace herbgen::model
