#include "herbgen/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace herbgen::model {

using compute::Graph;
using compute::Tensor;

void ModelConfig::validate() const {
  if (hidden_size == 0 || num_heads == 0 || max_len == 0 || vocab_size == 0 ||
      ff_multiplier == 0) {
    throw std::invalid_argument("model config fields must be positive");
  }
  if (hidden_size % num_heads != 0) {
    throw std::invalid_argument("hidden_size " + std::to_string(hidden_size) +
                                " not divisible by num_heads " +
                                std::to_string(num_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("dropout must be in [0, 1)");
  }
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config_ = config;
  Rng rng(seed);
  const auto normal_matrix = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.data) v = 0.02 * rng.next_normal();
    return t;
  };
  const std::size_t h = config.hidden_size;
  p.token_embedding = normal_matrix(config.vocab_size, h);
  p.position_embedding = normal_matrix(config.max_len, h);
  p.segment_embedding = normal_matrix(2, h);
  p.layers.resize(config.num_layers);
  for (auto& layer : p.layers) {
    layer.wq = normal_matrix(h, h);
    layer.bq = Tensor::vector(h);
    layer.wk = normal_matrix(h, h);
    layer.bk = Tensor::vector(h);
    layer.wv = normal_matrix(h, h);
    layer.bv = Tensor::vector(h);
    layer.wo = normal_matrix(h, h);
    layer.bo = Tensor::vector(h);
    layer.ff_w1 = normal_matrix(h, config.ff_size());
    layer.ff_b1 = Tensor::vector(config.ff_size());
    layer.ff_w2 = normal_matrix(config.ff_size(), h);
    layer.ff_b2 = Tensor::vector(h);
    layer.ln1_gamma = Tensor::vector(h, 1.0);
    layer.ln1_beta = Tensor::vector(h);
    layer.ln2_gamma = Tensor::vector(h, 1.0);
    layer.ln2_beta = Tensor::vector(h);
  }
  if (!config.tie_output) {
    p.output_projection = normal_matrix(config.vocab_size, h);
  }
  p.allocate_grads();
  return p;
}

std::vector<compute::NamedParam> ModelParams::named_params() {
  std::vector<compute::NamedParam> out;
  const auto push = [&](const std::string& name, Tensor& t) {
    out.push_back({name, &t, nullptr});
  };
  push("token_embedding", token_embedding);
  push("position_embedding", position_embedding);
  push("segment_embedding", segment_embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    auto& layer = layers[l];
    push(prefix + "wq", layer.wq);
    push(prefix + "bq", layer.bq);
    push(prefix + "wk", layer.wk);
    push(prefix + "bk", layer.bk);
    push(prefix + "wv", layer.wv);
    push(prefix + "bv", layer.bv);
    push(prefix + "wo", layer.wo);
    push(prefix + "bo", layer.bo);
    push(prefix + "ff_w1", layer.ff_w1);
    push(prefix + "ff_b1", layer.ff_b1);
    push(prefix + "ff_w2", layer.ff_w2);
    push(prefix + "ff_b2", layer.ff_b2);
    push(prefix + "ln1_gamma", layer.ln1_gamma);
    push(prefix + "ln1_beta", layer.ln1_beta);
    push(prefix + "ln2_gamma", layer.ln2_gamma);
    push(prefix + "ln2_beta", layer.ln2_beta);
  }
  if (!config_.tie_output) push("output_projection", output_projection);

  if (grads_.size() != out.size()) allocate_grads();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!grads_[i].same_shape(*out[i].value)) {
      grads_[i] = Tensor::zeros_like(*out[i].value);
    }
    out[i].grad = &grads_[i];
  }
  return out;
}

void ModelParams::allocate_grads() {
  grads_.clear();
  const auto count_params = [&] {
    std::size_t n = 3 + 16 * layers.size();
    if (!config_.tie_output) ++n;
    return n;
  };
  grads_.resize(count_params());
}

void ModelParams::zero_grads() {
  for (auto& g : grads_) g.data.assign(g.numel(), 0.0);
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (config_ != other.config_) return false;
  if (token_embedding != other.token_embedding) return false;
  if (position_embedding != other.position_embedding) return false;
  if (segment_embedding != other.segment_embedding) return false;
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.wq != b.wq || a.bq != b.bq || a.wk != b.wk || a.bk != b.bk ||
        a.wv != b.wv || a.bv != b.bv || a.wo != b.wo || a.bo != b.bo ||
        a.ff_w1 != b.ff_w1 || a.ff_b1 != b.ff_b1 || a.ff_w2 != b.ff_w2 ||
        a.ff_b2 != b.ff_b2 || a.ln1_gamma != b.ln1_gamma ||
        a.ln1_beta != b.ln1_beta || a.ln2_gamma != b.ln2_gamma ||
        a.ln2_beta != b.ln2_beta) {
      return false;
    }
  }
  return output_projection == other.output_projection;
}

Tensor embed(const ModelParams& params,
             const encoding::EncodedExample& example) {
  const auto& config = params.config();
  const std::size_t n = example.size();
  const std::size_t h = config.hidden_size;
  Tensor out = Tensor::matrix(n, h);
  for (std::size_t p = 0; p < n; ++p) {
    const int token = example.token_ids[p];
    const int pos = example.position_ids[p];
    const int seg = example.segment_ids[p];
    if (token < 0 || static_cast<std::size_t>(token) >= config.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(token) +
                              " outside vocabulary");
    }
    if (pos < 0 || static_cast<std::size_t>(pos) >= config.max_len) {
      throw std::out_of_range("position " + std::to_string(pos) +
                              " outside maximum length " +
                              std::to_string(config.max_len));
    }
    if (seg != 0 && seg != 1) {
      throw std::out_of_range("segment id must be 0 or 1");
    }
    for (std::size_t c = 0; c < h; ++c) {
      out.at(p, c) = params.token_embedding.at(static_cast<std::size_t>(token), c) +
                     params.position_embedding.at(static_cast<std::size_t>(pos), c) +
                     params.segment_embedding.at(static_cast<std::size_t>(seg), c);
    }
  }
  return out;
}

ForwardResult forward(ModelParams& params,
                      const encoding::EncodedExample& example,
                      bool accumulate_grads, Rng* dropout_rng) {
  const auto& config = params.config();
  const std::size_t n = example.size();
  if (n == 0) throw std::invalid_argument("empty example");
  if (n > config.max_len) {
    throw std::invalid_argument("example of " + std::to_string(n) +
                                " tokens exceeds max_len " +
                                std::to_string(config.max_len));
  }

  ForwardResult result;
  Graph& g = result.graph;
  auto named = params.named_params();
  const auto param_node = [&](const Tensor& t) {
    for (const auto& p : named) {
      if (p.value == &t) {
        return g.param(p.value, accumulate_grads ? p.grad : nullptr);
      }
    }
    throw std::logic_error("parameter not found in named listing");
  };

  const auto tok_table = param_node(params.token_embedding);
  const auto pos_table = param_node(params.position_embedding);
  const auto seg_table = param_node(params.segment_embedding);

  // Bounds checks happen in gather_rows; segment/position/token ids were
  // validated during encoding.
  const auto tok = g.gather_rows(tok_table, example.token_ids);
  const auto pos = g.gather_rows(pos_table, example.position_ids);
  const auto seg = g.gather_rows(seg_table, example.segment_ids);
  auto hidden = g.add(g.add(tok, pos), seg);
  result.embeddings = hidden;

  const bool use_dropout = dropout_rng != nullptr && config.dropout > 0.0;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    auto& layer = params.layers[l];
    const auto wq = param_node(layer.wq);
    const auto bq = param_node(layer.bq);
    const auto wk = param_node(layer.wk);
    const auto bk = param_node(layer.bk);
    const auto wv = param_node(layer.wv);
    const auto bv = param_node(layer.bv);
    const auto wo = param_node(layer.wo);
    const auto bo = param_node(layer.bo);

    const auto q_full = g.add_row_broadcast(g.matmul(hidden, wq), bq);
    const auto k_full = g.add_row_broadcast(g.matmul(hidden, wk), bk);
    const auto v_full = g.add_row_broadcast(g.matmul(hidden, wv), bv);

    std::vector<Graph::Id> heads(config.num_heads);
    std::vector<Graph::Id> probs(config.num_heads);
    const std::size_t dk = config.head_dim();
    for (std::size_t head = 0; head < config.num_heads; ++head) {
      const auto qh = g.slice_cols(q_full, head * dk, dk);
      const auto kh = g.slice_cols(k_full, head * dk, dk);
      const auto vh = g.slice_cols(v_full, head * dk, dk);
      heads[head] =
          compute::scaled_masked_attention(g, qh, kh, vh, example.mask,
                                           &probs[head]);
    }
    result.attention_probs.push_back(std::move(probs));

    auto attn = g.add_row_broadcast(g.matmul(g.concat_cols(heads), wo), bo);
    if (use_dropout) attn = g.dropout(attn, config.dropout, *dropout_rng);
    hidden = g.layer_norm(g.add(hidden, attn), param_node(layer.ln1_gamma),
                          param_node(layer.ln1_beta));

    auto ff = g.add_row_broadcast(
        g.matmul(hidden, param_node(layer.ff_w1)), param_node(layer.ff_b1));
    ff = g.gelu(ff);
    ff = g.add_row_broadcast(g.matmul(ff, param_node(layer.ff_w2)),
                             param_node(layer.ff_b2));
    if (use_dropout) ff = g.dropout(ff, config.dropout, *dropout_rng);
    hidden = g.layer_norm(g.add(hidden, ff), param_node(layer.ln2_gamma),
                          param_node(layer.ln2_beta));
  }
  result.final_hidden = hidden;

  const auto projection =
      config.tie_output ? tok_table : param_node(params.output_projection);
  result.logits = g.matmul(hidden, g.transpose(projection));
  return result;
}

compute::Tensor forward_logits(ModelParams& params,
                               const encoding::EncodedExample& example) {
  const auto result = forward(params, example);
  return result.graph.value(result.logits);
}

Graph::Id sequence_loss(Graph& graph, Graph::Id logits,
                        const encoding::EncodedExample& example) {
  const auto rows = example.loss_rows();
  if (rows.empty()) {
    throw std::invalid_argument("example has no loss positions");
  }
  std::vector<int> row_ids(rows.begin(), rows.end());
  const auto selected = graph.gather_rows(logits, row_ids);
  return graph.cross_entropy_mean(selected, example.loss_targets());
}

namespace {

constexpr char kMagic[8] = {'H', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"hidden_size", c.hidden_size},   {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},       {"ff_multiplier", c.ff_multiplier},
          {"max_len", c.max_len},           {"vocab_size", c.vocab_size},
          {"tie_output", c.tie_output},     {"dropout", c.dropout}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.ff_multiplier = j.at("ff_multiplier").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.tie_output = j.at("tie_output").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return value;
}

// Tensor shapes in named_params() order, derived from the config alone.
std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_shapes(
    const ModelConfig& c) {
  using Shape = std::vector<std::size_t>;
  std::vector<std::pair<std::string, Shape>> out;
  const std::size_t h = c.hidden_size;
  out.emplace_back("token_embedding", Shape{c.vocab_size, h});
  out.emplace_back("position_embedding", Shape{c.max_len, h});
  out.emplace_back("segment_embedding", Shape{2, h});
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      out.emplace_back(prefix + w, Shape{h, h});
      out.emplace_back(prefix + "b" + std::string(1, w[1]), Shape{h});
    }
    out.emplace_back(prefix + "ff_w1", Shape{h, c.ff_size()});
    out.emplace_back(prefix + "ff_b1", Shape{c.ff_size()});
    out.emplace_back(prefix + "ff_w2", Shape{c.ff_size(), h});
    out.emplace_back(prefix + "ff_b2", Shape{h});
    out.emplace_back(prefix + "ln1_gamma", Shape{h});
    out.emplace_back(prefix + "ln1_beta", Shape{h});
    out.emplace_back(prefix + "ln2_gamma", Shape{h});
    out.emplace_back(prefix + "ln2_beta", Shape{h});
  }
  if (!c.tie_output) {
    out.emplace_back("output_projection", Shape{c.vocab_size, h});
  }
  return out;
}

}  // namespace

void save_checkpoint(ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  const std::string config_json = config_to_json(params.config()).dump();
  write_pod(out, static_cast<std::uint64_t>(config_json.size()));
  out.write(config_json.data(),
            static_cast<std::streamsize>(config_json.size()));

  const auto named = params.named_params();
  write_pod(out, static_cast<std::uint64_t>(named.size()));
  for (const auto& p : named) {
    write_pod(out, static_cast<std::uint64_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(out, static_cast<std::uint64_t>(p.value->ndim()));
    for (const std::size_t d : p.value->shape) {
      write_pod(out, static_cast<std::uint64_t>(d));
    }
    out.write(reinterpret_cast<const char*>(p.value->data.data()),
              static_cast<std::streamsize>(p.value->numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("error writing checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  const auto json_len = read_pod<std::uint64_t>(in, path);
  std::string config_json(json_len, '\0');
  in.read(config_json.data(), static_cast<std::streamsize>(json_len));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);

  ModelParams params;
  params.config_ = config_from_json(nlohmann::json::parse(config_json));
  params.config_.validate();
  params.layers.resize(params.config_.num_layers);
  params.allocate_grads();

  std::map<std::string, Tensor> tensors;
  const auto tensor_count = read_pod<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < tensor_count; ++i) {
    const auto name_len = read_pod<std::uint64_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto ndim = read_pod<std::uint64_t>(in, path);
    std::vector<std::size_t> shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
      numel *= d;
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(numel);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    tensors.emplace(std::move(name), std::move(t));
  }

  auto named = params.named_params();
  if (named.size() != tensors.size()) {
    throw std::runtime_error("checkpoint holds " +
                             std::to_string(tensors.size()) + " tensors, " +
                             "expected " + std::to_string(named.size()));
  }
  const auto expected = expected_shapes(params.config_);
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto it = tensors.find(named[i].name);
    if (it == tensors.end()) {
      throw std::runtime_error("checkpoint missing tensor " + named[i].name);
    }
    if (it->second.shape != expected[i].second) {
      Tensor want;
      want.shape = expected[i].second;
      throw std::runtime_error("checkpoint tensor " + named[i].name +
                               " has shape " + it->second.shape_string() +
                               ", expected " + want.shape_string());
    }
    *named[i].value = std::move(it->second);
  }
  params.allocate_grads();
  return params;
}

ModelParams adapt_pretrained(const ModelParams& pretrained,
                             const ModelConfig& target) {
  const auto& src = pretrained.config();
  target.validate();
  if (target.vocab_size != src.vocab_size) {
    throw std::invalid_argument("vocabulary size mismatch: pretrained " +
                                std::to_string(src.vocab_size) + ", target " +
                                std::to_string(target.vocab_size));
  }
  if (target.hidden_size != src.hidden_size ||
      target.num_heads != src.num_heads ||
      target.ff_multiplier != src.ff_multiplier ||
      target.tie_output != src.tie_output) {
    throw std::invalid_argument(
        "pretrained architecture is incompatible with the target config");
  }
  if (target.num_layers > src.num_layers) {
    throw std::invalid_argument("target depth " +
                                std::to_string(target.num_layers) +
                                " exceeds pretrained depth " +
                                std::to_string(src.num_layers));
  }
  if (target.max_len > src.max_len) {
    throw std::invalid_argument("target max_len exceeds pretrained max_len");
  }

  ModelParams out;
  out.config_ = target;
  out.token_embedding = pretrained.token_embedding;
  out.segment_embedding = pretrained.segment_embedding;
  out.position_embedding = Tensor::matrix(target.max_len, target.hidden_size);
  for (std::size_t r = 0; r < target.max_len; ++r) {
    for (std::size_t c = 0; c < target.hidden_size; ++c) {
      out.position_embedding.at(r, c) = pretrained.position_embedding.at(r, c);
    }
  }
  out.layers.assign(pretrained.layers.begin(),
                    pretrained.layers.begin() +
                        static_cast<std::ptrdiff_t>(target.num_layers));
  if (!target.tie_output) out.output_projection = pretrained.output_projection;
  out.allocate_grads();
  return out;
}

}  // namespace herbgen::model
