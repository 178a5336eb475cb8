#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "herbgen/kg.hpp"
#include "herbgen/model.hpp"
#include "herbgen/rng.hpp"
#include "herbgen/vocab.hpp"

namespace herbgen::generation {

enum class Strategy { greedy, beam, top_k, top_p, temperature, mixed };

Strategy strategy_from_string(std::string_view s);
std::string_view strategy_to_string(Strategy s);

struct GenerationConfig {
  Strategy strategy = Strategy::mixed;
  double temperature = 0.2;
  double top_p = 0.8;
  std::size_t top_k = 3;
  std::size_t beam_size = 5;
  std::size_t max_herbs = 20;
  bool ban_repeats = true;
  bool knowledge_at_inference = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Next-token logits as a function of the generated target tokens so far
// (herb characters and delimiters). The conditioning context is captured
// by the callable.
using StepFn = std::function<std::vector<double>(std::span<const int>)>;

// Token support and probabilities after strategy-specific shaping, in
// descending probability order (ties by ascending id).
struct SampleDistribution {
  std::vector<int> ids;
  std::vector<double> probs;
};

SampleDistribution build_distribution(std::span<const double> logits,
                                      const GenerationConfig& config,
                                      std::span<const bool> banned);

// One shaped draw. Banned ids receive -inf before anything else; greedy is
// the argmax; temperature rescales logits; top-k/top-p truncate the
// softmax support; mixed applies temperature scaling first, then top-p.
int sample_next(std::span<const double> logits,
                const GenerationConfig& config, Rng& rng,
                std::span<const bool> banned);

struct GenerationResult {
  std::vector<std::string> herbs;  // emission order
  std::vector<int> y_ids;          // generated token stream, no final [SEP]
  bool hit_cap = false;            // stopped by the herb cap or step budget
  double score = 0.0;              // cumulative log-probability (beam)
};

// Stepwise decoding loop: herb-boundary tracking, repetition banning at
// herb-initial positions, termination on [SEP], the herb cap, or the step
// budget (any open herb is closed at a forced stop).
GenerationResult generate_with_step(const StepFn& step,
                                    const vocab::Vocabulary& vocab,
                                    const GenerationConfig& config, Rng& rng,
                                    std::size_t max_steps);

// Exact beam search over the same grammar; returns the finished hypothesis
// with the highest cumulative log-probability, ties broken by earlier
// finish.
GenerationResult beam_search_with_step(const StepFn& step,
                                       const vocab::Vocabulary& vocab,
                                       const GenerationConfig& config,
                                       std::size_t max_steps);

// Wraps the transformer into a StepFn for one symptom text.
StepFn model_step_fn(model::ModelParams& params,
                     const vocab::Vocabulary& vocab,
                     const kg::KnowledgeGraph& graph, std::string symptoms,
                     bool knowledge_at_inference);

// End-to-end generation for one symptom text.
GenerationResult generate(std::string_view symptoms,
                          model::ModelParams& params,
                          const vocab::Vocabulary& vocab,
                          const kg::KnowledgeGraph& graph,
                          const GenerationConfig& config);

GenerationResult generate(std::string_view symptoms,
                          model::ModelParams& params,
                          const vocab::Vocabulary& vocab,
                          const kg::KnowledgeGraph& graph,
                          const GenerationConfig& config, Rng& rng);

}  // namespace herbgen::generation
