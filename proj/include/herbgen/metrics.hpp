#pragma once

#include <span>
#include <string>
#include <vector>

namespace herbgen::metrics {

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_generated = 0;
  std::size_t n_reference = 0;
  std::size_t n_intersect = 0;
};

// Set-based precision/recall/F1 of one prescription against its reference.
// Herbs match on exact string equality after whitespace trim; duplicates
// carry no weight. The reference must be non-empty.
EvalResult score(std::span<const std::string> generated,
                 std::span<const std::string> reference);

struct AggregateResult {
  EvalResult macro;  // mean of per-example metrics; counts are pooled
  EvalResult micro;  // metrics recomputed from pooled counts
  std::size_t num_examples = 0;
};

// Both macro and micro aggregation over per-example results. Summation
// runs in a sorted order, so the aggregate is independent of dataset
// order bit for bit.
AggregateResult aggregate(std::span<const EvalResult> results);

double harmonic_f1(double precision, double recall);

// Percentage rendered at two decimals, e.g. 0.64 -> 64.0.
double percent_2dp(double fraction);

}  // namespace herbgen::metrics
