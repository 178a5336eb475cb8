#include "herbgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace herbgen::metrics {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::set<std::string> to_set(std::span<const std::string> herbs) {
  std::set<std::string> out;
  for (const auto& h : herbs) {
    auto t = trim(h);
    if (!t.empty()) out.insert(std::move(t));
  }
  return out;
}

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum;
}

}  // namespace

double harmonic_f1(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double percent_2dp(double fraction) {
  return std::round(fraction * 10000.0) / 100.0;
}

EvalResult score(std::span<const std::string> generated,
                 std::span<const std::string> reference) {
  const auto ref = to_set(reference);
  if (ref.empty()) throw std::invalid_argument("empty reference prescription");
  const auto gen = to_set(generated);

  EvalResult r;
  r.n_generated = gen.size();
  r.n_reference = ref.size();
  for (const auto& h : gen) r.n_intersect += ref.count(h);
  r.precision = gen.empty() ? 0.0
                            : static_cast<double>(r.n_intersect) /
                                  static_cast<double>(r.n_generated);
  r.recall = static_cast<double>(r.n_intersect) /
             static_cast<double>(r.n_reference);
  r.f1 = harmonic_f1(r.precision, r.recall);
  return r;
}

AggregateResult aggregate(std::span<const EvalResult> results) {
  if (results.empty()) {
    throw std::invalid_argument("nothing to aggregate");
  }
  AggregateResult agg;
  agg.num_examples = results.size();

  std::vector<double> ps, rs, f1s;
  for (const auto& r : results) {
    ps.push_back(r.precision);
    rs.push_back(r.recall);
    f1s.push_back(r.f1);
    agg.micro.n_generated += r.n_generated;
    agg.micro.n_reference += r.n_reference;
    agg.micro.n_intersect += r.n_intersect;
  }
  const auto n = static_cast<double>(results.size());
  agg.macro.precision = sorted_sum(std::move(ps)) / n;
  agg.macro.recall = sorted_sum(std::move(rs)) / n;
  agg.macro.f1 = sorted_sum(std::move(f1s)) / n;
  agg.macro.n_generated = agg.micro.n_generated;
  agg.macro.n_reference = agg.micro.n_reference;
  agg.macro.n_intersect = agg.micro.n_intersect;

  agg.micro.precision =
      agg.micro.n_generated == 0
          ? 0.0
          : static_cast<double>(agg.micro.n_intersect) /
                static_cast<double>(agg.micro.n_generated);
  agg.micro.recall = agg.micro.n_reference == 0
                         ? 0.0
                         : static_cast<double>(agg.micro.n_intersect) /
                               static_cast<double>(agg.micro.n_reference);
  agg.micro.f1 = harmonic_f1(agg.micro.precision, agg.micro.recall);
  return agg;
}

}  // namespace herbgen::metrics
