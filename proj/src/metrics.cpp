#include "aal/metrics.hpp"

#include <stdexcept>

namespace aal {

double sequence_macro_f1(std::span<const int> gold, std::span<const int> pred, int num_labels) {
  if (gold.size() != pred.size()) throw std::invalid_argument("gold/prediction length mismatch");
  std::vector<long> tp(static_cast<std::size_t>(num_labels), 0);
  std::vector<long> fp(tp), fn(tp);
  std::vector<bool> present(static_cast<std::size_t>(num_labels), false);
  for (std::size_t t = 0; t < gold.size(); ++t) {
    const auto g = static_cast<std::size_t>(gold[t]);
    const auto p = static_cast<std::size_t>(pred[t]);
    present[g] = present[p] = true;
    if (g == p) {
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  double sum = 0.0;
  int classes = 0;
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (!present[c]) continue;
    ++classes;
    const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c] + fn[c]);
    sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  return classes ? sum / classes : 0.0;
}

double dataset_macro_f1(const std::vector<std::vector<int>>& gold,
                        const std::vector<std::vector<int>>& pred, int num_labels) {
  if (gold.empty()) throw std::invalid_argument("cannot evaluate an empty sentence list");
  if (gold.size() != pred.size()) throw std::invalid_argument("gold/prediction count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) sum += sequence_macro_f1(gold[i], pred[i], num_labels);
  return sum / static_cast<double>(gold.size());
}

}  // namespace aal
