#pragma once

#include <span>
#include <vector>

namespace aal {

// Macro-F1 over the label classes occurring in gold or prediction of one
// sequence. A class with an empty precision+recall denominator scores 0.
double sequence_macro_f1(std::span<const int> gold, std::span<const int> pred, int num_labels = 3);

// Unweighted mean of sequence_macro_f1 over sentences.
double dataset_macro_f1(const std::vector<std::vector<int>>& gold,
                        const std::vector<std::vector<int>>& pred, int num_labels = 3);

}  // namespace aal
