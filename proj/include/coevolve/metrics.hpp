#ifndef COEVOLVE_METRICS_HPP_
#define COEVOLVE_METRICS_HPP_

#include <vector>

#include "coevolve/dataset.hpp"

namespace coevolve {

std::vector<int> argmax_rows(const Matrix &p);

/// Fraction of masked nodes whose prediction matches the label.
double accuracy(const std::vector<int> &pred, const LabelVector &labels, const Mask &mask);

/// Macro-averaged F1 over the classes that occur (as label or prediction)
/// within the mask; a class with zero precision + recall contributes 0.
double macro_f1(const std::vector<int> &pred, const LabelVector &labels, const Mask &mask,
                int num_classes);

} // namespace coevolve

#endif // COEVOLVE_METRICS_HPP_
