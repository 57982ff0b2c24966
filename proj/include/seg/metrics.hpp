#pragma once

#include <stdexcept>

#include "seg/tensor.hpp"

namespace seg {

struct ConfusionCounts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    long long total() const { return tp + fp + fn + tn; }
};

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred_mask, const Tensor<T>& truth_mask) {
    require_same_shape(pred_mask, truth_mask, "confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred_mask.size(); ++i) {
        T p = pred_mask.data[i], t = truth_mask.data[i];
        if ((p != T(0) && p != T(1)) || (t != T(0) && t != T(1)))
            throw std::invalid_argument("confusion: masks must be binary");
        if (t == T(1))
            (p == T(1) ? c.tp : c.fn)++;
        else
            (p == T(1) ? c.fp : c.tn)++;
    }
    return c;
}

// 2TP/(2TP+FP+FN); 1 when both masks are empty.
inline double dice_coefficient(const ConfusionCounts& c) {
    long long den = 2 * c.tp + c.fp + c.fn;
    return den == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

// TP/(TP+FN); 1 when no positives exist.
inline double sensitivity(const ConfusionCounts& c) {
    long long den = c.tp + c.fn;
    return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

// TN/(TN+FP); 1 when no negatives exist.
inline double specificity(const ConfusionCounts& c) {
    long long den = c.tn + c.fp;
    return den == 0 ? 1.0 : static_cast<double>(c.tn) / static_cast<double>(den);
}

struct EvalSummary {
    double dice = 0, sensitivity = 0, specificity = 0;
    int slices = 0;
};

}  // namespace seg
