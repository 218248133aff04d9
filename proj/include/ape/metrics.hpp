#pragma once

#include <cstddef>
#include <optional>

#include "ape/field.hpp"
#include "ape/model.hpp"

namespace ape::metrics {

/// Per-term weights for the APE scores. Defaults weigh all terms equally.
struct ApeWeights {
    double sparsity = 1.0;
    double smoothness = 1.0;
    double classification = 1.0;

    /// Throws std::invalid_argument on negative weights or all-zero weights.
    void validate() const;
};

struct ApeBreakdown {
    double sparsity = 0.0;        // L0 term / N
    double smoothness = 0.0;      // TV term / N
    double classification = 0.0;
    double total = 0.0;
};

/// Destroying-region score of a clipped perturbation:
///   sparsity       = L0(I - I_hat) / N
///   smoothness     = TV(B(I - I_hat)) / N
///   classification = M(I_hat)[class]
/// Throws std::invalid_argument on a shape mismatch or I_hat outside [0,1].
ApeBreakdown ape_d(const model::Classifier& model, const Field2D& image, const Field2D& perturbed,
                   int class_index, const ApeWeights& weights = {});

/// Preserving-region score:
///   sparsity       = L0(1 - B(I - I_hat)) / N   (unperturbed share)
///   smoothness     = TV(1 - B(I - I_hat)) / N
///   classification = |M(I_hat)[class] - M(I)[class]|
ApeBreakdown ape_s(const model::Classifier& model, const Field2D& image, const Field2D& perturbed,
                   int class_index, const ApeWeights& weights = {});

struct Labeling {
    Field2D labels;  // 0 = background, 1..count in row-major order of first pixel
    int count = 0;
};

/// 4-connected component labeling. Throws std::invalid_argument when the
/// mask holds anything other than 0 and 1.
Labeling connected_components(const Field2D& mask);

struct CcReport {
    int component_count = 0;
    int hit_count = 0;
    double hit_rate = 0.0;  // 0 when there are no components
};

/// A component hits when it shares at least one pixel with gt_mask.
CcReport cc_hit_rate(const Field2D& mask, const Field2D& gt_mask);

} // namespace ape::metrics
