#pragma once

#include "ape/field.hpp"

namespace ape {

/// Sharpness and dead-zone of the smooth binarization.
struct BinarizeParams {
    double gamma = 30.0;
    double epsilon = 0.01;

    /// Throws std::invalid_argument unless gamma > 0 and 0 < epsilon < 1.
    void validate() const;
};

/// Smooth support indicator of a perturbation, values in (-1, 1).
struct SField {
    Field2D values;
};

/// 1 where f != 0, else 0.
Field2D hard_binarize(const Field2D& f);

/// S(x) = 2 / (1 + exp(-gamma (|I(x) - I_hat(x)| - epsilon))) - 1.
/// Evaluated as tanh(gamma (|d| - epsilon) / 2), which is the same function
/// without an overflowing exponential.
SField smooth_binarize(const Field2D& image, const Field2D& perturbed, const BinarizeParams& p);

/// dS/dI_hat = gamma/2 * (1 - S)(1 + S) * sign(I_hat - I), sign(0) = 0.
Field2D smooth_binarize_grad(const Field2D& image, const Field2D& perturbed,
                             const BinarizeParams& p);

/// Saliency mask: 1 where S >= 0, else 0.
Field2D mask_from_s(const SField& s);

} // namespace ape
