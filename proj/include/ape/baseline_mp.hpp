#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ape/field.hpp"
#include "ape/metrics.hpp"
#include "ape/model.hpp"

namespace ape::mp {

enum class DeletionMode { kMinConst, kBlur };

std::string to_string(DeletionMode mode);
DeletionMode deletion_mode_from_string(const std::string& name);  // "min" | "blur"

/// Meaningful-Perturbation settings. The soft mask m is 1 where the input is
/// preserved and 0 where it is fully replaced by the deletion image.
struct MpConfig {
    DeletionMode deletion = DeletionMode::kMinConst;
    double blur_sigma = 5.0;
    double sparsity_coeff = 40.0;  // weight of (1/N) sum(1 - m)
    double tv_coeff = 120.0;       // weight of (1/N) sum |grad m|^tv_gamma
    double tv_gamma = 1.0;
    double lr = 0.05;
    int iters = 500;
    double threshold_scan_step = 1e-3;

    void validate() const;
};

/// MIN_CONST: constant field at min(I). BLUR: Gaussian blur with a kernel
/// truncated at radius ceil(3 sigma) and edge-replicate padding.
Field2D deletion_image(const Field2D& image, const MpConfig& cfg);

/// m * I + (1 - m) * reference.
Field2D crossfade(const Field2D& image, const Field2D& reference, const Field2D& mask);

/// Anisotropic sum |forward difference|^gamma. For gamma == 1 this is
/// total_variation exactly.
double tv_power(const Field2D& f, double gamma);
Field2D tv_power_gradient(const Field2D& f, double gamma);

/// M(crossfade)[c] + sparsity/N sum(1 - m) + tv/N tv_power(m).
double mp_loss(const model::Classifier& model, const Field2D& image, const Field2D& reference,
               const Field2D& mask, int class_index, const MpConfig& cfg);
std::pair<double, Field2D> mp_loss_and_gradient(const model::Classifier& model,
                                                const Field2D& image, const Field2D& reference,
                                                const Field2D& mask, int class_index,
                                                const MpConfig& cfg);

/// Adam from m = 1 at full input resolution, clipping m to [0,1] each step.
Field2D mp_optimize(const model::Classifier& model, const Field2D& image, int class_index,
                    const MpConfig& cfg);

struct MpResult {
    Field2D soft_mask;
    Field2D binary_mask;  // 1 = deleted
    Field2D perturbed;    // reference inside binary_mask, input elsewhere
    metrics::ApeBreakdown breakdown;
};

/// binary mask for threshold T: 1 where 1 - m >= T.
Field2D threshold_mask(const Field2D& soft_mask, double threshold);

/// Thresholds on the grid step, 2 step, ..., 1 (last point clamped to 1).
std::vector<double> threshold_grid(double step);

struct ThresholdScan {
    double best_threshold = 1.0;
    double best_mean_total = 0.0;
    std::vector<MpResult> results;  // at best_threshold, aligned with the inputs
};

/// Picks the grid threshold minimizing mean APE_D total over all images
/// (first one on ties) and scores every image at it.
ThresholdScan threshold_and_score(const model::Classifier& model, std::span<const Field2D> images,
                                  std::span<const Field2D> soft_masks, int class_index,
                                  const MpConfig& cfg);

} // namespace ape::mp
