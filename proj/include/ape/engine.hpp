#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ape/field.hpp"
#include "ape/metrics.hpp"
#include "ape/model.hpp"
#include "ape/regularizers.hpp"

namespace ape::engine {

/// Settings for the two-phase explanation.
///
/// `alpha` and `beta` weigh sum(S) and TV(S) in the phase-1 objective. Both
/// are applied to the pixel-count-normalized terms, i.e. the objective is
///   M(I_hat)[c] + (alpha / N) sum(S) + (beta / N) TV(S)
/// so one setting transfers across image sizes.
struct EngineConfig {
    double alpha = 40.0;
    double beta = 120.0;
    BinarizeParams binarize;
    double lr = 0.01;
    int phase1_iters = 500;
    int phase2_iters = 200;
    // Stop once |delta loss| < tol for kConvergenceWindow consecutive steps.
    double convergence_tol = 1e-7;
    // The optimization is deterministic; the seed is carried for run records.
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr int kConvergenceWindow = 10;

/// Raised when an objective evaluates to NaN or infinity.
class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(const char* phase, int iteration);
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

/// Phase-1 objective at I_hat.
double phase1_loss(const model::Classifier& model, const Field2D& image,
                   const Field2D& perturbed, int class_index, const EngineConfig& cfg);

/// Phase-1 objective and its gradient w.r.t. I_hat, flowing through the
/// classifier, S, and the TV(S) subgradient (sign(0) = 0 at ties).
std::pair<double, Field2D> phase1_loss_and_gradient(const model::Classifier& model,
                                                    const Field2D& image,
                                                    const Field2D& perturbed, int class_index,
                                                    const EngineConfig& cfg);

struct Phase1Result {
    Field2D perturbed;
    SField s;
    std::vector<double> loss_trace;  // loss at every iterate, starting with I_hat = I
};

/// Adam descent from I_hat = I, clipping to [0,1] after every step.
Phase1Result phase1(const model::Classifier& model, const Field2D& image, int class_index,
                    const EngineConfig& cfg);

/// Thresholds S at zero.
Field2D derive_mask(const SField& s);

/// Minimizes M(I_check)[c] from I_check = I with every Adam step confined to
/// the mask. Pixels outside the mask keep their input value bit for bit.
/// Returns the lowest-loss iterate visited.
Field2D phase2(const model::Classifier& model, const Field2D& image, const Field2D& mask,
               int class_index, const EngineConfig& cfg);

struct Explanation {
    Field2D mask;
    Field2D perturbed_phase1;
    Field2D perturbed_phase2;
    metrics::ApeBreakdown breakdown;  // APE_D of perturbed_phase2, unit weights
    std::vector<double> phase1_loss_trace;
};

Explanation explain(const model::Classifier& model, const Field2D& image, int class_index,
                    const EngineConfig& cfg);

} // namespace ape::engine
