#include "ape/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ape/numerics.hpp"

namespace ape::engine {

namespace {

void check_image(const model::Classifier& model, const Field2D& image) {
    model.require_input_shape(image);
    for (double v : image.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("engine: input outside [0,1]");
    }
}

void check_class(int class_index) {
    if (class_index < 0 || class_index >= model::kClasses) {
        throw std::invalid_argument("engine: class index out of range");
    }
}

AdamHyper hyper_for(const EngineConfig& cfg) {
    AdamHyper h;
    h.lr = cfg.lr;
    return h;
}

// Counts consecutive small loss changes.
class ConvergenceMonitor {
public:
    explicit ConvergenceMonitor(double tol) : tol_(tol) {}
    bool converged(double previous, double current) {
        calm_ = std::abs(current - previous) < tol_ ? calm_ + 1 : 0;
        return calm_ >= kConvergenceWindow;
    }

private:
    double tol_;
    int calm_ = 0;
};

} // namespace

void EngineConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) {
        throw std::invalid_argument("engine: alpha and beta must be >= 0");
    }
    if (!(lr > 0.0)) throw std::invalid_argument("engine: lr must be > 0");
    if (phase1_iters < 1 || phase2_iters < 1) {
        throw std::invalid_argument("engine: iteration counts must be >= 1");
    }
    if (!(convergence_tol >= 0.0)) throw std::invalid_argument("engine: convergence_tol must be >= 0");
    binarize.validate();
}

NonFiniteLoss::NonFiniteLoss(const char* phase, int iteration)
    : std::runtime_error(std::string(phase) + ": non-finite loss at iteration " +
                         std::to_string(iteration)),
      iteration_(iteration) {}

double phase1_loss(const model::Classifier& model, const Field2D& image,
                   const Field2D& perturbed, int class_index, const EngineConfig& cfg) {
    require_same_shape(image, perturbed, "phase1_loss");
    check_class(class_index);
    const double n = static_cast<double>(image.size());
    const SField s = smooth_binarize(image, perturbed, cfg.binarize);
    return model.predict(perturbed).probs[class_index] + cfg.alpha / n * sum(s.values) +
           cfg.beta / n * total_variation(s.values);
}

std::pair<double, Field2D> phase1_loss_and_gradient(const model::Classifier& model,
                                                    const Field2D& image,
                                                    const Field2D& perturbed, int class_index,
                                                    const EngineConfig& cfg) {
    require_same_shape(image, perturbed, "phase1_loss_and_gradient");
    check_class(class_index);
    const double n = static_cast<double>(image.size());
    const SField s = smooth_binarize(image, perturbed, cfg.binarize);
    const Field2D ds = smooth_binarize_grad(image, perturbed, cfg.binarize);
    const Field2D dtv = total_variation_subgradient(s.values);
    auto [pred, grad] = model.predict_with_gradient(perturbed, class_index);
    const double a = cfg.alpha / n;
    const double b = cfg.beta / n;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += (a + b * dtv[i]) * ds[i];
    const double loss = pred.probs[class_index] + a * sum(s.values) + b * total_variation(s.values);
    return {loss, std::move(grad)};
}

Phase1Result phase1(const model::Classifier& model, const Field2D& image, int class_index,
                    const EngineConfig& cfg) {
    cfg.validate();
    check_image(model, image);
    Phase1Result out;
    Field2D current = image;
    AdamState state = AdamState::zeros(image, hyper_for(cfg));
    auto [loss, grad] = phase1_loss_and_gradient(model, image, current, class_index, cfg);
    if (!std::isfinite(loss)) throw NonFiniteLoss("phase1", 0);
    out.loss_trace.push_back(loss);
    Field2D best = current;
    double best_loss = loss;
    ConvergenceMonitor monitor(cfg.convergence_tol);
    for (int it = 1; it <= cfg.phase1_iters; ++it) {
        auto [next_state, stepped] = adam_step(state, grad, current);
        state = std::move(next_state);
        current = clip(stepped, 0.0, 1.0);
        const double previous = loss;
        std::tie(loss, grad) = phase1_loss_and_gradient(model, image, current, class_index, cfg);
        if (!std::isfinite(loss)) throw NonFiniteLoss("phase1", it);
        out.loss_trace.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best = current;
        }
        if (monitor.converged(previous, loss)) break;
    }
    out.s = smooth_binarize(image, current, cfg.binarize);
    out.perturbed = std::move(current);
    return out;
}

Field2D derive_mask(const SField& s) { return mask_from_s(s); }

Field2D phase2(const model::Classifier& model, const Field2D& image, const Field2D& mask,
               int class_index, const EngineConfig& cfg) {
    cfg.validate();
    check_image(model, image);
    require_same_shape(image, mask, "phase2");
    check_class(class_index);
    for (double v : mask.values()) {
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("phase2: non-binary mask");
    }
    Field2D current = image;
    AdamState state = AdamState::zeros(image, hyper_for(cfg));
    auto [pred, grad] = model.predict_with_gradient(current, class_index);
    double loss = pred.probs[class_index];
    if (!std::isfinite(loss)) throw NonFiniteLoss("phase2", 0);
    Field2D best = current;
    double best_loss = loss;
    ConvergenceMonitor monitor(cfg.convergence_tol);
    for (int it = 1; it <= cfg.phase2_iters; ++it) {
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
        auto [next_state, stepped] = adam_step(state, grad, current);
        state = std::move(next_state);
        for (std::size_t i = 0; i < current.size(); ++i) {
            if (mask[i] != 0.0) current[i] = std::min(1.0, std::max(0.0, stepped[i]));
        }
        const double previous = loss;
        std::tie(pred, grad) = model.predict_with_gradient(current, class_index);
        loss = pred.probs[class_index];
        if (!std::isfinite(loss)) throw NonFiniteLoss("phase2", it);
        if (loss < best_loss) {
            best_loss = loss;
            best = current;
        }
        if (monitor.converged(previous, loss)) break;
    }
    return best;
}

Explanation explain(const model::Classifier& model, const Field2D& image, int class_index,
                    const EngineConfig& cfg) {
    Phase1Result p1 = phase1(model, image, class_index, cfg);
    Explanation e;
    e.mask = derive_mask(p1.s);
    e.perturbed_phase2 = phase2(model, image, e.mask, class_index, cfg);
    e.breakdown = metrics::ape_d(model, image, e.perturbed_phase2, class_index);
    e.perturbed_phase1 = std::move(p1.perturbed);
    e.phase1_loss_trace = std::move(p1.loss_trace);
    return e;
}

} // namespace ape::engine
