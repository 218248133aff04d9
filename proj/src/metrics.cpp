#include "ape/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ape/numerics.hpp"
#include "ape/regularizers.hpp"

namespace ape::metrics {

namespace {

void check_inputs(const model::Classifier& model, const Field2D& image, const Field2D& perturbed,
                  const ApeWeights& weights) {
    require_same_shape(image, perturbed, "ape");
    model.require_input_shape(image);
    weights.validate();
    for (double v : perturbed.values()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("ape: perturbed image outside [0,1], clip it first");
        }
    }
}

ApeBreakdown weigh(double sparsity, double smoothness, double classification,
                   const ApeWeights& w) {
    return ApeBreakdown{sparsity, smoothness, classification,
                        w.sparsity * sparsity + w.smoothness * smoothness +
                            w.classification * classification};
}

void require_binary(const Field2D& mask, const char* what) {
    for (double v : mask.values()) {
        if (v != 0.0 && v != 1.0) throw std::invalid_argument(std::string(what) + ": non-binary mask");
    }
}

} // namespace

void ApeWeights::validate() const {
    if (sparsity < 0.0 || smoothness < 0.0 || classification < 0.0) {
        throw std::invalid_argument("ape weights must be non-negative");
    }
    if (sparsity == 0.0 && smoothness == 0.0 && classification == 0.0) {
        throw std::invalid_argument("ape weights must not all be zero");
    }
}

ApeBreakdown ape_d(const model::Classifier& model, const Field2D& image, const Field2D& perturbed,
                   int class_index, const ApeWeights& weights) {
    check_inputs(model, image, perturbed, weights);
    const double n = static_cast<double>(image.size());
    const Field2D diff = image - perturbed;
    return weigh(static_cast<double>(l0(diff)) / n, total_variation(hard_binarize(diff)) / n,
                 model.predict(perturbed).probs[class_index], weights);
}

ApeBreakdown ape_s(const model::Classifier& model, const Field2D& image, const Field2D& perturbed,
                   int class_index, const ApeWeights& weights) {
    check_inputs(model, image, perturbed, weights);
    const double n = static_cast<double>(image.size());
    Field2D kept = hard_binarize(image - perturbed);
    for (double& v : kept.values()) v = 1.0 - v;
    const double p_hat = model.predict(perturbed).probs[class_index];
    const double p = model.predict(image).probs[class_index];
    return weigh(static_cast<double>(l0(kept)) / n, total_variation(kept) / n, std::abs(p_hat - p),
                 weights);
}

Labeling connected_components(const Field2D& mask) {
    require_binary(mask, "connected_components");
    const int w = mask.width();
    const int h = mask.height();
    Labeling out{Field2D(w, h, 0.0), 0};
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask(x, y) == 0.0 || out.labels(x, y) != 0.0) continue;
            const double label = ++out.count;
            out.labels(x, y) = label;
            stack.emplace_back(x, y);
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                const int nx[4] = {cx + 1, cx - 1, cx, cx};
                const int ny[4] = {cy, cy, cy + 1, cy - 1};
                for (int k = 0; k < 4; ++k) {
                    if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
                    if (mask(nx[k], ny[k]) == 0.0 || out.labels(nx[k], ny[k]) != 0.0) continue;
                    out.labels(nx[k], ny[k]) = label;
                    stack.emplace_back(nx[k], ny[k]);
                }
            }
        }
    }
    return out;
}

CcReport cc_hit_rate(const Field2D& mask, const Field2D& gt_mask) {
    require_same_shape(mask, gt_mask, "cc_hit_rate");
    require_binary(gt_mask, "cc_hit_rate");
    const Labeling cc = connected_components(mask);
    std::vector<bool> hit(static_cast<std::size_t>(cc.count) + 1, false);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (cc.labels[i] != 0.0 && gt_mask[i] != 0.0) hit[static_cast<std::size_t>(cc.labels[i])] = true;
    }
    CcReport r;
    r.component_count = cc.count;
    for (std::size_t k = 1; k < hit.size(); ++k) r.hit_count += hit[k] ? 1 : 0;
    r.hit_rate = cc.count == 0 ? 0.0 : static_cast<double>(r.hit_count) / cc.count;
    return r;
}

} // namespace ape::metrics
