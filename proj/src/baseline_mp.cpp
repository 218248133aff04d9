#include "ape/baseline_mp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ape/engine.hpp"
#include "ape/numerics.hpp"

namespace ape::mp {

std::string to_string(DeletionMode mode) {
    return mode == DeletionMode::kMinConst ? "min" : "blur";
}

DeletionMode deletion_mode_from_string(const std::string& name) {
    if (name == "min") return DeletionMode::kMinConst;
    if (name == "blur") return DeletionMode::kBlur;
    throw std::invalid_argument("unknown deletion mode '" + name + "' (expected min or blur)");
}

void MpConfig::validate() const {
    if (deletion == DeletionMode::kBlur && !(blur_sigma > 0.0)) {
        throw std::invalid_argument("mp: blur_sigma must be > 0");
    }
    if (!(sparsity_coeff >= 0.0) || !(tv_coeff >= 0.0)) {
        throw std::invalid_argument("mp: coefficients must be >= 0");
    }
    if (!(tv_gamma > 0.0)) throw std::invalid_argument("mp: tv_gamma must be > 0");
    if (!(lr > 0.0)) throw std::invalid_argument("mp: lr must be > 0");
    if (iters < 1) throw std::invalid_argument("mp: iters must be >= 1");
    if (!(threshold_scan_step > 0.0 && threshold_scan_step < 1.0)) {
        throw std::invalid_argument("mp: threshold_scan_step must be in (0, 1)");
    }
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += k[i + radius];
    }
    for (double& v : k) v /= total;
    return k;
}

Field2D blur(const Field2D& f, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int w = f.width();
    const int h = f.height();
    Field2D tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += k[i + radius] * f(std::clamp(x + i, 0, w - 1), y);
            }
            tmp(x, y) = acc;
        }
    }
    Field2D out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += k[i + radius] * tmp(x, std::clamp(y + i, 0, h - 1));
            }
            out(x, y) = acc;
        }
    }
    return out;
}

} // namespace

Field2D deletion_image(const Field2D& image, const MpConfig& cfg) {
    if (cfg.deletion == DeletionMode::kMinConst) {
        return Field2D(image.width(), image.height(), min_value(image));
    }
    if (!(cfg.blur_sigma > 0.0)) throw std::invalid_argument("mp: blur_sigma must be > 0");
    return blur(image, cfg.blur_sigma);
}

Field2D crossfade(const Field2D& image, const Field2D& reference, const Field2D& mask) {
    require_same_shape(image, reference, "crossfade");
    require_same_shape(image, mask, "crossfade");
    Field2D out(image.width(), image.height());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = mask[i] * image[i] + (1.0 - mask[i]) * reference[i];
    }
    return out;
}

double tv_power(const Field2D& f, double gamma) {
    if (gamma == 1.0) return total_variation(f);
    const int w = f.width();
    const int h = f.height();
    double tv = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double c = f(x, y);
            if (x + 1 < w) tv += std::pow(std::abs(f(x + 1, y) - c), gamma);
            if (y + 1 < h) tv += std::pow(std::abs(f(x, y + 1) - c), gamma);
        }
    }
    return tv;
}

Field2D tv_power_gradient(const Field2D& f, double gamma) {
    if (gamma == 1.0) return total_variation_subgradient(f);
    const int w = f.width();
    const int h = f.height();
    Field2D g(w, h, 0.0);
    auto pair = [&](int xa, int ya, int xb, int yb) {
        const double d = f(xb, yb) - f(xa, ya);
        const double s = gamma * std::pow(std::abs(d), gamma - 1.0) * sign0(d);
        g(xb, yb) += s;
        g(xa, ya) -= s;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) pair(x, y, x + 1, y);
            if (y + 1 < h) pair(x, y, x, y + 1);
        }
    }
    return g;
}

double mp_loss(const model::Classifier& model, const Field2D& image, const Field2D& reference,
               const Field2D& mask, int class_index, const MpConfig& cfg) {
    const double n = static_cast<double>(image.size());
    double deleted = 0.0;
    for (double m : mask.values()) deleted += 1.0 - m;
    return model.predict(crossfade(image, reference, mask)).probs[class_index] +
           cfg.sparsity_coeff / n * deleted + cfg.tv_coeff / n * tv_power(mask, cfg.tv_gamma);
}

std::pair<double, Field2D> mp_loss_and_gradient(const model::Classifier& model,
                                                const Field2D& image, const Field2D& reference,
                                                const Field2D& mask, int class_index,
                                                const MpConfig& cfg) {
    const double n = static_cast<double>(image.size());
    const Field2D phi = crossfade(image, reference, mask);
    auto [pred, dphi] = model.predict_with_gradient(phi, class_index);
    const Field2D dtv = tv_power_gradient(mask, cfg.tv_gamma);
    Field2D grad(image.width(), image.height());
    double deleted = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = dphi[i] * (image[i] - reference[i]) - cfg.sparsity_coeff / n +
                  cfg.tv_coeff / n * dtv[i];
        deleted += 1.0 - mask[i];
    }
    const double loss = pred.probs[class_index] + cfg.sparsity_coeff / n * deleted +
                        cfg.tv_coeff / n * tv_power(mask, cfg.tv_gamma);
    return {loss, std::move(grad)};
}

Field2D mp_optimize(const model::Classifier& model, const Field2D& image, int class_index,
                    const MpConfig& cfg) {
    cfg.validate();
    model.require_input_shape(image);
    const Field2D reference = deletion_image(image, cfg);
    Field2D mask(image.width(), image.height(), 1.0);
    AdamHyper hyper;
    hyper.lr = cfg.lr;
    AdamState state = AdamState::zeros(mask, hyper);
    for (int it = 0; it < cfg.iters; ++it) {
        auto [loss, grad] = mp_loss_and_gradient(model, image, reference, mask, class_index, cfg);
        if (!std::isfinite(loss)) throw engine::NonFiniteLoss("mp_optimize", it);
        auto [next_state, stepped] = adam_step(state, grad, mask);
        state = std::move(next_state);
        mask = clip(stepped, 0.0, 1.0);
    }
    return mask;
}

Field2D threshold_mask(const Field2D& soft_mask, double threshold) {
    Field2D out = soft_mask;
    for (double& v : out.values()) v = (1.0 - v) >= threshold ? 1.0 : 0.0;
    return out;
}

std::vector<double> threshold_grid(double step) {
    if (!(step > 0.0 && step < 1.0)) throw std::invalid_argument("threshold grid: step in (0,1)");
    std::vector<double> grid;
    for (std::size_t k = 1;; ++k) {
        const double t = static_cast<double>(k) * step;
        if (t >= 1.0) {
            grid.push_back(1.0);
            break;
        }
        grid.push_back(t);
    }
    return grid;
}

namespace {

// Binary masks along a threshold sweep depend only on how many pixels pass,
// so scores are cached per pass count.
struct ScanImage {
    const Field2D* image = nullptr;
    Field2D reference;
    std::vector<double> deletion_desc;     // sorted 1 - m, descending
    std::vector<std::size_t> order;        // pixel indices in that order
    std::vector<double> total_by_count;    // NaN until evaluated
    std::size_t passing = 0;               // pointer into deletion_desc
};

MpResult score(const model::Classifier& model, const Field2D& image, const Field2D& reference,
               const Field2D& soft_mask, double threshold, int class_index) {
    MpResult r;
    r.soft_mask = soft_mask;
    r.binary_mask = threshold_mask(soft_mask, threshold);
    Field2D keep = r.binary_mask;
    for (double& v : keep.values()) v = 1.0 - v;
    r.perturbed = crossfade(image, reference, keep);
    r.breakdown = metrics::ape_d(model, image, r.perturbed, class_index);
    return r;
}

} // namespace

ThresholdScan threshold_and_score(const model::Classifier& model, std::span<const Field2D> images,
                                  std::span<const Field2D> soft_masks, int class_index,
                                  const MpConfig& cfg) {
    cfg.validate();
    if (images.empty()) throw std::invalid_argument("threshold_and_score: no images");
    if (images.size() != soft_masks.size()) {
        throw std::invalid_argument("threshold_and_score: images and masks misaligned");
    }
    std::vector<ScanImage> scan(images.size());
    for (std::size_t j = 0; j < images.size(); ++j) {
        require_same_shape(images[j], soft_masks[j], "threshold_and_score");
        ScanImage& s = scan[j];
        s.image = &images[j];
        s.reference = deletion_image(images[j], cfg);
        const Field2D& m = soft_masks[j];
        s.order.resize(m.size());
        std::iota(s.order.begin(), s.order.end(), std::size_t{0});
        std::stable_sort(s.order.begin(), s.order.end(), [&](std::size_t a, std::size_t b) {
            return (1.0 - m[a]) > (1.0 - m[b]);
        });
        s.deletion_desc.reserve(m.size());
        for (std::size_t i : s.order) s.deletion_desc.push_back(1.0 - m[i]);
        s.total_by_count.assign(m.size() + 1, std::nan(""));
        s.passing = m.size();
    }

    const std::vector<double> grid = threshold_grid(cfg.threshold_scan_step);
    double best_threshold = grid.front();
    double best_mean = std::numeric_limits<double>::infinity();
    for (double t : grid) {
        double total = 0.0;
        for (ScanImage& s : scan) {
            while (s.passing > 0 && !(s.deletion_desc[s.passing - 1] >= t)) --s.passing;
            double& cached = s.total_by_count[s.passing];
            if (std::isnan(cached)) {
                Field2D keep(s.image->width(), s.image->height(), 1.0);
                for (std::size_t k = 0; k < s.passing; ++k) keep[s.order[k]] = 0.0;
                cached = metrics::ape_d(model, *s.image, crossfade(*s.image, s.reference, keep),
                                        class_index)
                             .total;
            }
            total += cached;
        }
        const double mean = total / static_cast<double>(scan.size());
        if (mean < best_mean) {
            best_mean = mean;
            best_threshold = t;
        }
    }

    ThresholdScan out;
    out.best_threshold = best_threshold;
    out.best_mean_total = best_mean;
    for (std::size_t j = 0; j < images.size(); ++j) {
        out.results.push_back(score(model, images[j], scan[j].reference, soft_masks[j],
                                    best_threshold, class_index));
    }
    return out;
}

} // namespace ape::mp
