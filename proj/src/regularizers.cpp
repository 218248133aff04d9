#include "ape/regularizers.hpp"

#include <cmath>
#include <stdexcept>

#include "ape/numerics.hpp"

namespace ape {

void BinarizeParams::validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("binarize: gamma must be > 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw std::invalid_argument("binarize: epsilon must be in (0, 1)");
    }
}

Field2D hard_binarize(const Field2D& f) {
    Field2D out = f;
    for (double& v : out.values()) v = v != 0.0 ? 1.0 : 0.0;
    return out;
}

SField smooth_binarize(const Field2D& image, const Field2D& perturbed, const BinarizeParams& p) {
    require_same_shape(image, perturbed, "smooth_binarize");
    p.validate();
    SField s{Field2D(image.width(), image.height())};
    for (std::size_t i = 0; i < image.size(); ++i) {
        s.values[i] = std::tanh(0.5 * p.gamma * (std::abs(image[i] - perturbed[i]) - p.epsilon));
    }
    return s;
}

Field2D smooth_binarize_grad(const Field2D& image, const Field2D& perturbed,
                             const BinarizeParams& p) {
    const SField s = smooth_binarize(image, perturbed, p);
    Field2D g(image.width(), image.height());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double sv = s.values[i];
        g[i] = 0.5 * p.gamma * (1.0 - sv) * (1.0 + sv) * sign0(perturbed[i] - image[i]);
    }
    return g;
}

Field2D mask_from_s(const SField& s) {
    Field2D out = s.values;
    for (double& v : out.values()) v = v >= 0.0 ? 1.0 : 0.0;
    return out;
}

} // namespace ape
