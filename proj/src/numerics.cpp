#include "ape/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ape {

double total_variation(const Field2D& f) {
    const int w = f.width();
    const int h = f.height();
    double tv = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double c = f(x, y);
            if (x + 1 < w) tv += std::abs(f(x + 1, y) - c);
            if (y + 1 < h) tv += std::abs(f(x, y + 1) - c);
        }
    }
    return tv;
}

Field2D total_variation_subgradient(const Field2D& f) {
    const int w = f.width();
    const int h = f.height();
    Field2D g(w, h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double c = f(x, y);
            if (x + 1 < w) {
                const double s = sign0(f(x + 1, y) - c);
                g(x + 1, y) += s;
                g(x, y) -= s;
            }
            if (y + 1 < h) {
                const double s = sign0(f(x, y + 1) - c);
                g(x, y + 1) += s;
                g(x, y) -= s;
            }
        }
    }
    return g;
}

std::size_t l0(const Field2D& f) {
    return static_cast<std::size_t>(
        std::count_if(f.values().begin(), f.values().end(), [](double v) { return v != 0.0; }));
}

Field2D clip(const Field2D& f, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("clip: invalid range, lo > hi");
    Field2D out = f;
    for (double& v : out.values()) v = std::min(hi, std::max(lo, v));
    return out;
}

void adam_update(std::span<double> m, std::span<double> v, std::span<const double> grad,
                 std::span<double> target, std::size_t step, const AdamHyper& hyper) {
    if (m.size() != grad.size() || v.size() != grad.size() || target.size() != grad.size()) {
        throw std::invalid_argument("adam_update: dimension mismatch");
    }
    if (step == 0) throw std::invalid_argument("adam_update: step is 1-based");
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        target[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps_hat);
    }
}

AdamState AdamState::zeros(const Field2D& like, const AdamHyper& hyper) {
    AdamState s;
    s.m = Field2D(like.width(), like.height(), 0.0);
    s.v = Field2D(like.width(), like.height(), 0.0);
    s.hyper = hyper;
    return s;
}

std::pair<AdamState, Field2D> adam_step(const AdamState& state, const Field2D& grad,
                                        const Field2D& target) {
    require_same_shape(grad, target, "adam_step");
    require_same_shape(state.m, grad, "adam_step moments");
    require_same_shape(state.v, grad, "adam_step moments");
    AdamState next = state;
    Field2D out = target;
    next.step += 1;
    adam_update(next.m.values(), next.v.values(), grad.values(), out.values(), next.step,
                next.hyper);
    return {std::move(next), std::move(out)};
}

Field2D finite_diff_gradient(const ScalarFieldFn& f, const Field2D& at, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
    Field2D probe = at;
    Field2D g(at.width(), at.height(), 0.0);
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double x = at[i];
        probe[i] = x + h;
        const double fp = f(probe);
        probe[i] = x - h;
        const double fm = f(probe);
        probe[i] = x;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double max_relative_error(const Field2D& a, const Field2D& b, double floor) {
    require_same_shape(a, b, "max_relative_error");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    return diff / std::max(max_abs(b), floor);
}

} // namespace ape
