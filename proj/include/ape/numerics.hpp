#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>

#include "ape/field.hpp"

namespace ape {

/// Anisotropic total variation with forward differences:
///   sum |f(x+1,y) - f(x,y)| + |f(x,y+1) - f(x,y)|
/// Neighbors outside the grid are skipped. Not normalized.
double total_variation(const Field2D& f);

/// A subgradient of total_variation, taking sign(0) = 0 at ties.
Field2D total_variation_subgradient(const Field2D& f);

/// Number of entries that are exactly nonzero (no tolerance).
std::size_t l0(const Field2D& f);

/// Elementwise clamp to [lo, hi]. Throws std::invalid_argument if lo > hi.
Field2D clip(const Field2D& f, double lo, double hi);

/// sign with sign(0) = 0.
inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct AdamHyper {
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

/// In-place bias-corrected Adam over flat buffers. `step` is the 1-based index
/// of the step being taken. All spans must have equal length.
void adam_update(std::span<double> m, std::span<double> v, std::span<const double> grad,
                 std::span<double> target, std::size_t step, const AdamHyper& hyper);

struct AdamState {
    std::size_t step = 0;
    Field2D m;
    Field2D v;
    AdamHyper hyper;

    /// Zero moments shaped like `like`.
    static AdamState zeros(const Field2D& like, const AdamHyper& hyper);
};

/// One Adam descent step on `target`. Returns the advanced state and the
/// updated target; the inputs are left untouched.
std::pair<AdamState, Field2D> adam_step(const AdamState& state, const Field2D& grad,
                                        const Field2D& target);

using ScalarFieldFn = std::function<double(const Field2D&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per element.
Field2D finite_diff_gradient(const ScalarFieldFn& f, const Field2D& at, double h);

/// max_i |a_i - b_i| / max(max_i |b_i|, floor). `b` is the reference.
double max_relative_error(const Field2D& a, const Field2D& b, double floor = 1e-12);

} // namespace ape
