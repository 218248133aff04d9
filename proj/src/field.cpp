#include "ape/field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ape {

Field2D::Field2D(int width, int height, double fill)
    : width_(width), height_(height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("Field2D: width and height must be >= 1");
    }
    values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Field2D::Field2D(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("Field2D: width and height must be >= 1");
    }
    if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw std::invalid_argument("Field2D: expected " + std::to_string(width * height) +
                                    " values, got " + std::to_string(values_.size()));
    }
}

void require_same_shape(const Field2D& a, const Field2D& b, std::string_view what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                    std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                    " vs " + std::to_string(b.width()) + "x" +
                                    std::to_string(b.height()) + ")");
    }
}

Field2D operator-(const Field2D& a, const Field2D& b) {
    require_same_shape(a, b, "Field2D subtraction");
    Field2D out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Field2D operator+(const Field2D& a, const Field2D& b) {
    require_same_shape(a, b, "Field2D addition");
    Field2D out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Field2D operator*(double s, const Field2D& f) {
    Field2D out = f;
    for (double& v : out.values()) v *= s;
    return out;
}

Field2D hadamard(const Field2D& a, const Field2D& b) {
    require_same_shape(a, b, "hadamard");
    Field2D out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

double sum(const Field2D& f) {
    double acc = 0.0;
    for (double v : f.values()) acc += v;
    return acc;
}

double min_value(const Field2D& f) {
    if (f.empty()) throw std::invalid_argument("min_value: empty field");
    return *std::min_element(f.values().begin(), f.values().end());
}

double max_value(const Field2D& f) {
    if (f.empty()) throw std::invalid_argument("max_value: empty field");
    return *std::max_element(f.values().begin(), f.values().end());
}

double max_abs(const Field2D& f) {
    double m = 0.0;
    for (double v : f.values()) m = std::max(m, std::abs(v));
    return m;
}

} // namespace ape
