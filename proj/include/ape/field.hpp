#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace ape {

/// Dense 2-D grid of doubles stored row-major. Images, perturbations,
/// smooth-binarization fields and masks all share this one type.
///
/// A default-constructed field is empty (0x0); every other field has
/// width >= 1, height >= 1 and exactly width*height values.
class Field2D {
public:
    Field2D() = default;
    Field2D(int width, int height, double fill = 0.0);
    Field2D(int width, int height, std::vector<double> values);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(int x, int y) { return values_[index(x, y)]; }
    double operator()(int x, int y) const { return values_[index(x, y)]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool same_shape(const Field2D& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    // Bitwise value equality (NaN never compares equal).
    friend bool operator==(const Field2D&, const Field2D&) = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// Throws std::invalid_argument naming `what` when shapes differ.
void require_same_shape(const Field2D& a, const Field2D& b, std::string_view what);

Field2D operator-(const Field2D& a, const Field2D& b);
Field2D operator+(const Field2D& a, const Field2D& b);
Field2D operator*(double s, const Field2D& f);

/// Elementwise product.
Field2D hadamard(const Field2D& a, const Field2D& b);

double sum(const Field2D& f);
double min_value(const Field2D& f);
double max_value(const Field2D& f);
double max_abs(const Field2D& f);

} // namespace ape
