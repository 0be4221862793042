#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace basil {

struct LayerShape {
    std::string name;
    std::vector<std::size_t> dims;

    std::size_t size() const;
    bool operator==(const LayerShape&) const = default;
};

using Shape = std::vector<LayerShape>;

std::size_t parameter_count(const Shape& shape);

// Flat parameter vector plus the layer layout it was built from. Two
// vectors can be combined only if their shapes are identical.
class ModelVector {
public:
    ModelVector() = default;
    explicit ModelVector(Shape shape);  // zero-filled
    ModelVector(Shape shape, std::vector<double> params);

    static ModelVector scalar(double v);
    static ModelVector flat(std::vector<double> params);  // single layer "x"

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return params_.size(); }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }
    double operator[](std::size_t i) const { return params_[i]; }
    double& operator[](std::size_t i) { return params_[i]; }

    // [begin, end) of each layer inside params().
    std::span<const double> layer(std::size_t index) const;
    std::span<double> layer(std::size_t index);
    std::size_t layer_offset(std::size_t index) const;

    bool composable_with(const ModelVector& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    ModelVector& operator+=(const ModelVector& other);
    ModelVector& operator-=(const ModelVector& other);
    ModelVector& operator*=(double s);
    // this += s * other
    ModelVector& axpy(double s, const ModelVector& other);

    bool operator==(const ModelVector&) const = default;

private:
    void require_composable(const ModelVector& other) const;

    Shape shape_;
    std::vector<double> params_;
};

ModelVector operator+(ModelVector a, const ModelVector& b);
ModelVector operator-(ModelVector a, const ModelVector& b);
ModelVector operator*(double s, ModelVector a);

double dot(const ModelVector& a, const ModelVector& b);
double norm(const ModelVector& a);
double distance(const ModelVector& a, const ModelVector& b);
double squared_distance(const ModelVector& a, const ModelVector& b);

// Arithmetic mean; throws PreconditionError on an empty input.
ModelVector mean(std::span<const ModelVector* const> models);
ModelVector mean(std::span<const ModelVector> models);

}  // namespace basil
