#include "basil/model_vector.hpp"

#include <cmath>
#include <numeric>

#include "basil/errors.hpp"

namespace basil {

std::size_t LayerShape::size() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t parameter_count(const Shape& shape) {
    std::size_t n = 0;
    for (const auto& l : shape) n += l.size();
    return n;
}

ModelVector::ModelVector(Shape shape) : shape_(std::move(shape)), params_(parameter_count(shape_), 0.0) {}

ModelVector::ModelVector(Shape shape, std::vector<double> params)
    : shape_(std::move(shape)), params_(std::move(params)) {
    if (params_.size() != parameter_count(shape_))
        throw ConfigError("parameter count " + std::to_string(params_.size()) + " does not match shape total " +
                          std::to_string(parameter_count(shape_)));
}

ModelVector ModelVector::scalar(double v) { return flat({v}); }

ModelVector ModelVector::flat(std::vector<double> params) {
    Shape s{{"x", {params.size()}}};
    return ModelVector(std::move(s), std::move(params));
}

std::size_t ModelVector::layer_offset(std::size_t index) const {
    if (index >= shape_.size()) throw PreconditionError("layer index out of range");
    std::size_t off = 0;
    for (std::size_t i = 0; i < index; ++i) off += shape_[i].size();
    return off;
}

std::span<const double> ModelVector::layer(std::size_t index) const {
    return std::span<const double>(params_).subspan(layer_offset(index), shape_[index].size());
}

std::span<double> ModelVector::layer(std::size_t index) {
    return std::span<double>(params_).subspan(layer_offset(index), shape_[index].size());
}

bool ModelVector::all_finite() const {
    for (double v : params_)
        if (!std::isfinite(v)) return false;
    return true;
}

void ModelVector::require_composable(const ModelVector& other) const {
    if (!composable_with(other)) throw ConfigError("model shapes are not composable");
}

ModelVector& ModelVector::operator+=(const ModelVector& other) {
    require_composable(other);
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] += other.params_[i];
    return *this;
}

ModelVector& ModelVector::operator-=(const ModelVector& other) {
    require_composable(other);
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= other.params_[i];
    return *this;
}

ModelVector& ModelVector::operator*=(double s) {
    for (double& v : params_) v *= s;
    return *this;
}

ModelVector& ModelVector::axpy(double s, const ModelVector& other) {
    require_composable(other);
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] += s * other.params_[i];
    return *this;
}

ModelVector operator+(ModelVector a, const ModelVector& b) { return a += b; }
ModelVector operator-(ModelVector a, const ModelVector& b) { return a -= b; }
ModelVector operator*(double s, ModelVector a) { return a *= s; }

double dot(const ModelVector& a, const ModelVector& b) {
    if (!a.composable_with(b)) throw ConfigError("model shapes are not composable");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const ModelVector& a) { return std::sqrt(dot(a, a)); }

double squared_distance(const ModelVector& a, const ModelVector& b) {
    if (!a.composable_with(b)) throw ConfigError("model shapes are not composable");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double distance(const ModelVector& a, const ModelVector& b) { return std::sqrt(squared_distance(a, b)); }

ModelVector mean(std::span<const ModelVector* const> models) {
    if (models.empty()) throw PreconditionError("mean of an empty model set");
    ModelVector out(models.front()->shape());
    for (const auto* m : models) out += *m;
    out *= 1.0 / static_cast<double>(models.size());
    return out;
}

ModelVector mean(std::span<const ModelVector> models) {
    std::vector<const ModelVector*> ptrs;
    ptrs.reserve(models.size());
    for (const auto& m : models) ptrs.push_back(&m);
    return mean(std::span<const ModelVector* const>(ptrs));
}

}  // namespace basil
