#include "dsgtf/tensor.hpp"

#include <cmath>
#include <numeric>

namespace dsgtf {

namespace {

std::size_t shape_product(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
        n *= d;
    }
    return s.empty() ? 0 : n;
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_product(shape_) != data_.size())
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void ensure_finite(const Tensor& t, const char* op) {
    if (!t.all_finite())
        throw NumericError(std::string(op) + ": produced a non-finite value in tensor " + t.shape_string());
}

void ensure_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace dsgtf
