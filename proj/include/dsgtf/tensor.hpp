#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsgtf {

// Shape/dimension violations (reports both shapes in the message).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf surfaced at the operation that produced it.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major real tensor. Values are doubles; finiteness is enforced
// at the op level, not per element access.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape);                     // zero-filled
    Tensor(Shape shape, std::vector<double> values);  // takes ownership

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);

    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return rank() < 2 ? 0 : shape_[1]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }

    double& operator[](std::size_t i) {
        assert(i < data_.size());
        return data_[i];
    }
    double operator[](std::size_t i) const {
        assert(i < data_.size());
        return data_[i];
    }
    double& at(std::size_t r, std::size_t c) {
        assert(rank() == 2 && r < shape_[0] && c < shape_[1]);
        return data_[r * shape_[1] + c];
    }
    double at(std::size_t r, std::size_t c) const {
        assert(rank() == 2 && r < shape_[0] && c < shape_[1]);
        return data_[r * shape_[1] + c];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_string() const { return shape_str(shape_); }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Throws NumericError naming `op` if any entry of `t` is NaN or Inf.
void ensure_finite(const Tensor& t, const char* op);

// Throws ShapeError naming both shapes unless they are equal.
void ensure_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace dsgtf
