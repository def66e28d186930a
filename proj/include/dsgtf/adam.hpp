#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsgtf/tensor.hpp"

namespace dsgtf {

// Bias-corrected Adam. One state covers the whole parameter set; accumulator
// shapes always match the parameters they belong to.
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor> m;  // first moment, per parameter
    std::vector<Tensor> v;  // second moment, per parameter

    static AdamState create(std::span<Tensor* const> params, double lr = 1e-4, double beta1 = 0.9,
                            double beta2 = 0.999, double epsilon = 1e-8);
};

// One in-place update of every parameter; increments the step counter even
// when all gradients are zero.
void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads);

}  // namespace dsgtf
