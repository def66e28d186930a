#include "dsgtf/adam.hpp"

#include <cmath>

namespace dsgtf {

AdamState AdamState::create(std::span<Tensor* const> params, double lr, double beta1, double beta2,
                            double epsilon) {
    AdamState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.push_back(Tensor::zeros(p->shape()));
        s.v.push_back(Tensor::zeros(p->shape()));
    }
    return s;
}

void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: got " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, state holds " +
                         std::to_string(state.m.size()));

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        ensure_same_shape(p, g, "adam_step");
        ensure_same_shape(p, state.m[i], "adam_step");

        double* pm = state.m[i].data();
        double* pv = state.v[i].data();
        double* pp = p.data();
        const double* pg = g.data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            pm[j] = state.beta1 * pm[j] + (1.0 - state.beta1) * pg[j];
            pv[j] = state.beta2 * pv[j] + (1.0 - state.beta2) * pg[j] * pg[j];
            const double mhat = pm[j] / bc1;
            const double vhat = pv[j] / bc2;
            pp[j] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
        ensure_finite(p, "adam_step");
    }
}

}  // namespace dsgtf
