#pragma once

// Finite-difference harnesses shared by the unit tests and the acceptance
// suite. All checks are against central differences in double precision.

#include <utility>
#include <vector>

#include "s2ldm/layers.hpp"
#include "s2ldm/rng.hpp"
#include "s2ldm/tensor.hpp"

namespace s2ldm::test {

inline double dot_all(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

inline Tensor random_tensor_g(std::vector<int64_t> dims, RngStream& rng, double scale = 1.0) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.next_gaussian();
    return t;
}

inline double layer_input_grad_err(Layer& layer, const Tensor& x, const Tensor* aux,
                                   RngStream& rng) {
    auto [y0, c0] = layer.forward(x, aux);
    const Tensor proj = random_tensor_g(y0.dims(), rng);
    ScalarFn f;
    f.value = [&](const Tensor& xx) {
        auto [y, c] = layer.forward(xx, aux);
        return dot_all(proj, y);
    };
    f.grad = [&](const Tensor& xx) {
        auto [y, c] = layer.forward(xx, aux);
        zero_grads(layer.params());
        return layer.backward(c, proj, nullptr);
    };
    return grad_check(f, x);
}

inline double layer_param_grad_err(Layer& layer, const Tensor& x, const Tensor* aux,
                                   RngStream& rng) {
    const std::vector<Param*> params = layer.params();
    if (params.empty()) return 0.0;
    auto [y0, c0] = layer.forward(x, aux);
    const Tensor proj = random_tensor_g(y0.dims(), rng);
    const Tensor theta0 = flatten_values(params);
    ScalarFn f;
    f.value = [&, params](const Tensor& th) {
        load_values(params, th);
        auto [y, c] = layer.forward(x, aux);
        const double v = dot_all(proj, y);
        load_values(params, theta0);
        return v;
    };
    f.grad = [&, params](const Tensor& th) {
        load_values(params, th);
        zero_grads(params);
        auto [y, c] = layer.forward(x, aux);
        layer.backward(c, proj, nullptr);
        Tensor g = flatten_grads(params);
        load_values(params, theta0);
        return g;
    };
    return grad_check(f, theta0);
}

// FD of a scalar loss over a parameter set, with the analytic gradient
// produced by `backward` (which must zero and then accumulate grads).
template <typename ValueFn, typename BackwardFn>
double param_set_grad_err(const std::vector<Param*>& params, ValueFn&& value,
                          BackwardFn&& backward, double h = 1e-4) {
    const Tensor theta0 = flatten_values(params);
    ScalarFn f;
    f.value = [&, params](const Tensor& th) {
        load_values(params, th);
        const double v = value();
        load_values(params, theta0);
        return v;
    };
    f.grad = [&, params](const Tensor& th) {
        load_values(params, th);
        zero_grads(params);
        backward();
        Tensor g = flatten_grads(params);
        load_values(params, theta0);
        return g;
    };
    return grad_check(f, theta0, h);
}

} // namespace s2ldm::test
