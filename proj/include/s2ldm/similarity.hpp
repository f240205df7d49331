#pragma once

#include <cstdint>

#include "s2ldm/tensor.hpp"

namespace s2ldm {

// Per-location cosine similarity between two latents, channels reduced away.
struct SimilarityMap {
    Tensor values; // [h,w], each in [-1,1]
};

// Epoch-annealed mask min(alpha*tau/total + (1+s)/2, 1). Values saturate to
// exactly 1.0 once alpha*tau/total >= 1, which for alpha = 2 is the entire
// second half of training. Used as a constant (no gradient) in stage 2.
struct DynamicMask {
    Tensor values; // [h,w]
    int64_t tau = 0;
    int64_t total = 1;
    double alpha = 2.0;
};

SimilarityMap cosine_map(const Tensor& e_a, const Tensor& e_b, double eps = 1e-8);

struct SimLossResult {
    double loss = 0.0;
    Tensor grad_a, grad_b;
};

// Focal-style weighted negative log similarity:
//   -(1/HW) * sum_p ((1-s_p)/2)^gamma * log(max((1+s_p)/2, floor))
// with gradients through both the weight and log terms into both latents.
SimLossResult adaptive_sim_loss(const Tensor& e_n, const Tensor& e_c, double gamma = 1.0,
                                double floor = 1e-7);

// Loss only, no gradients (evaluation paths).
double adaptive_sim_loss_value(const Tensor& e_n, const Tensor& e_c, double gamma = 1.0,
                               double floor = 1e-7);

DynamicMask dynamic_mask(const SimilarityMap& sim, int64_t tau, int64_t total, double alpha = 2.0);

// Channel-broadcast multiplication of a latent by a mask.
Tensor apply_mask(const Tensor& e, const DynamicMask& mask);
Tensor apply_mask(const Tensor& e, const Tensor& mask_values);

DynamicMask all_ones_mask(int64_t h, int64_t w);

} // namespace s2ldm
