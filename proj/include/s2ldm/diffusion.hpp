#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s2ldm/autoencoder.hpp"
#include "s2ldm/layers.hpp"
#include "s2ldm/rng.hpp"
#include "s2ldm/similarity.hpp"
#include "s2ldm/tensor.hpp"

namespace s2ldm {

// Linear beta schedule with derived alpha and cumulative-product arrays.
// Arrays are 0-indexed: beta[t-1] belongs to timestep t in [1, T].
struct NoiseSchedule {
    int64_t T = 0;
    std::vector<double> beta, alpha, alpha_bar;

    double beta_at(int64_t t) const { return beta[static_cast<size_t>(t - 1)]; }
    double alpha_at(int64_t t) const { return alpha[static_cast<size_t>(t - 1)]; }
    double alpha_bar_at(int64_t t) const { return alpha_bar[static_cast<size_t>(t - 1)]; }
};

NoiseSchedule make_schedule(int64_t T = 1000, double beta_1 = 1e-4, double beta_T = 0.02);

// Closed-form forward noising: sqrt(abar_t)*z0 + sqrt(1-abar_t)*eps.
Tensor q_sample(const Tensor& z0, int64_t t, const Tensor& eps, const NoiseSchedule& sched);

struct DenoiserConfig {
    int64_t latent_channels = 8;
    int64_t base_width = 16; // widths {base, 2*base, 4*base}
    int64_t temb_dim = 64;
    int64_t groups = 8;
};

// Small U-Net noise predictor: two downsampling stages, two middle residual
// blocks, two upsampling stages with additive skips, sinusoidal timestep
// embedding projected into every residual block. The output convolution is
// zero-initialized so a fresh denoiser predicts exactly zero.
class Denoiser {
public:
    Denoiser() = default;
    Denoiser(const DenoiserConfig& cfg, uint64_t init_seed);

    struct Cache;

    Tensor forward(const Tensor& z, int64_t t) const;
    Tensor forward(const Tensor& z, int64_t t, Cache& cache) const;
    // Accumulates parameter gradients; returns the input gradient.
    Tensor backward(const Cache& cache, const Tensor& gout);

    std::vector<Param*> params();
    std::vector<std::pair<std::string, Param*>> named_params();

    const DenoiserConfig& config() const { return cfg_; }

    struct Cache {
        Tensor temb_raw;           // sinusoidal embedding, l1 input
        Tensor l1_out;             // silu input
        Tensor l2_in;              // silu output, l2 input
        Tensor conv_in_cache;      // z
        ResidualBlock::Cache r1, r2, m1, m2, ru2, ru1;
        Tensor down1_in, down2_in; // also the skip tensors
        Tensor up2_in, up1_in;     // cached upsampled inputs
        GroupNorm::Cache gout_c;
        Tensor gnout_out, conv_out_in;
    };

private:
    DenoiserConfig cfg_;
    Conv3x3 conv_in_, conv_out_;
    Conv3x3 down1_, down2_;
    UpsampleConv3x3 up1_, up2_;
    ResidualBlock res1_, res2_, mid1_, mid2_, res_up2_, res_up1_;
    GroupNorm gn_out_;
    Linear temb_l1_, temb_l2_;
};

struct DiffLossResult {
    double loss = 0.0;
    int64_t t = 0;
    double mask_mean = 0.0;
};

// Masked diffusion objective: the clean latent is E_n scaled feature-wise by
// the dynamic similarity mask; t is drawn uniformly from {1..T}; loss is the
// mean squared error between the drawn noise and the prediction. Gradients
// reach only the denoiser (the latents and mask are constants).
DiffLossResult diff_loss(const Tensor& e_n, const Tensor& e_c, int64_t tau, int64_t total_epochs,
                         Denoiser& denoiser, const NoiseSchedule& sched, RngStream& stream,
                         double alpha = 2.0, bool accumulate_grads = true);

// Mean squared error between noise and prediction (the Eq. objective body).
double eps_mse(const Tensor& eps, const Tensor& eps_hat);

// One ancestral reverse step. noise may be null only at t = 1, where the
// step is deterministic.
Tensor ddpm_reverse_step(const Tensor& z_t, int64_t t, const Tensor& eps_hat,
                         const NoiseSchedule& sched, const Tensor* noise);

struct SamplerConfig {
    int64_t t_start = 0; // 0 means the pure autoencoder path (no diffusion)
    uint64_t seed = 0;
};

// NCCT -> CECT translation from the non-contrast image alone: encode, apply
// the all-ones mask, noise to t_start, denoise back, quantize, decode.
// Deterministic given cfg.seed. latent_scale matches the value the denoiser
// was trained with (stored in its checkpoint).
NormalizedImage translate(const NormalizedImage& xn, const Autoencoder& ae,
                          const Denoiser& denoiser, const NoiseSchedule& sched,
                          const SamplerConfig& cfg, double latent_scale = 1.0);

} // namespace s2ldm
