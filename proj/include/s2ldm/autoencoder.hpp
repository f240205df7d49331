#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s2ldm/layers.hpp"
#include "s2ldm/phantom.hpp"
#include "s2ldm/tensor.hpp"

namespace s2ldm {

struct AeLossWeights {
    double lambda_r = 1.0;
    double lambda_q = 1.0;
    double lambda_s = 0.1;
    double lambda_adv = 0.0;
};

struct AeConfig {
    int64_t latent_channels = 8;
    int64_t base_width = 16; // channel widths are {base, 2*base, 4*base}
    int64_t groups = 8;
    int64_t codebook_size = 128;
    double beta_commit = 0.25;
    double hf_beta = 1.0;
    double hf_sigma = 1.0;
    AeLossWeights weights;
    double sim_gamma = 1.0;
    double sim_floor = 1e-7;
    int64_t dead_code_steps = 200;
};

// One weight-shared encoder applied to both modalities: two stride-2 stages,
// so the latent is [latent_channels, h/4, w/4].
class SyncreticEncoder {
public:
    static constexpr int64_t kDownsampleFactor = 4;

    SyncreticEncoder() = default;
    SyncreticEncoder(const AeConfig& cfg, RngStream& rng);

    struct Cache {
        Tensor c1_in, c2_in, c3_in, c4_in; // conv inputs (c1_in is the [1,h,w] image)
        GroupNorm::Cache g1, g2, g3;
        Tensor gn1_out, gn2_out, gn3_out;  // silu inputs
    };

    Tensor forward(const NormalizedImage& x) const;
    Tensor forward(const NormalizedImage& x, Cache& cache) const;
    void backward(const Cache& cache, const Tensor& g_latent);

    std::vector<Param*> params();
    std::vector<std::pair<std::string, Param*>> named_params();

    int64_t latent_channels() const { return c4.cout; }

    Conv3x3 c1, c2, c3, c4;
    GroupNorm g1, g2, g3;
};

class CectDecoder {
public:
    CectDecoder() = default;
    CectDecoder(const AeConfig& cfg, RngStream& rng);

    struct Cache {
        Tensor cin_in;
        GroupNorm::Cache g1, g2, g3;
        Tensor gn1_out, gn2_out, gn3_out;
        Tensor u1_in, u2_in, cout_in; // cached layer inputs (u*: upsampled)
        Tensor pre_tanh;
    };

    NormalizedImage forward(const Tensor& latent) const;
    NormalizedImage forward(const Tensor& latent, Cache& cache) const;
    Tensor backward(const Cache& cache, const Tensor& g_image);

    std::vector<Param*> params();
    std::vector<std::pair<std::string, Param*>> named_params();

    Conv3x3 cin_, cout_;
    UpsampleConv3x3 u1, u2;
    GroupNorm g1, g2, g3;
};

struct Codebook {
    Param codes; // [K, C]
    std::vector<int64_t> usage_counts;
    std::vector<int64_t> stale_steps;

    Codebook() = default;
    Codebook(int64_t k, int64_t dim, RngStream& rng);

    int64_t size() const { return codes.value.dim(0); }
    int64_t dim() const { return codes.value.dim(1); }
};

struct QuantizeResult {
    Tensor quantized;
    std::vector<int64_t> indices; // per spatial location, row-major
    double loss = 0.0;            // codebook + commitment terms, mean over locations
};

// Nearest-code quantization (ties to the lowest index) with the VQ loss
//   ||sg(E) - code||^2 + beta_commit * ||E - sg(code)||^2
// averaged over spatial locations. Backward is straight-through.
QuantizeResult quantize(const Tensor& e, const Codebook& cb, double beta_commit = 0.25);

// Straight-through input gradient: g_quantized passes through unchanged, plus
// scale_q * d(commitment)/dE.
Tensor quantize_backward_input(const Tensor& e, const Codebook& cb,
                               const std::vector<int64_t>& indices, const Tensor& g_quantized,
                               double beta_commit, double scale_q);

// Accumulates scale_q * d(codebook term)/d(codes) into cb.codes.grad.
void quantize_backward_codebook(const Tensor& e, Codebook& cb,
                                const std::vector<int64_t>& indices, double scale_q);

// Unsharp masking: clamp(x + beta*(x - gaussian_blur(x, sigma)), -1, 1).
NormalizedImage high_freq_enhance(const NormalizedImage& xc, double beta = 1.0,
                                  double sigma = 1.0);

struct Autoencoder {
    AeConfig cfg;
    SyncreticEncoder enc;
    Codebook codebook;
    CectDecoder dec;

    Autoencoder() = default;
    Autoencoder(const AeConfig& cfg, uint64_t init_seed);

    std::vector<Param*> params();
    std::vector<std::pair<std::string, Param*>> named_params();
};

struct AutoLossComponents {
    double total = 0.0;
    double rec = 0.0;
    double quan = 0.0;
    double sim = 0.0;
};

// Composite loss lambda_r*L_rec + lambda_q*L_quan + lambda_s*L_sim, where
// L_rec is mean-L1 between decode(quantize(encode(x_c))) and the
// high-frequency-enhanced target. Throws DivergenceError on non-finite loss.
AutoLossComponents auto_loss(const Autoencoder& ae, const NormalizedImage& xn,
                             const NormalizedImage& xc);

struct PatchDiscriminator;

struct AutoLossBackwardResult {
    AutoLossComponents components;
    std::vector<int64_t> code_indices;
    Tensor e_c; // encoder output for x_c (used for dead-code reseeding)
};

// Forward + full backward; gradients of L_sim reach the shared encoder
// through both encode calls. When disc is non-null and lambda_adv > 0 the
// hinge generator term joins the reconstruction gradient and the
// discriminator's own gradients are accumulated from the hinge loss.
AutoLossBackwardResult auto_loss_backward(Autoencoder& ae, const NormalizedImage& xn,
                                          const NormalizedImage& xc,
                                          PatchDiscriminator* disc = nullptr);

// Small patch discriminator (three convolutions; output is a spatial grid).
struct PatchDiscriminator {
    Conv3x3 c1, c2, c3;

    PatchDiscriminator() = default;
    explicit PatchDiscriminator(RngStream& rng);

    struct Cache {
        Tensor c1_in, c2_in, c3_in;
        Tensor r1_in, r2_in; // relu inputs
    };

    Tensor forward(const Tensor& img) const; // img [1,h,w] -> logits grid
    Tensor forward(const Tensor& img, Cache& cache) const;
    Tensor backward(const Cache& cache, const Tensor& g_logits);

    std::vector<Param*> params();
};

struct HingeLosses {
    double d_loss = 0.0;      // 0.5 * (real + fake hinge terms)
    double g_loss = 0.0;      // mean relu(1 - D(fake))
    double d_real_term = 0.0; // mean relu(1 - D(real))
    double d_fake_term = 0.0; // mean relu(1 + D(fake))
};

HingeLosses patch_disc_loss(const Tensor& x_real, const Tensor& x_fake, PatchDiscriminator& disc);

struct AeStepRecord {
    double total = 0.0, rec = 0.0, quan = 0.0, sim = 0.0;
};

// One optimization step over a batch of normalized (x_n, x_c) pairs. The
// discriminator is consulted only when lambda_adv > 0 and disc is non-null;
// with lambda_adv == 0 the adversarial machinery is never touched.
AeStepRecord ae_train_step(Autoencoder& ae,
                           const std::vector<std::pair<NormalizedImage, NormalizedImage>>& batch,
                           const AdamwConfig& opt, RngStream& reseed_rng,
                           PatchDiscriminator* disc = nullptr,
                           const AdamwConfig* disc_opt = nullptr);

// Quantized latent of the non-contrast image; no CECT input exists.
Tensor encode_for_inference(const NormalizedImage& xn, const SyncreticEncoder& enc,
                            const Codebook& cb);

} // namespace s2ldm
