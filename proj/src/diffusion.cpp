#include "s2ldm/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "s2ldm/errors.hpp"
#include "s2ldm/kernels.hpp"

namespace s2ldm {

NoiseSchedule make_schedule(int64_t T, double beta_1, double beta_T) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta_1 > 0.0) || !(beta_1 < beta_T) || !(beta_T < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_1 < beta_T < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int64_t t = 1; t <= T; ++t) {
        const double frac = T > 1 ? static_cast<double>(t - 1) / static_cast<double>(T - 1) : 0.0;
        const double b = beta_1 + (beta_T - beta_1) * frac;
        s.beta[static_cast<size_t>(t - 1)] = b;
        s.alpha[static_cast<size_t>(t - 1)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t - 1)] = prod;
    }
    return s;
}

static void check_t(int64_t t, const NoiseSchedule& sched, const char* who) {
    if (t < 1 || t > sched.T)
        throw std::invalid_argument(std::string(who) + ": t = " + std::to_string(t) +
                                    " outside [1, " + std::to_string(sched.T) + "]");
}

Tensor q_sample(const Tensor& z0, int64_t t, const Tensor& eps, const NoiseSchedule& sched) {
    check_t(t, sched, "q_sample");
    require_same_shape(z0, eps, "q_sample");
    const double abar = sched.alpha_bar_at(t);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Tensor z(z0.dims());
    for (int64_t i = 0; i < z.numel(); ++i) z[i] = a * z0[i] + b * eps[i];
    return z;
}

// --------------------------------------------------------------------------
// Denoiser

Denoiser::Denoiser(const DenoiserConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    RngStream rng(init_seed, 20);
    const int64_t bw = cfg.base_width;
    conv_in_ = Conv3x3(cfg.latent_channels, bw, 1, rng);
    res1_ = ResidualBlock(bw, cfg.temb_dim, cfg.groups, rng);
    down1_ = Conv3x3(bw, 2 * bw, 2, rng);
    res2_ = ResidualBlock(2 * bw, cfg.temb_dim, cfg.groups, rng);
    down2_ = Conv3x3(2 * bw, 4 * bw, 2, rng);
    mid1_ = ResidualBlock(4 * bw, cfg.temb_dim, cfg.groups, rng);
    mid2_ = ResidualBlock(4 * bw, cfg.temb_dim, cfg.groups, rng);
    up2_ = UpsampleConv3x3(4 * bw, 2 * bw, rng);
    res_up2_ = ResidualBlock(2 * bw, cfg.temb_dim, cfg.groups, rng);
    up1_ = UpsampleConv3x3(2 * bw, bw, rng);
    res_up1_ = ResidualBlock(bw, cfg.temb_dim, cfg.groups, rng);
    gn_out_ = GroupNorm(bw, cfg.groups);
    temb_l1_ = Linear(cfg.temb_dim, cfg.temb_dim, rng);
    temb_l2_ = Linear(cfg.temb_dim, cfg.temb_dim, rng);
    // Zero-initialized output projection: a fresh denoiser predicts zero.
    conv_out_ = Conv3x3(bw, cfg.latent_channels, 1, rng, /*zero_init=*/true);
}

Tensor Denoiser::forward(const Tensor& z, int64_t t) const {
    Cache scratch;
    return forward(z, t, scratch);
}

Tensor Denoiser::forward(const Tensor& z, int64_t t, Cache& cache) const {
    if (z.ndim() != 3 || z.dim(0) != cfg_.latent_channels)
        throw std::invalid_argument("Denoiser: latent shape mismatch " + shape_str(z));
    if (z.dim(1) % 4 != 0 || z.dim(2) % 4 != 0)
        throw std::invalid_argument("Denoiser: latent dims must be divisible by 4");

    cache.temb_raw = sinusoidal_time_embed(static_cast<double>(t), cfg_.temb_dim);
    cache.l1_out = temb_l1_.forward(cache.temb_raw);
    cache.l2_in = silu(cache.l1_out);
    const Tensor temb = temb_l2_.forward(cache.l2_in);

    Tensor h = conv_in_.forward(z, cache.conv_in_cache);
    h = res1_.forward(h, temb, cache.r1);
    cache.down1_in = h;
    h = down1_.forward(h);
    h = res2_.forward(h, temb, cache.r2);
    cache.down2_in = h;
    h = down2_.forward(h);
    h = mid1_.forward(h, temb, cache.m1);
    h = mid2_.forward(h, temb, cache.m2);
    h = up2_.forward(h, cache.up2_in);
    kernels::ew_add(h.data(), cache.down2_in.data(), h.numel(), h.data());
    h = res_up2_.forward(h, temb, cache.ru2);
    h = up1_.forward(h, cache.up1_in);
    kernels::ew_add(h.data(), cache.down1_in.data(), h.numel(), h.data());
    h = res_up1_.forward(h, temb, cache.ru1);
    cache.gnout_out = gn_out_.forward(h, cache.gout_c);
    cache.conv_out_in = silu(cache.gnout_out);
    return conv_out_.forward(cache.conv_out_in);
}

Tensor Denoiser::backward(const Cache& cache, const Tensor& gout) {
    Tensor gtemb({cfg_.temb_dim});

    Tensor g = conv_out_.backward(cache.conv_out_in, gout);
    g = silu_backward(cache.gnout_out, g);
    g = gn_out_.backward(cache.gout_c, g);
    g = res_up1_.backward(cache.ru1, g, gtemb);
    Tensor g_skip1 = g; // addition fans out
    g = up1_.backward(cache.up1_in, g);
    g = res_up2_.backward(cache.ru2, g, gtemb);
    Tensor g_skip2 = g;
    g = up2_.backward(cache.up2_in, g);
    g = mid2_.backward(cache.m2, g, gtemb);
    g = mid1_.backward(cache.m1, g, gtemb);
    g = down2_.backward(cache.down2_in, g);
    kernels::ew_add(g.data(), g_skip2.data(), g.numel(), g.data());
    g = res2_.backward(cache.r2, g, gtemb);
    g = down1_.backward(cache.down1_in, g);
    kernels::ew_add(g.data(), g_skip1.data(), g.numel(), g.data());
    g = res1_.backward(cache.r1, g, gtemb);
    Tensor g_z = conv_in_.backward(cache.conv_in_cache, g);

    Tensor g_l2in = temb_l2_.backward(cache.l2_in, gtemb);
    Tensor g_l1out = silu_backward(cache.l1_out, g_l2in);
    temb_l1_.backward(cache.temb_raw, g_l1out); // timestep gradient discarded
    return g_z;
}

std::vector<Param*> Denoiser::params() {
    std::vector<Param*> all = {&conv_in_.w, &conv_in_.b};
    for (ResidualBlock* rb : {&res1_, &res2_, &mid1_, &mid2_, &res_up2_, &res_up1_})
        for (Param* p : rb->params()) all.push_back(p);
    for (Param* p : {&down1_.w, &down1_.b, &down2_.w, &down2_.b, &up2_.conv.w, &up2_.conv.b,
                     &up1_.conv.w, &up1_.conv.b, &gn_out_.gamma, &gn_out_.beta, &temb_l1_.w,
                     &temb_l1_.b, &temb_l2_.w, &temb_l2_.b, &conv_out_.w, &conv_out_.b})
        all.push_back(p);
    return all;
}

std::vector<std::pair<std::string, Param*>> Denoiser::named_params() {
    std::vector<std::pair<std::string, Param*>> all;
    auto add_block = [&all](const std::string& prefix, ResidualBlock& rb) {
        const char* names[] = {"gn1.gamma", "gn1.beta", "conv1.w", "conv1.b", "tproj.w",
                               "tproj.b",   "gn2.gamma", "gn2.beta", "conv2.w", "conv2.b"};
        auto ps = rb.params();
        for (size_t i = 0; i < ps.size(); ++i) all.emplace_back(prefix + "." + names[i], ps[i]);
    };
    all.emplace_back("conv_in.w", &conv_in_.w);
    all.emplace_back("conv_in.b", &conv_in_.b);
    add_block("res1", res1_);
    all.emplace_back("down1.w", &down1_.w);
    all.emplace_back("down1.b", &down1_.b);
    add_block("res2", res2_);
    all.emplace_back("down2.w", &down2_.w);
    all.emplace_back("down2.b", &down2_.b);
    add_block("mid1", mid1_);
    add_block("mid2", mid2_);
    all.emplace_back("up2.w", &up2_.conv.w);
    all.emplace_back("up2.b", &up2_.conv.b);
    add_block("res_up2", res_up2_);
    all.emplace_back("up1.w", &up1_.conv.w);
    all.emplace_back("up1.b", &up1_.conv.b);
    add_block("res_up1", res_up1_);
    all.emplace_back("gn_out.gamma", &gn_out_.gamma);
    all.emplace_back("gn_out.beta", &gn_out_.beta);
    all.emplace_back("temb_l1.w", &temb_l1_.w);
    all.emplace_back("temb_l1.b", &temb_l1_.b);
    all.emplace_back("temb_l2.w", &temb_l2_.w);
    all.emplace_back("temb_l2.b", &temb_l2_.b);
    all.emplace_back("conv_out.w", &conv_out_.w);
    all.emplace_back("conv_out.b", &conv_out_.b);
    return all;
}

// --------------------------------------------------------------------------
// Masked objective

double eps_mse(const Tensor& eps, const Tensor& eps_hat) {
    require_same_shape(eps, eps_hat, "eps_mse");
    double acc = 0.0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        const double d = eps_hat[i] - eps[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps.numel());
}

DiffLossResult diff_loss(const Tensor& e_n, const Tensor& e_c, int64_t tau, int64_t total_epochs,
                         Denoiser& denoiser, const NoiseSchedule& sched, RngStream& stream,
                         double alpha, bool accumulate_grads) {
    const SimilarityMap sim = cosine_map(e_n, e_c);
    const DynamicMask mask = dynamic_mask(sim, tau, total_epochs, alpha);
    const Tensor z0 = apply_mask(e_n, mask);

    DiffLossResult out;
    double msum = 0.0;
    for (int64_t i = 0; i < mask.values.numel(); ++i) msum += mask.values[i];
    out.mask_mean = msum / static_cast<double>(mask.values.numel());

    out.t = 1 + stream.next_below(sched.T);
    const Tensor eps = gaussian(stream, z0.dims());
    const Tensor z_t = q_sample(z0, out.t, eps, sched);

    Denoiser::Cache cache;
    const Tensor eps_hat = denoiser.forward(z_t, out.t, cache);
    out.loss = eps_mse(eps, eps_hat);
    if (!std::isfinite(out.loss)) throw DivergenceError("diff_loss: non-finite loss");

    if (accumulate_grads) {
        Tensor g(eps_hat.dims());
        const double coef = 2.0 / static_cast<double>(eps_hat.numel());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = coef * (eps_hat[i] - eps[i]);
        denoiser.backward(cache, g);
    }
    return out;
}

// --------------------------------------------------------------------------
// Reverse process

Tensor ddpm_reverse_step(const Tensor& z_t, int64_t t, const Tensor& eps_hat,
                         const NoiseSchedule& sched, const Tensor* noise) {
    check_t(t, sched, "ddpm_reverse_step");
    require_same_shape(z_t, eps_hat, "ddpm_reverse_step");
    if (t > 1 && noise == nullptr)
        throw std::invalid_argument("ddpm_reverse_step: noise may be omitted only at t = 1");
    if (noise != nullptr) require_same_shape(z_t, *noise, "ddpm_reverse_step noise");

    const double beta = sched.beta_at(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    const double eps_coef = beta / std::sqrt(1.0 - sched.alpha_bar_at(t));
    const double sigma = std::sqrt(beta);
    Tensor z(z_t.dims());
    if (t == 1) {
        for (int64_t i = 0; i < z.numel(); ++i)
            z[i] = inv_sqrt_alpha * (z_t[i] - eps_coef * eps_hat[i]);
    } else {
        for (int64_t i = 0; i < z.numel(); ++i)
            z[i] = inv_sqrt_alpha * (z_t[i] - eps_coef * eps_hat[i]) + sigma * (*noise)[i];
    }
    return z;
}

NormalizedImage translate(const NormalizedImage& xn, const Autoencoder& ae,
                          const Denoiser& denoiser, const NoiseSchedule& sched,
                          const SamplerConfig& cfg, double latent_scale) {
    if (cfg.t_start < 0 || cfg.t_start > sched.T)
        throw std::invalid_argument("translate: t_start must lie in [0, T]");
    if (!(latent_scale > 0.0)) throw std::invalid_argument("translate: latent_scale must be positive");

    const Tensor e_n = ae.enc.forward(xn);
    // Inference has no CECT latent; the similarity mask degenerates to ones.
    Tensor z = apply_mask(e_n, all_ones_mask(e_n.dim(1), e_n.dim(2)));
    kernels::ew_scale(z.data(), latent_scale, z.numel(), z.data());

    if (cfg.t_start >= 1) {
        RngStream stream(cfg.seed, 30);
        const Tensor eps = gaussian(stream, z.dims());
        z = q_sample(z, cfg.t_start, eps, sched);
        for (int64_t t = cfg.t_start; t >= 1; --t) {
            const Tensor eps_hat = denoiser.forward(z, t);
            if (t > 1) {
                const Tensor noise = gaussian(stream, z.dims());
                z = ddpm_reverse_step(z, t, eps_hat, sched, &noise);
            } else {
                z = ddpm_reverse_step(z, t, eps_hat, sched, nullptr);
            }
        }
    }

    kernels::ew_scale(z.data(), 1.0 / latent_scale, z.numel(), z.data());
    const QuantizeResult q = quantize(z, ae.codebook, ae.cfg.beta_commit);
    return ae.dec.forward(q.quantized);
}

} // namespace s2ldm
