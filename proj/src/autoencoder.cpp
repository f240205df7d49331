#include "s2ldm/autoencoder.hpp"

#include <cmath>
#include <stdexcept>

#include "s2ldm/errors.hpp"
#include "s2ldm/kernels.hpp"
#include "s2ldm/similarity.hpp"

namespace s2ldm {

namespace {

Tensor as_chw(const Tensor& img) {
    return Tensor({1, img.dim(0), img.dim(1)}, img.vec());
}

Tensor as_hw(const Tensor& img3) {
    return Tensor({img3.dim(1), img3.dim(2)}, img3.vec());
}

void check_weights(const AeLossWeights& w) {
    if (w.lambda_r < 0.0 || w.lambda_q < 0.0 || w.lambda_s < 0.0 || w.lambda_adv < 0.0)
        throw std::invalid_argument("AeLossWeights: weights must be non-negative");
    if (w.lambda_r <= 0.0 && w.lambda_q <= 0.0 && w.lambda_s <= 0.0)
        throw std::invalid_argument("AeLossWeights: at least one of lambda_r/q/s must be positive");
}

} // namespace

// --------------------------------------------------------------------------
// SyncreticEncoder

SyncreticEncoder::SyncreticEncoder(const AeConfig& cfg, RngStream& rng)
    : c1(1, cfg.base_width, 1, rng),
      c2(cfg.base_width, 2 * cfg.base_width, 2, rng),
      c3(2 * cfg.base_width, 4 * cfg.base_width, 2, rng),
      c4(4 * cfg.base_width, cfg.latent_channels, 1, rng),
      g1(cfg.base_width, cfg.groups),
      g2(2 * cfg.base_width, cfg.groups),
      g3(4 * cfg.base_width, cfg.groups) {}

Tensor SyncreticEncoder::forward(const NormalizedImage& x) const {
    Cache scratch;
    return forward(x, scratch);
}

Tensor SyncreticEncoder::forward(const NormalizedImage& x, Cache& cache) const {
    if (x.height() % kDownsampleFactor != 0 || x.width() % kDownsampleFactor != 0)
        throw std::invalid_argument("encode: image dims must be divisible by " +
                                    std::to_string(kDownsampleFactor));
    cache.c1_in = as_chw(x.pixels);
    Tensor h = c1.forward(cache.c1_in);
    cache.gn1_out = g1.forward(h, cache.g1);
    cache.c2_in = silu(cache.gn1_out);
    h = c2.forward(cache.c2_in);
    cache.gn2_out = g2.forward(h, cache.g2);
    cache.c3_in = silu(cache.gn2_out);
    h = c3.forward(cache.c3_in);
    cache.gn3_out = g3.forward(h, cache.g3);
    cache.c4_in = silu(cache.gn3_out);
    return c4.forward(cache.c4_in);
}

void SyncreticEncoder::backward(const Cache& cache, const Tensor& g_latent) {
    Tensor g = c4.backward(cache.c4_in, g_latent);
    g = silu_backward(cache.gn3_out, g);
    g = g3.backward(cache.g3, g);
    g = c3.backward(cache.c3_in, g);
    g = silu_backward(cache.gn2_out, g);
    g = g2.backward(cache.g2, g);
    g = c2.backward(cache.c2_in, g);
    g = silu_backward(cache.gn1_out, g);
    g = g1.backward(cache.g1, g);
    c1.backward(cache.c1_in, g); // image gradient discarded
}

std::vector<Param*> SyncreticEncoder::params() {
    return {&c1.w, &c1.b, &g1.gamma, &g1.beta, &c2.w, &c2.b, &g2.gamma, &g2.beta,
            &c3.w, &c3.b, &g3.gamma, &g3.beta, &c4.w, &c4.b};
}

std::vector<std::pair<std::string, Param*>> SyncreticEncoder::named_params() {
    return {{"c1.w", &c1.w}, {"c1.b", &c1.b}, {"g1.gamma", &g1.gamma}, {"g1.beta", &g1.beta},
            {"c2.w", &c2.w}, {"c2.b", &c2.b}, {"g2.gamma", &g2.gamma}, {"g2.beta", &g2.beta},
            {"c3.w", &c3.w}, {"c3.b", &c3.b}, {"g3.gamma", &g3.gamma}, {"g3.beta", &g3.beta},
            {"c4.w", &c4.w}, {"c4.b", &c4.b}};
}

// --------------------------------------------------------------------------
// CectDecoder

CectDecoder::CectDecoder(const AeConfig& cfg, RngStream& rng)
    : cin_(cfg.latent_channels, 4 * cfg.base_width, 1, rng),
      cout_(cfg.base_width, 1, 1, rng),
      u1(4 * cfg.base_width, 2 * cfg.base_width, rng),
      u2(2 * cfg.base_width, cfg.base_width, rng),
      g1(4 * cfg.base_width, cfg.groups),
      g2(2 * cfg.base_width, cfg.groups),
      g3(cfg.base_width, cfg.groups) {}

NormalizedImage CectDecoder::forward(const Tensor& latent) const {
    Cache scratch;
    return forward(latent, scratch);
}

NormalizedImage CectDecoder::forward(const Tensor& latent, Cache& cache) const {
    cache.cin_in = latent;
    Tensor h = cin_.forward(latent);
    cache.gn1_out = g1.forward(h, cache.g1);
    Tensor s = silu(cache.gn1_out);
    h = u1.forward(s, cache.u1_in);
    cache.gn2_out = g2.forward(h, cache.g2);
    s = silu(cache.gn2_out);
    h = u2.forward(s, cache.u2_in);
    cache.gn3_out = g3.forward(h, cache.g3);
    cache.cout_in = silu(cache.gn3_out);
    cache.pre_tanh = cout_.forward(cache.cout_in);
    return {as_hw(tanh_act(cache.pre_tanh))};
}

Tensor CectDecoder::backward(const Cache& cache, const Tensor& g_image) {
    Tensor g = tanh_backward(cache.pre_tanh, as_chw(g_image));
    g = cout_.backward(cache.cout_in, g);
    g = silu_backward(cache.gn3_out, g);
    g = g3.backward(cache.g3, g);
    g = u2.backward(cache.u2_in, g);
    g = silu_backward(cache.gn2_out, g);
    g = g2.backward(cache.g2, g);
    g = u1.backward(cache.u1_in, g);
    g = silu_backward(cache.gn1_out, g);
    g = g1.backward(cache.g1, g);
    return cin_.backward(cache.cin_in, g);
}

std::vector<Param*> CectDecoder::params() {
    return {&cin_.w, &cin_.b, &g1.gamma, &g1.beta, &u1.conv.w, &u1.conv.b,
            &g2.gamma, &g2.beta, &u2.conv.w, &u2.conv.b, &g3.gamma, &g3.beta,
            &cout_.w, &cout_.b};
}

std::vector<std::pair<std::string, Param*>> CectDecoder::named_params() {
    return {{"cin.w", &cin_.w}, {"cin.b", &cin_.b}, {"g1.gamma", &g1.gamma}, {"g1.beta", &g1.beta},
            {"u1.w", &u1.conv.w}, {"u1.b", &u1.conv.b}, {"g2.gamma", &g2.gamma}, {"g2.beta", &g2.beta},
            {"u2.w", &u2.conv.w}, {"u2.b", &u2.conv.b}, {"g3.gamma", &g3.gamma}, {"g3.beta", &g3.beta},
            {"cout.w", &cout_.w}, {"cout.b", &cout_.b}};
}

// --------------------------------------------------------------------------
// Codebook / quantization

Codebook::Codebook(int64_t k, int64_t dim, RngStream& rng)
    : codes({k, dim}), usage_counts(static_cast<size_t>(k), 0), stale_steps(static_cast<size_t>(k), 0) {
    if (k < 2) throw std::invalid_argument("Codebook: need at least 2 codes");
    for (int64_t i = 0; i < codes.numel(); ++i) codes.value[i] = 0.5 * rng.next_gaussian();
}

QuantizeResult quantize(const Tensor& e, const Codebook& cb, double beta_commit) {
    if (e.ndim() != 3 || e.dim(0) != cb.dim())
        throw std::invalid_argument("quantize: latent channel dim " + shape_str(e) +
                                    " does not match code dim " + std::to_string(cb.dim()));
    const int64_t c = e.dim(0), h = e.dim(1), w = e.dim(2);
    const int64_t plane = h * w;
    QuantizeResult out;
    out.indices.resize(static_cast<size_t>(plane));
    kernels::nearest_codes(e.data(), c, h, w, cb.codes.value.data(), cb.size(), out.indices.data());
    out.quantized = Tensor(e.dims());
    double dist = 0.0;
    for (int64_t p = 0; p < plane; ++p) {
        const double* code = cb.codes.value.data() + out.indices[static_cast<size_t>(p)] * c;
        for (int64_t cc = 0; cc < c; ++cc) {
            out.quantized[cc * plane + p] = code[cc];
            const double d = e[cc * plane + p] - code[cc];
            dist += d * d;
        }
    }
    // Codebook and commitment terms share the same value; stop-gradients only
    // change what each side trains.
    out.loss = (1.0 + beta_commit) * dist / static_cast<double>(plane);
    return out;
}

Tensor quantize_backward_input(const Tensor& e, const Codebook& cb,
                               const std::vector<int64_t>& indices, const Tensor& g_quantized,
                               double beta_commit, double scale_q) {
    require_same_shape(e, g_quantized, "quantize_backward_input");
    const int64_t c = e.dim(0), plane = e.dim(1) * e.dim(2);
    Tensor gin = g_quantized; // straight-through
    const double coef = scale_q * 2.0 * beta_commit / static_cast<double>(plane);
    for (int64_t p = 0; p < plane; ++p) {
        const double* code = cb.codes.value.data() + indices[static_cast<size_t>(p)] * c;
        for (int64_t cc = 0; cc < c; ++cc)
            gin[cc * plane + p] += coef * (e[cc * plane + p] - code[cc]);
    }
    return gin;
}

void quantize_backward_codebook(const Tensor& e, Codebook& cb,
                                const std::vector<int64_t>& indices, double scale_q) {
    const int64_t c = e.dim(0), plane = e.dim(1) * e.dim(2);
    const double coef = scale_q * 2.0 / static_cast<double>(plane);
    for (int64_t p = 0; p < plane; ++p) {
        const int64_t k = indices[static_cast<size_t>(p)];
        const double* code = cb.codes.value.data() + k * c;
        double* grow = cb.codes.grad.data() + k * c;
        for (int64_t cc = 0; cc < c; ++cc) grow[cc] += coef * (code[cc] - e[cc * plane + p]);
    }
}

// --------------------------------------------------------------------------
// High-frequency enhancement

NormalizedImage high_freq_enhance(const NormalizedImage& xc, double beta, double sigma) {
    if (beta < 0.0) throw std::invalid_argument("high_freq_enhance: beta must be >= 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("high_freq_enhance: sigma must be > 0");
    const int64_t h = xc.height(), w = xc.width();
    Tensor blur({h, w});
    kernels::gaussian_blur(xc.pixels.data(), h, w, sigma, blur.data());
    NormalizedImage out;
    out.pixels = Tensor({h, w});
    for (int64_t i = 0; i < h * w; ++i) {
        const double v = xc.pixels[i] + beta * (xc.pixels[i] - blur[i]);
        out.pixels[i] = std::clamp(v, -1.0, 1.0);
    }
    return out;
}

// --------------------------------------------------------------------------
// Autoencoder aggregate and losses

Autoencoder::Autoencoder(const AeConfig& cfg_, uint64_t init_seed) : cfg(cfg_) {
    RngStream rng(init_seed, 10);
    enc = SyncreticEncoder(cfg, rng);
    codebook = Codebook(cfg.codebook_size, cfg.latent_channels, rng);
    dec = CectDecoder(cfg, rng);
}

std::vector<Param*> Autoencoder::params() {
    std::vector<Param*> all = enc.params();
    all.push_back(&codebook.codes);
    for (Param* p : dec.params()) all.push_back(p);
    return all;
}

std::vector<std::pair<std::string, Param*>> Autoencoder::named_params() {
    std::vector<std::pair<std::string, Param*>> all;
    for (auto& [name, p] : enc.named_params()) all.emplace_back("enc." + name, p);
    all.emplace_back("codebook", &codebook.codes);
    for (auto& [name, p] : dec.named_params()) all.emplace_back("dec." + name, p);
    return all;
}

static double mean_l1(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.numel());
}

AutoLossComponents auto_loss(const Autoencoder& ae, const NormalizedImage& xn,
                             const NormalizedImage& xc) {
    check_weights(ae.cfg.weights);
    const AeLossWeights& lw = ae.cfg.weights;
    AutoLossComponents c;
    const Tensor e_c = ae.enc.forward(xc);
    const QuantizeResult q = quantize(e_c, ae.codebook, ae.cfg.beta_commit);
    const NormalizedImage recon = ae.dec.forward(q.quantized);
    const NormalizedImage x_f = high_freq_enhance(xc, ae.cfg.hf_beta, ae.cfg.hf_sigma);
    c.rec = mean_l1(recon.pixels, x_f.pixels);
    c.quan = q.loss;
    if (lw.lambda_s > 0.0) {
        const Tensor e_n = ae.enc.forward(xn);
        c.sim = adaptive_sim_loss_value(e_n, e_c, ae.cfg.sim_gamma, ae.cfg.sim_floor);
    }
    c.total = lw.lambda_r * c.rec + lw.lambda_q * c.quan + lw.lambda_s * c.sim;
    if (!std::isfinite(c.total))
        throw DivergenceError("auto_loss: non-finite loss");
    return c;
}

AutoLossBackwardResult auto_loss_backward(Autoencoder& ae, const NormalizedImage& xn,
                                          const NormalizedImage& xc, PatchDiscriminator* disc) {
    check_weights(ae.cfg.weights);
    const AeLossWeights& lw = ae.cfg.weights;
    AutoLossBackwardResult out;

    SyncreticEncoder::Cache cache_c;
    out.e_c = ae.enc.forward(xc, cache_c);
    QuantizeResult q = quantize(out.e_c, ae.codebook, ae.cfg.beta_commit);
    out.code_indices = q.indices;

    CectDecoder::Cache dec_cache;
    const NormalizedImage recon = ae.dec.forward(q.quantized, dec_cache);
    const NormalizedImage x_f = high_freq_enhance(xc, ae.cfg.hf_beta, ae.cfg.hf_sigma);

    out.components.rec = mean_l1(recon.pixels, x_f.pixels);
    out.components.quan = q.loss;

    // Reconstruction gradient (mean-L1 subgradient, zero at exact ties).
    const int64_t npix = recon.pixels.numel();
    Tensor g_img(recon.pixels.dims());
    const double rec_coef = lw.lambda_r / static_cast<double>(npix);
    for (int64_t i = 0; i < npix; ++i) {
        const double d = recon.pixels[i] - x_f.pixels[i];
        g_img[i] = d > 0.0 ? rec_coef : (d < 0.0 ? -rec_coef : 0.0);
    }

    if (disc != nullptr && lw.lambda_adv > 0.0) {
        // Hinge generator term: mean relu(1 - D(fake)) pushed through the
        // discriminator into the reconstruction.
        PatchDiscriminator::Cache fake_cache;
        const Tensor logits = disc->forward(as_chw(recon.pixels), fake_cache);
        const int64_t np = logits.numel();
        Tensor g_logits(logits.dims());
        for (int64_t i = 0; i < np; ++i)
            g_logits[i] = (1.0 - logits[i] > 0.0) ? -lw.lambda_adv / static_cast<double>(np) : 0.0;
        const Tensor g_fake = as_hw(disc->backward(fake_cache, g_logits));
        // The generator pass must not leave gradients on the discriminator.
        zero_grads(disc->params());
        for (int64_t i = 0; i < npix; ++i) g_img[i] += g_fake[i];

        // Discriminator hinge loss on (real = x_c, fake = recon).
        PatchDiscriminator::Cache real_cache, fake_cache2;
        const Tensor real_logits = disc->forward(as_chw(xc.pixels), real_cache);
        const Tensor fake_logits = disc->forward(as_chw(recon.pixels), fake_cache2);
        Tensor g_real(real_logits.dims()), g_fake2(fake_logits.dims());
        const double half_inv = 0.5 / static_cast<double>(real_logits.numel());
        for (int64_t i = 0; i < real_logits.numel(); ++i)
            g_real[i] = (1.0 - real_logits[i] > 0.0) ? -half_inv : 0.0;
        for (int64_t i = 0; i < fake_logits.numel(); ++i)
            g_fake2[i] = (1.0 + fake_logits[i] > 0.0) ? half_inv : 0.0;
        disc->backward(real_cache, g_real);
        disc->backward(fake_cache2, g_fake2);
    }

    Tensor g_quantized = ae.dec.backward(dec_cache, g_img);
    Tensor g_ec = quantize_backward_input(out.e_c, ae.codebook, q.indices, g_quantized,
                                          ae.cfg.beta_commit, lw.lambda_q);
    quantize_backward_codebook(out.e_c, ae.codebook, q.indices, lw.lambda_q);

    if (lw.lambda_s > 0.0) {
        SyncreticEncoder::Cache cache_n;
        const Tensor e_n = ae.enc.forward(xn, cache_n);
        SimLossResult sim = adaptive_sim_loss(e_n, out.e_c, ae.cfg.sim_gamma, ae.cfg.sim_floor);
        out.components.sim = sim.loss;
        for (int64_t i = 0; i < g_ec.numel(); ++i) g_ec[i] += lw.lambda_s * sim.grad_b[i];
        Tensor g_en(sim.grad_a.dims());
        kernels::ew_scale(sim.grad_a.data(), lw.lambda_s, g_en.numel(), g_en.data());
        ae.enc.backward(cache_n, g_en);
    }
    ae.enc.backward(cache_c, g_ec);

    out.components.total = lw.lambda_r * out.components.rec + lw.lambda_q * out.components.quan +
                           lw.lambda_s * out.components.sim;
    if (!std::isfinite(out.components.total))
        throw DivergenceError("auto_loss_backward: non-finite loss");
    return out;
}

// --------------------------------------------------------------------------
// Patch discriminator

PatchDiscriminator::PatchDiscriminator(RngStream& rng)
    : c1(1, 16, 2, rng), c2(16, 32, 2, rng), c3(32, 1, 1, rng) {}

Tensor PatchDiscriminator::forward(const Tensor& img) const {
    Cache scratch;
    return forward(img, scratch);
}

Tensor PatchDiscriminator::forward(const Tensor& img, Cache& cache) const {
    cache.c1_in = img;
    cache.r1_in = c1.forward(img);
    cache.c2_in = relu(cache.r1_in);
    cache.r2_in = c2.forward(cache.c2_in);
    cache.c3_in = relu(cache.r2_in);
    return c3.forward(cache.c3_in);
}

Tensor PatchDiscriminator::backward(const Cache& cache, const Tensor& g_logits) {
    Tensor g = c3.backward(cache.c3_in, g_logits);
    g = relu_backward(cache.r2_in, g);
    g = c2.backward(cache.c2_in, g);
    g = relu_backward(cache.r1_in, g);
    return c1.backward(cache.c1_in, g);
}

std::vector<Param*> PatchDiscriminator::params() {
    return {&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b};
}

HingeLosses patch_disc_loss(const Tensor& x_real, const Tensor& x_fake, PatchDiscriminator& disc) {
    require_same_shape(x_real, x_fake, "patch_disc_loss");
    const Tensor real_logits = disc.forward(x_real.ndim() == 2 ? as_chw(x_real) : x_real);
    const Tensor fake_logits = disc.forward(x_fake.ndim() == 2 ? as_chw(x_fake) : x_fake);
    HingeLosses out;
    const int64_t n = real_logits.numel();
    for (int64_t i = 0; i < n; ++i) {
        out.d_real_term += std::max(0.0, 1.0 - real_logits[i]);
        out.d_fake_term += std::max(0.0, 1.0 + fake_logits[i]);
        out.g_loss += std::max(0.0, 1.0 - fake_logits[i]);
    }
    out.d_real_term /= static_cast<double>(n);
    out.d_fake_term /= static_cast<double>(n);
    out.g_loss /= static_cast<double>(n);
    out.d_loss = 0.5 * (out.d_real_term + out.d_fake_term);
    return out;
}

// --------------------------------------------------------------------------
// Training step

AeStepRecord ae_train_step(Autoencoder& ae,
                           const std::vector<std::pair<NormalizedImage, NormalizedImage>>& batch,
                           const AdamwConfig& opt, RngStream& reseed_rng,
                           PatchDiscriminator* disc, const AdamwConfig* disc_opt) {
    if (batch.empty()) throw std::invalid_argument("ae_train_step: empty batch");
    const bool adversarial = disc != nullptr && ae.cfg.weights.lambda_adv > 0.0;

    std::vector<Param*> all = ae.params();
    zero_grads(all);
    if (adversarial) zero_grads(disc->params());

    AeStepRecord rec;
    std::vector<int64_t> used(static_cast<size_t>(ae.codebook.size()), 0);
    Tensor last_ec;
    for (const auto& [xn, xc] : batch) {
        AutoLossBackwardResult r = auto_loss_backward(ae, xn, xc, adversarial ? disc : nullptr);
        rec.total += r.components.total;
        rec.rec += r.components.rec;
        rec.quan += r.components.quan;
        rec.sim += r.components.sim;
        for (int64_t idx : r.code_indices) used[static_cast<size_t>(idx)] += 1;
        last_ec = std::move(r.e_c);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    rec.total *= inv;
    rec.rec *= inv;
    rec.quan *= inv;
    rec.sim *= inv;
    for (Param* p : all) kernels::ew_scale(p->grad.data(), inv, p->numel(), p->grad.data());
    for (Param* p : all) adamw_step(*p, opt);
    if (adversarial) {
        for (Param* p : disc->params()) kernels::ew_scale(p->grad.data(), inv, p->numel(), p->grad.data());
        for (Param* p : disc->params()) adamw_step(*p, disc_opt ? *disc_opt : opt);
    }

    // Dead-code handling: codes unused for cfg.dead_code_steps consecutive
    // steps are re-seeded to a random latent vector from the last sample.
    const int64_t c = ae.codebook.dim();
    const int64_t plane = last_ec.dim(1) * last_ec.dim(2);
    for (int64_t k = 0; k < ae.codebook.size(); ++k) {
        auto ku = static_cast<size_t>(k);
        ae.codebook.usage_counts[ku] += used[ku];
        if (used[ku] > 0) {
            ae.codebook.stale_steps[ku] = 0;
            continue;
        }
        if (++ae.codebook.stale_steps[ku] >= ae.cfg.dead_code_steps) {
            const int64_t p = reseed_rng.next_below(plane);
            for (int64_t cc = 0; cc < c; ++cc) {
                ae.codebook.codes.value[k * c + cc] = last_ec[cc * plane + p];
                ae.codebook.codes.adam_m[k * c + cc] = 0.0;
                ae.codebook.codes.adam_v[k * c + cc] = 0.0;
            }
            ae.codebook.stale_steps[ku] = 0;
        }
    }
    return rec;
}

Tensor encode_for_inference(const NormalizedImage& xn, const SyncreticEncoder& enc,
                            const Codebook& cb) {
    return quantize(enc.forward(xn), cb).quantized;
}

} // namespace s2ldm
