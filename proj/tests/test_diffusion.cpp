#include "doctest.h"

#include <cmath>

#include "s2ldm/diffusion.hpp"
#include "test_util.hpp"

using namespace s2ldm;
using s2ldm::test::random_tensor;
using s2ldm::test::same_bits;

namespace {

DenoiserConfig tiny_denoiser_config(int64_t latent_channels = 2) {
    DenoiserConfig cfg;
    cfg.latent_channels = latent_channels;
    cfg.base_width = 2;
    cfg.temb_dim = 8;
    cfg.groups = 2;
    return cfg;
}

} // namespace

TEST_CASE("make_schedule invariants and endpoints") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    CHECK(s.alpha_bar_at(1) == doctest::Approx(0.9999).epsilon(1e-12));
    for (int64_t t = 2; t <= 1000; ++t) {
        CHECK(s.beta_at(t) > s.beta_at(t - 1));
        CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
        CHECK(s.beta_at(t) > 0.0);
        CHECK(s.beta_at(t) < 1.0);
    }

    // Independent product oracle.
    double prod = 1.0;
    for (int64_t t = 1; t <= 1000; ++t)
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * static_cast<double>(t - 1) / 999.0);
    CHECK(std::abs(s.alpha_bar_at(1000) - prod) < 1e-12);
    CHECK(s.alpha_bar_at(1000) == doctest::Approx(4.04e-5).epsilon(0.01));

    CHECK_THROWS_AS(make_schedule(0), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 0.02, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 0.5, 1.5), std::invalid_argument);
}

TEST_CASE("q_sample noiseless branch and range checks") {
    const NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
    RngStream rng(1, 0);
    const Tensor z0 = random_tensor({2, 4, 4}, rng);
    const Tensor zero(z0.dims());
    const Tensor zt = q_sample(z0, 40, zero, s);
    const double expected = std::sqrt(s.alpha_bar_at(40));
    for (int64_t i = 0; i < z0.numel(); ++i) CHECK(zt[i] == expected * z0[i]);

    CHECK_THROWS_AS(q_sample(z0, 0, zero, s), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(z0, 101, zero, s), std::invalid_argument);
}

TEST_CASE("q_sample matches its closed-form moments") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    RngStream rng(2, 0);
    const int n = 10000;
    const int64_t t = 600;
    const Tensor z0({1, 1, 1});
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        Tensor eps({1, 1, 1});
        eps[0] = rng.next_gaussian();
        const double v = q_sample(z0, t, eps, s)[0];
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double true_var = 1.0 - s.alpha_bar_at(t);
    // 3 standard errors of the estimators.
    CHECK(std::abs(mean) < 3.0 * std::sqrt(true_var / n));
    CHECK(std::abs(var - true_var) < 3.0 * true_var * std::sqrt(2.0 / n));
}

TEST_CASE("at t = T the sample is essentially pure noise") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    RngStream rng(3, 0);
    const Tensor z0 = random_tensor({2, 8, 8}, rng); // unit-scale
    const Tensor eps = random_tensor({2, 8, 8}, rng);
    const Tensor zt = q_sample(z0, 1000, eps, s);
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        num += (zt[i] - eps[i]) * (zt[i] - eps[i]);
        den += eps[i] * eps[i];
    }
    CHECK(std::sqrt(num / den) < 0.01);
}

TEST_CASE("reverse step with the true noise matches the closed-form posterior mean") {
    const NoiseSchedule s = make_schedule(50, 1e-3, 0.05);
    RngStream rng(4, 0);
    for (int64_t t : {2ll, 10ll, 30ll, 50ll}) {
        const Tensor z0 = random_tensor({1, 3, 3}, rng);
        const Tensor eps = random_tensor({1, 3, 3}, rng);
        const Tensor zt = q_sample(z0, t, eps, s);
        Tensor zero(zt.dims());
        const Tensor back = ddpm_reverse_step(zt, t, eps, s, &zero);

        // Posterior mean in its z0 form.
        const double abar_t = s.alpha_bar_at(t);
        const double abar_prev = t > 1 ? s.alpha_bar_at(t - 1) : 1.0;
        const double beta = s.beta_at(t);
        const double c0 = std::sqrt(abar_prev) * beta / (1.0 - abar_t);
        const double ct = std::sqrt(s.alpha_at(t)) * (1.0 - abar_prev) / (1.0 - abar_t);
        for (int64_t i = 0; i < zt.numel(); ++i)
            CHECK(std::abs(back[i] - (c0 * z0[i] + ct * zt[i])) < 1e-10);
    }
}

TEST_CASE("reverse step edge rules") {
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);
    RngStream rng(5, 0);
    const Tensor zt = random_tensor({1, 2, 2}, rng);
    const Tensor eps_hat = random_tensor({1, 2, 2}, rng);

    // t = 1: deterministic, no noise argument needed.
    const Tensor a = ddpm_reverse_step(zt, 1, eps_hat, s, nullptr);
    const Tensor b = ddpm_reverse_step(zt, 1, eps_hat, s, nullptr);
    CHECK(same_bits(a, b));

    CHECK_THROWS_AS(ddpm_reverse_step(zt, 2, eps_hat, s, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(ddpm_reverse_step(zt, 0, eps_hat, s, &zt), std::invalid_argument);
    CHECK_THROWS_AS(ddpm_reverse_step(zt, 21, eps_hat, s, &zt), std::invalid_argument);
}

TEST_CASE("reverse step is affine: doubling all inputs doubles the output") {
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);
    RngStream rng(6, 0);
    const Tensor zt = random_tensor({1, 3, 3}, rng);
    const Tensor eh = random_tensor({1, 3, 3}, rng);
    const Tensor nz = random_tensor({1, 3, 3}, rng);
    Tensor zt2(zt.dims()), eh2(zt.dims()), nz2(zt.dims());
    for (int64_t i = 0; i < zt.numel(); ++i) {
        zt2[i] = 2.0 * zt[i];
        eh2[i] = 2.0 * eh[i];
        nz2[i] = 2.0 * nz[i];
    }
    const Tensor once = ddpm_reverse_step(zt, 7, eh, s, &nz);
    const Tensor twice = ddpm_reverse_step(zt2, 7, eh2, s, &nz2);
    for (int64_t i = 0; i < once.numel(); ++i) CHECK(twice[i] == 2.0 * once[i]);
}

TEST_CASE("one exact reverse step from t = T moves toward z0") {
    const NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
    RngStream rng(7, 0);
    const Tensor z0 = random_tensor({1, 4, 4}, rng);
    const Tensor eps = random_tensor({1, 4, 4}, rng);
    const Tensor zt = q_sample(z0, 100, eps, s);
    Tensor zero(zt.dims());
    const Tensor stepped = ddpm_reverse_step(zt, 100, eps, s, &zero);
    double before = 0.0, after = 0.0;
    for (int64_t i = 0; i < z0.numel(); ++i) {
        before += (zt[i] - z0[i]) * (zt[i] - z0[i]);
        after += (stepped[i] - z0[i]) * (stepped[i] - z0[i]);
    }
    CHECK(after < before);
}

TEST_CASE("fresh denoiser predicts exactly zero") {
    const Denoiser den(tiny_denoiser_config(), 9);
    RngStream rng(8, 0);
    const Tensor z = random_tensor({2, 8, 8}, rng);
    const Tensor out = den.forward(z, 5);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);
    CHECK(out.same_shape(z));
}

TEST_CASE("eps_mse oracle stubs") {
    RngStream rng(9, 0);
    const Tensor eps = random_tensor({2, 4, 4}, rng);
    CHECK(eps_mse(eps, eps) == 0.0); // a denoiser that outputs eps exactly

    double m = 0.0;
    for (int64_t i = 0; i < eps.numel(); ++i) m += eps[i] * eps[i];
    m /= static_cast<double>(eps.numel());
    const Tensor zero(eps.dims());
    CHECK(eps_mse(eps, zero) == doctest::Approx(m).epsilon(1e-15));
}

TEST_CASE("diff_loss with a zero-output denoiser averages to mean eps^2") {
    Denoiser den(tiny_denoiser_config(), 10);
    const NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
    RngStream data_rng(10, 0);
    const Tensor e_n = random_tensor({2, 8, 8}, data_rng);
    const Tensor e_c = random_tensor({2, 8, 8}, data_rng);
    RngStream stream(11, 0);
    double acc = 0.0;
    const int reps = 40;
    for (int i = 0; i < reps; ++i)
        acc += diff_loss(e_n, e_c, 0, 10, den, s, stream, 2.0, /*accumulate_grads=*/false).loss;
    CHECK(std::abs(acc / reps - 1.0) < 0.1);
}

TEST_CASE("saturated mask makes diff_loss independent of E_c") {
    Denoiser den(tiny_denoiser_config(), 11);
    const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    RngStream data_rng(12, 0);
    const Tensor e_n = random_tensor({2, 8, 8}, data_rng);
    const Tensor e_c1 = random_tensor({2, 8, 8}, data_rng);
    const Tensor e_c2 = random_tensor({2, 8, 8}, data_rng);
    RngStream s1(13, 0), s2(13, 0);
    // tau/total = 5/10 saturates the mask for alpha = 2, so z0 == E_n bitwise
    // and the contrast latent cannot influence the loss.
    const DiffLossResult a = diff_loss(e_n, e_c1, 5, 10, den, s, s1, 2.0, false);
    const DiffLossResult b = diff_loss(e_n, e_c2, 5, 10, den, s, s2, 2.0, false);
    CHECK(a.loss == b.loss);
    CHECK(a.t == b.t);
    CHECK(a.mask_mean == 1.0);
}

TEST_CASE("diff_loss gradients pass the finite-difference check on a 2-channel 8x8 latent") {
    Denoiser den(tiny_denoiser_config(), 12);
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);
    RngStream data_rng(14, 0);
    const Tensor e_n = random_tensor({2, 8, 8}, data_rng);
    const Tensor e_c = random_tensor({2, 8, 8}, data_rng);

    const std::vector<Param*> params = den.params();
    const Tensor theta0 = flatten_values(params);
    ScalarFn f;
    f.value = [&, params](const Tensor& th) {
        load_values(params, th);
        RngStream stream(77, 0); // same draws every evaluation
        const double v = diff_loss(e_n, e_c, 1, 4, den, s, stream, 2.0, false).loss;
        load_values(params, theta0);
        return v;
    };
    f.grad = [&, params](const Tensor& th) {
        load_values(params, th);
        zero_grads(params);
        RngStream stream(77, 0);
        diff_loss(e_n, e_c, 1, 4, den, s, stream, 2.0, true);
        Tensor g = flatten_grads(params);
        load_values(params, theta0);
        return g;
    };
    CHECK(grad_check(f, theta0) < 1e-4);
}

TEST_CASE("denoiser training reduces the objective") {
    Denoiser den(tiny_denoiser_config(4), 13);
    const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    RngStream data_rng(15, 0);
    const Tensor e_n = random_tensor({4, 8, 8}, data_rng);
    const Tensor e_c = random_tensor({4, 8, 8}, data_rng);
    const std::vector<Param*> params = den.params();

    RngStream stream(16, 0);
    double first = 0.0, last = 0.0;
    const AdamwConfig opt{.lr = 2e-3};
    for (int step = 0; step < 150; ++step) {
        zero_grads(params);
        const double loss = diff_loss(e_n, e_c, 2, 4, den, s, stream).loss;
        for (Param* p : params) adamw_step(*p, opt);
        if (step == 0) first = loss;
        last = loss;
    }
    CHECK(last < first);
}

TEST_CASE("translate is deterministic and only needs x_n") {
    AeConfig acfg;
    acfg.latent_channels = 2;
    acfg.base_width = 4;
    acfg.groups = 2;
    acfg.codebook_size = 8;
    Autoencoder ae(acfg, 17);
    DenoiserConfig dcfg = tiny_denoiser_config(2);
    Denoiser den(dcfg, 18);
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.05);

    RngStream rng(19, 0);
    NormalizedImage xn;
    xn.pixels = Tensor({16, 16});
    for (int64_t i = 0; i < xn.pixels.numel(); ++i) xn.pixels[i] = std::tanh(rng.next_gaussian());

    SamplerConfig cfg;
    cfg.t_start = 10;
    cfg.seed = 3;
    const NormalizedImage a = translate(xn, ae, den, s, cfg, 1.0);
    const NormalizedImage b = translate(xn, ae, den, s, cfg, 1.0);
    CHECK(same_bits(a.pixels, b.pixels));
    for (int64_t i = 0; i < a.pixels.numel(); ++i) {
        CHECK(a.pixels[i] >= -1.0);
        CHECK(a.pixels[i] <= 1.0);
    }

    // t_start = 0 degenerates to the pure autoencoder path.
    SamplerConfig pure;
    pure.t_start = 0;
    pure.seed = 9;
    const NormalizedImage c = translate(xn, ae, den, s, pure, 1.0);
    const Tensor direct = encode_for_inference(xn, ae.enc, ae.codebook);
    const NormalizedImage expected = ae.dec.forward(direct);
    CHECK(same_bits(c.pixels, expected.pixels));

    SamplerConfig bad;
    bad.t_start = 21;
    CHECK_THROWS_AS(translate(xn, ae, den, s, bad, 1.0), std::invalid_argument);
}
