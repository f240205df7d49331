#include "s2ldm/similarity.hpp"

#include <cmath>
#include <stdexcept>

#include "s2ldm/kernels.hpp"
#include "kernel_bodies.hpp"

namespace s2ldm {

static void check_latent(const Tensor& e, const char* who) {
    if (e.ndim() != 3 || e.dim(0) < 1)
        throw std::invalid_argument(std::string(who) + ": expected a [c,h,w] latent, got " + shape_str(e));
}

SimilarityMap cosine_map(const Tensor& e_a, const Tensor& e_b, double eps) {
    check_latent(e_a, "cosine_map");
    require_same_shape(e_a, e_b, "cosine_map");
    SimilarityMap out;
    out.values = Tensor({e_a.dim(1), e_a.dim(2)});
    kernels::cosine_map(e_a.data(), e_b.data(), e_a.dim(0), e_a.dim(1), e_a.dim(2), eps,
                        out.values.data());
    return out;
}

namespace {

struct LocTerms {
    double loss;
    double dloss_ds;
};

LocTerms per_location_terms(double s, double gamma, double floor) {
    const double u = (1.0 - s) / 2.0;
    const double raw = (1.0 + s) / 2.0;
    const double m = std::fmax(raw, floor);
    const double logm = std::log(m);
    const double w = std::pow(u, gamma);
    LocTerms t;
    t.loss = -w * logm;
    // d/ds of -((1-s)/2)^g * log(m); the log branch is flat once floored.
    const double dw_term = (u > 0.0) ? (gamma / 2.0) * std::pow(u, gamma - 1.0) * logm : 0.0;
    const double dlog_term = (raw > floor) ? w / (2.0 * m) : 0.0;
    t.dloss_ds = dw_term - dlog_term;
    return t;
}

} // namespace

SimLossResult adaptive_sim_loss(const Tensor& e_n, const Tensor& e_c, double gamma, double floor) {
    check_latent(e_n, "adaptive_sim_loss");
    require_same_shape(e_n, e_c, "adaptive_sim_loss");
    const int64_t c = e_n.dim(0), h = e_n.dim(1), w = e_n.dim(2);
    const int64_t plane = h * w;
    const double eps = 1e-8;
    const double inv_n = 1.0 / static_cast<double>(plane);

    SimLossResult out;
    out.grad_a = Tensor(e_n.dims());
    out.grad_b = Tensor(e_n.dims());
    double total = 0.0;
    for (int64_t p = 0; p < plane; ++p) {
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (int64_t cc = 0; cc < c; ++cc) {
            const double va = e_n[cc * plane + p];
            const double vb = e_c[cc * plane + p];
            dot += va * vb;
            na2 += va * va;
            nb2 += vb * vb;
        }
        const double na_raw = std::sqrt(na2), nb_raw = std::sqrt(nb2);
        const double na = std::fmax(na_raw, eps), nb = std::fmax(nb_raw, eps);
        const double s = kernels::body::cosine_of_sums(dot, na2, nb2, eps);

        const LocTerms t = per_location_terms(s, gamma, floor);
        total += t.loss;

        const double coeff = inv_n * t.dloss_ds;
        const double s_unclamped = dot / (na * nb);
        for (int64_t cc = 0; cc < c; ++cc) {
            const double va = e_n[cc * plane + p];
            const double vb = e_c[cc * plane + p];
            // ds/da = b/(na*nb) - s*a/na^2 when the norm clamp is inactive.
            double ds_da = vb / (na * nb);
            double ds_db = va / (na * nb);
            if (na_raw > eps) ds_da -= s_unclamped * va / (na * na);
            if (nb_raw > eps) ds_db -= s_unclamped * vb / (nb * nb);
            out.grad_a[cc * plane + p] = coeff * ds_da;
            out.grad_b[cc * plane + p] = coeff * ds_db;
        }
    }
    out.loss = total * inv_n;
    return out;
}

double adaptive_sim_loss_value(const Tensor& e_n, const Tensor& e_c, double gamma, double floor) {
    check_latent(e_n, "adaptive_sim_loss");
    require_same_shape(e_n, e_c, "adaptive_sim_loss");
    const SimilarityMap sim = cosine_map(e_n, e_c);
    double total = 0.0;
    for (int64_t i = 0; i < sim.values.numel(); ++i)
        total += per_location_terms(sim.values[i], gamma, floor).loss;
    return total / static_cast<double>(sim.values.numel());
}

DynamicMask dynamic_mask(const SimilarityMap& sim, int64_t tau, int64_t total, double alpha) {
    if (total < 1) throw std::invalid_argument("dynamic_mask: total epochs must be >= 1");
    if (tau < 0 || tau > total)
        throw std::invalid_argument("dynamic_mask: epoch must lie in [0, total]");
    if (!(alpha > 0.0)) throw std::invalid_argument("dynamic_mask: alpha must be positive");
    DynamicMask out;
    out.tau = tau;
    out.total = total;
    out.alpha = alpha;
    out.values = Tensor(sim.values.dims());
    const double ramp = alpha * (static_cast<double>(tau) / static_cast<double>(total));
    for (int64_t i = 0; i < sim.values.numel(); ++i) {
        const double v = ramp + (1.0 + sim.values[i]) / 2.0;
        out.values[i] = v < 1.0 ? v : 1.0;
    }
    return out;
}

Tensor apply_mask(const Tensor& e, const Tensor& mask_values) {
    check_latent(e, "apply_mask");
    if (mask_values.ndim() != 2 || mask_values.dim(0) != e.dim(1) || mask_values.dim(1) != e.dim(2))
        throw std::invalid_argument("apply_mask: mask shape " + shape_str(mask_values) +
                                    " does not match latent " + shape_str(e));
    Tensor out(e.dims());
    const int64_t plane = e.dim(1) * e.dim(2);
    for (int64_t c = 0; c < e.dim(0); ++c)
        for (int64_t p = 0; p < plane; ++p) out[c * plane + p] = e[c * plane + p] * mask_values[p];
    return out;
}

Tensor apply_mask(const Tensor& e, const DynamicMask& mask) {
    return apply_mask(e, mask.values);
}

DynamicMask all_ones_mask(int64_t h, int64_t w) {
    DynamicMask out;
    out.values = Tensor::full({h, w}, 1.0);
    out.tau = 1;
    out.total = 1;
    return out;
}

} // namespace s2ldm
