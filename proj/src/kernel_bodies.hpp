#pragma once

// Per-work-item kernel bodies shared by the serial and OpenMP traversals.
// Each body writes a disjoint slice of the output with a fixed inner
// accumulation order, which is what makes the two traversals bit-identical.

#include <cmath>
#include <cstdint>
#include <vector>

namespace s2ldm::kernels::body {

// Valid output range for one kernel tap: o*stride + k - 1 must land inside
// [0, in_limit). Keeps the hot loops free of per-pixel bounds checks.
inline int64_t conv_tap_lo(int64_t k) { return k == 0 ? 1 : 0; }
inline int64_t conv_tap_hi(int64_t in_limit, int64_t k, int64_t stride, int64_t out_limit) {
    if (in_limit < k) return -1;
    const int64_t hi = (in_limit - k) / stride;
    return hi < out_limit - 1 ? hi : out_limit - 1;
}

inline void conv3x3_out_row(const double* in, int64_t ci, int64_t h, int64_t w,
                            const double* wgt, const double* bias, int64_t stride,
                            double* out, int64_t ow, int64_t oc, int64_t oy) {
    const double* wbase = wgt + oc * ci * 9;
    double* orow = out + oy * ow;
    const double bias_v = bias ? bias[oc] : 0.0;
    for (int64_t ox = 0; ox < ow; ++ox) orow[ox] = bias_v;
    for (int64_t ic = 0; ic < ci; ++ic) {
        const double* iplane = in + ic * h * w;
        const double* wk = wbase + ic * 9;
        for (int64_t ky = 0; ky < 3; ++ky) {
            const int64_t iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= h) continue;
            const double* irow = iplane + iy * w;
            for (int64_t kx = 0; kx < 3; ++kx) {
                const double wv = wk[ky * 3 + kx];
                const int64_t lo = conv_tap_lo(kx);
                const int64_t hi = conv_tap_hi(w, kx, stride, ow);
                const double* ibase = irow + kx - 1;
                if (stride == 1) {
                    for (int64_t ox = lo; ox <= hi; ++ox) orow[ox] += wv * ibase[ox];
                } else {
                    for (int64_t ox = lo; ox <= hi; ++ox) orow[ox] += wv * ibase[2 * ox];
                }
            }
        }
    }
}

inline void conv3x3_gin_row(const double* wgt, int64_t ci, int64_t co, int64_t stride,
                            const double* gout, int64_t oh, int64_t ow,
                            double* gin, [[maybe_unused]] int64_t h, int64_t w, int64_t ic,
                            int64_t iy) {
    double* grow_out = gin + iy * w;
    for (int64_t ix = 0; ix < w; ++ix) grow_out[ix] = 0.0;
    for (int64_t oc = 0; oc < co; ++oc) {
        const double* gplane = gout + oc * oh * ow;
        const double* wk = wgt + (oc * ci + ic) * 9;
        for (int64_t ky = 0; ky < 3; ++ky) {
            const int64_t num_y = iy + 1 - ky;
            if (num_y < 0 || num_y % stride != 0) continue;
            const int64_t oy = num_y / stride;
            if (oy >= oh) continue;
            const double* grow = gplane + oy * ow;
            for (int64_t kx = 0; kx < 3; ++kx) {
                const double wv = wk[ky * 3 + kx];
                const int64_t lo = conv_tap_lo(kx);
                const int64_t hi = conv_tap_hi(w, kx, stride, ow);
                double* obase = grow_out + kx - 1;
                if (stride == 1) {
                    for (int64_t ox = lo; ox <= hi; ++ox) obase[ox] += wv * grow[ox];
                } else {
                    for (int64_t ox = lo; ox <= hi; ++ox) obase[2 * ox] += wv * grow[ox];
                }
            }
        }
    }
}

inline void conv3x3_gparams_oc(const double* in, int64_t ci, int64_t h, int64_t w,
                               const double* gout, int64_t oh, int64_t ow, int64_t stride,
                               double* gw, double* gb, int64_t oc) {
    const double* gplane = gout + oc * oh * ow;
    double bacc = 0.0;
    for (int64_t i = 0; i < oh * ow; ++i) bacc += gplane[i];
    gb[oc] = bacc;
    double* gwbase = gw + oc * ci * 9;
    for (int64_t ic = 0; ic < ci; ++ic) {
        const double* iplane = in + ic * h * w;
        for (int64_t ky = 0; ky < 3; ++ky) {
            const int64_t oy_lo = conv_tap_lo(ky);
            const int64_t oy_hi = conv_tap_hi(h, ky, stride, oh);
            for (int64_t kx = 0; kx < 3; ++kx) {
                const int64_t ox_lo = conv_tap_lo(kx);
                const int64_t ox_hi = conv_tap_hi(w, kx, stride, ow);
                double acc = 0.0;
                for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                    const double* irow = iplane + (oy * stride + ky - 1) * w + kx - 1;
                    const double* grow = gplane + oy * ow;
                    if (stride == 1) {
                        for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) acc += grow[ox] * irow[ox];
                    } else {
                        for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) acc += grow[ox] * irow[2 * ox];
                    }
                }
                gwbase[ic * 9 + ky * 3 + kx] = acc;
            }
        }
    }
}

inline void upsample2x_out_row(const double* in, int64_t h, int64_t w, double* out,
                               int64_t c_idx, int64_t oy) {
    const double* irow = in + c_idx * h * w + (oy / 2) * w;
    double* orow = out + c_idx * (2 * h) * (2 * w) + oy * (2 * w);
    for (int64_t ox = 0; ox < 2 * w; ++ox) orow[ox] = irow[ox / 2];
}

inline void upsample2x_gin_row(const double* gout, int64_t h, int64_t w, double* gin,
                               int64_t c_idx, int64_t y) {
    const double* gplane = gout + c_idx * (2 * h) * (2 * w);
    double* grow = gin + c_idx * h * w + y * w;
    for (int64_t x = 0; x < w; ++x) {
        const double* r0 = gplane + (2 * y) * (2 * w) + 2 * x;
        const double* r1 = gplane + (2 * y + 1) * (2 * w) + 2 * x;
        grow[x] = r0[0] + r0[1] + r1[0] + r1[1];
    }
}

inline void group_norm_fwd_group(const double* in, int64_t c, int64_t h, int64_t w,
                                 int64_t groups, double eps, const double* gamma,
                                 const double* beta, double* out, double* mean,
                                 double* inv_std, int64_t g) {
    const int64_t cpg = c / groups;
    const int64_t plane = h * w;
    const int64_t n = cpg * plane;
    const double* gbase = in + g * cpg * plane;
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) sum += gbase[i];
    const double mu = sum / static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = gbase[i] - mu;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + eps);
    mean[g] = mu;
    inv_std[g] = istd;
    double* obase = out + g * cpg * plane;
    for (int64_t cc = 0; cc < cpg; ++cc) {
        const double ga = gamma[g * cpg + cc];
        const double be = beta[g * cpg + cc];
        for (int64_t i = 0; i < plane; ++i) {
            obase[cc * plane + i] = ga * (gbase[cc * plane + i] - mu) * istd + be;
        }
    }
}

inline void group_norm_bwd_group(const double* in, int64_t c, int64_t h, int64_t w,
                                 int64_t groups, const double* gamma, const double* mean,
                                 const double* inv_std, const double* gout, double* gin,
                                 double* ggamma, double* gbeta, int64_t g) {
    const int64_t cpg = c / groups;
    const int64_t plane = h * w;
    const int64_t n = cpg * plane;
    const double mu = mean[g];
    const double istd = inv_std[g];
    const double* ibase = in + g * cpg * plane;
    const double* obase = gout + g * cpg * plane;
    double* gibase = gin + g * cpg * plane;

    // dL/dxhat reductions over the group.
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (int64_t cc = 0; cc < cpg; ++cc) {
        const double ga = gamma[g * cpg + cc];
        double gga = 0.0, gbe = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
            const double xhat = (ibase[cc * plane + i] - mu) * istd;
            const double go = obase[cc * plane + i];
            const double dxhat = go * ga;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            gga += go * xhat;
            gbe += go;
        }
        ggamma[g * cpg + cc] = gga;
        gbeta[g * cpg + cc] = gbe;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int64_t cc = 0; cc < cpg; ++cc) {
        const double ga = gamma[g * cpg + cc];
        for (int64_t i = 0; i < plane; ++i) {
            const double xhat = (ibase[cc * plane + i] - mu) * istd;
            const double dxhat = obase[cc * plane + i] * ga;
            gibase[cc * plane + i] = istd * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
        }
    }
}

inline double sigmoid_val(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu_val(double x) { return x * sigmoid_val(x); }
inline double silu_grad_val(double x) {
    const double s = sigmoid_val(x);
    return s + x * s * (1.0 - s);
}

inline double cosine_of_sums(double dot, double na2, double nb2, double eps) {
    // Exactly parallel vectors (a == +-b in particular) must map to exactly
    // +-1 so the boundary identities hold bitwise.
    const double prod = na2 * nb2;
    if (prod > 0.0 && dot * dot == prod) return dot > 0.0 ? 1.0 : -1.0;
    const double denom = std::fmax(std::sqrt(na2), eps) * std::fmax(std::sqrt(nb2), eps);
    double s = dot / denom;
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    return s;
}

inline void cosine_row(const double* a, const double* b, int64_t c, int64_t plane,
                       double eps, double* out, int64_t loc_begin, int64_t loc_end) {
    for (int64_t p = loc_begin; p < loc_end; ++p) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int64_t cc = 0; cc < c; ++cc) {
            const double va = a[cc * plane + p];
            const double vb = b[cc * plane + p];
            dot += va * vb;
            na += va * va;
            nb += vb * vb;
        }
        out[p] = cosine_of_sums(dot, na, nb, eps);
    }
}

inline void nearest_codes_row(const double* e, int64_t c, int64_t plane,
                              const double* codes, int64_t k, int64_t* idx,
                              int64_t loc_begin, int64_t loc_end) {
    for (int64_t p = loc_begin; p < loc_end; ++p) {
        double best = 0.0;
        int64_t best_k = 0;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double* code = codes + kk * c;
            double d = 0.0;
            for (int64_t cc = 0; cc < c; ++cc) {
                const double diff = e[cc * plane + p] - code[cc];
                d += diff * diff;
            }
            if (kk == 0 || d < best) {
                best = d;
                best_k = kk;
            }
        }
        idx[p] = best_k;
    }
}

struct GaussKernel {
    int64_t radius;
    std::vector<double> weights; // (2r+1)^2, normalized, row-major
};

inline GaussKernel make_gauss_kernel(double sigma) {
    GaussKernel k;
    k.radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    const int64_t size = 2 * k.radius + 1;
    k.weights.resize(static_cast<size_t>(size * size));
    double sum = 0.0;
    for (int64_t dy = -k.radius; dy <= k.radius; ++dy) {
        for (int64_t dx = -k.radius; dx <= k.radius; ++dx) {
            double v = std::exp(-(static_cast<double>(dy * dy + dx * dx)) / (2.0 * sigma * sigma));
            k.weights[static_cast<size_t>((dy + k.radius) * size + (dx + k.radius))] = v;
            sum += v;
        }
    }
    for (double& v : k.weights) v /= sum;
    return k;
}

inline void gaussian_blur_row(const double* in, int64_t h, int64_t w, const GaussKernel& k,
                              double* out, int64_t y) {
    const int64_t size = 2 * k.radius + 1;
    for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int64_t dy = -k.radius; dy <= k.radius; ++dy) {
            int64_t sy = y + dy;
            if (sy < 0) sy = 0;
            if (sy >= h) sy = h - 1;
            for (int64_t dx = -k.radius; dx <= k.radius; ++dx) {
                int64_t sx = x + dx;
                if (sx < 0) sx = 0;
                if (sx >= w) sx = w - 1;
                acc += k.weights[static_cast<size_t>((dy + k.radius) * size + (dx + k.radius))] * in[sy * w + sx];
            }
        }
        out[y * w + x] = acc;
    }
}

inline void ssim_row(const double* x, const double* y, int64_t w,
                     const double* win, int64_t wsize, double c1, double c2,
                     double* out, int64_t ow, int64_t oy) {
    for (int64_t ox = 0; ox < ow; ++ox) {
        double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
        for (int64_t dy = 0; dy < wsize; ++dy) {
            const double* xr = x + (oy + dy) * w + ox;
            const double* yr = y + (oy + dy) * w + ox;
            const double* wr = win + dy * wsize;
            for (int64_t dx = 0; dx < wsize; ++dx) {
                const double wv = wr[dx];
                mx += wv * xr[dx];
                my += wv * yr[dx];
                sxx += wv * xr[dx] * xr[dx];
                syy += wv * yr[dx] * yr[dx];
                sxy += wv * xr[dx] * yr[dx];
            }
        }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cxy = sxy - mx * my;
        out[oy * ow + ox] = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                            ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
}

inline void adamw_element(double* value, const double* grad, double* m, double* v, int64_t i,
                          double lr, double beta1, double beta2, double eps,
                          double weight_decay, double bias_c1, double bias_c2) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / bias_c1;
    const double vhat = v[i] / bias_c2;
    value[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * value[i]);
}

} // namespace s2ldm::kernels::body
