// Serial reference implementations. Kept as the ground truth the OpenMP
// traversals are tested against bit-for-bit.

#include "s2ldm/kernels.hpp"

#include "kernel_bodies.hpp"

namespace s2ldm::kernels::serial {

using namespace s2ldm::kernels::body;

void conv3x3_forward(const double* in, int64_t ci, int64_t h, int64_t w,
                     const double* wgt, const double* bias, int64_t co, int64_t stride,
                     double* out, int64_t oh, int64_t ow) {
    for (int64_t oc = 0; oc < co; ++oc)
        for (int64_t oy = 0; oy < oh; ++oy)
            conv3x3_out_row(in, ci, h, w, wgt, bias, stride, out + oc * oh * ow, ow, oc, oy);
}

void conv3x3_grad_input(const double* wgt, int64_t ci, int64_t co, int64_t stride,
                        const double* gout, int64_t oh, int64_t ow,
                        double* gin, int64_t h, int64_t w) {
    for (int64_t ic = 0; ic < ci; ++ic)
        for (int64_t iy = 0; iy < h; ++iy)
            conv3x3_gin_row(wgt, ci, co, stride, gout, oh, ow, gin + ic * h * w, h, w, ic, iy);
}

void conv3x3_grad_params(const double* in, int64_t ci, int64_t h, int64_t w,
                         const double* gout, int64_t co, int64_t oh, int64_t ow, int64_t stride,
                         double* gw, double* gb) {
    for (int64_t oc = 0; oc < co; ++oc)
        conv3x3_gparams_oc(in, ci, h, w, gout, oh, ow, stride, gw, gb, oc);
}

void upsample2x_forward(const double* in, int64_t c, int64_t h, int64_t w, double* out) {
    for (int64_t cc = 0; cc < c; ++cc)
        for (int64_t oy = 0; oy < 2 * h; ++oy)
            upsample2x_out_row(in, h, w, out, cc, oy);
}

void upsample2x_grad(const double* gout, int64_t c, int64_t h, int64_t w, double* gin) {
    for (int64_t cc = 0; cc < c; ++cc)
        for (int64_t y = 0; y < h; ++y)
            upsample2x_gin_row(gout, h, w, gin, cc, y);
}

void group_norm_forward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                        double eps, const double* gamma, const double* beta,
                        double* out, double* mean, double* inv_std) {
    for (int64_t g = 0; g < groups; ++g)
        group_norm_fwd_group(in, c, h, w, groups, eps, gamma, beta, out, mean, inv_std, g);
}

void group_norm_backward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                         const double* gamma, const double* mean, const double* inv_std,
                         const double* gout, double* gin, double* ggamma, double* gbeta) {
    for (int64_t g = 0; g < groups; ++g)
        group_norm_bwd_group(in, c, h, w, groups, gamma, mean, inv_std, gout, gin, ggamma, gbeta, g);
}

void silu_forward(const double* in, int64_t n, double* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = silu_val(in[i]);
}

void silu_backward(const double* in, const double* gout, int64_t n, double* gin) {
    for (int64_t i = 0; i < n; ++i) gin[i] = gout[i] * silu_grad_val(in[i]);
}

void relu_forward(const double* in, int64_t n, double* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(const double* in, const double* gout, int64_t n, double* gin) {
    for (int64_t i = 0; i < n; ++i) gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
}

void tanh_forward(const double* in, int64_t n, double* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
}

void tanh_backward(const double* in, const double* gout, int64_t n, double* gin) {
    for (int64_t i = 0; i < n; ++i) {
        const double t = std::tanh(in[i]);
        gin[i] = gout[i] * (1.0 - t * t);
    }
}

void ew_add(const double* a, const double* b, int64_t n, double* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void ew_mul(const double* a, const double* b, int64_t n, double* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void ew_scale(const double* a, double s, int64_t n, double* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void adamw_update(double* value, const double* grad, double* m, double* v, int64_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay,
                  double bias_c1, double bias_c2) {
    for (int64_t i = 0; i < n; ++i)
        adamw_element(value, grad, m, v, i, lr, beta1, beta2, eps, weight_decay, bias_c1, bias_c2);
}

void cosine_map(const double* a, const double* b, int64_t c, int64_t h, int64_t w,
                double eps, double* out) {
    const int64_t plane = h * w;
    for (int64_t y = 0; y < h; ++y)
        cosine_row(a, b, c, plane, eps, out, y * w, (y + 1) * w);
}

void nearest_codes(const double* e, int64_t c, int64_t h, int64_t w,
                   const double* codes, int64_t k, int64_t* idx) {
    const int64_t plane = h * w;
    for (int64_t y = 0; y < h; ++y)
        nearest_codes_row(e, c, plane, codes, k, idx, y * w, (y + 1) * w);
}

void gaussian_blur(const double* in, int64_t h, int64_t w, double sigma, double* out) {
    const GaussKernel k = make_gauss_kernel(sigma);
    for (int64_t y = 0; y < h; ++y) gaussian_blur_row(in, h, w, k, out, y);
}

void ssim_map(const double* x, const double* y, int64_t h, int64_t w,
              const double* win, int64_t wsize, double c1, double c2, double* out) {
    const int64_t oh = h - wsize + 1;
    const int64_t ow = w - wsize + 1;
    for (int64_t oy = 0; oy < oh; ++oy)
        ssim_row(x, y, w, win, wsize, c1, c2, out, ow, oy);
}

} // namespace s2ldm::kernels::serial
