#include "s2ldm/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace s2ldm::kernels {

namespace {

Mode initial_mode() {
    const char* env = std::getenv("S2LDM_SERIAL");
    if (env && env[0] == '1') return Mode::Serial;
    return Mode::Parallel;
}

std::atomic<Mode> g_mode{initial_mode()};

} // namespace

void set_mode(Mode m) { g_mode.store(m); }
Mode mode() { return g_mode.load(); }

#define S2LDM_DISPATCH(fn, ...)                       \
    do {                                              \
        if (mode() == Mode::Parallel)                 \
            omp::fn(__VA_ARGS__);                     \
        else                                          \
            serial::fn(__VA_ARGS__);                  \
    } while (0)

void conv3x3_forward(const double* in, int64_t ci, int64_t h, int64_t w,
                     const double* wgt, const double* bias, int64_t co, int64_t stride,
                     double* out, int64_t oh, int64_t ow) {
    S2LDM_DISPATCH(conv3x3_forward, in, ci, h, w, wgt, bias, co, stride, out, oh, ow);
}

void conv3x3_grad_input(const double* wgt, int64_t ci, int64_t co, int64_t stride,
                        const double* gout, int64_t oh, int64_t ow,
                        double* gin, int64_t h, int64_t w) {
    S2LDM_DISPATCH(conv3x3_grad_input, wgt, ci, co, stride, gout, oh, ow, gin, h, w);
}

void conv3x3_grad_params(const double* in, int64_t ci, int64_t h, int64_t w,
                         const double* gout, int64_t co, int64_t oh, int64_t ow, int64_t stride,
                         double* gw, double* gb) {
    S2LDM_DISPATCH(conv3x3_grad_params, in, ci, h, w, gout, co, oh, ow, stride, gw, gb);
}

void upsample2x_forward(const double* in, int64_t c, int64_t h, int64_t w, double* out) {
    S2LDM_DISPATCH(upsample2x_forward, in, c, h, w, out);
}

void upsample2x_grad(const double* gout, int64_t c, int64_t h, int64_t w, double* gin) {
    S2LDM_DISPATCH(upsample2x_grad, gout, c, h, w, gin);
}

void group_norm_forward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                        double eps, const double* gamma, const double* beta,
                        double* out, double* mean, double* inv_std) {
    S2LDM_DISPATCH(group_norm_forward, in, c, h, w, groups, eps, gamma, beta, out, mean, inv_std);
}

void group_norm_backward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                         const double* gamma, const double* mean, const double* inv_std,
                         const double* gout, double* gin, double* ggamma, double* gbeta) {
    S2LDM_DISPATCH(group_norm_backward, in, c, h, w, groups, gamma, mean, inv_std, gout, gin, ggamma, gbeta);
}

void silu_forward(const double* in, int64_t n, double* out) { S2LDM_DISPATCH(silu_forward, in, n, out); }
void silu_backward(const double* in, const double* gout, int64_t n, double* gin) {
    S2LDM_DISPATCH(silu_backward, in, gout, n, gin);
}
void relu_forward(const double* in, int64_t n, double* out) { S2LDM_DISPATCH(relu_forward, in, n, out); }
void relu_backward(const double* in, const double* gout, int64_t n, double* gin) {
    S2LDM_DISPATCH(relu_backward, in, gout, n, gin);
}
void tanh_forward(const double* in, int64_t n, double* out) { S2LDM_DISPATCH(tanh_forward, in, n, out); }
void tanh_backward(const double* in, const double* gout, int64_t n, double* gin) {
    S2LDM_DISPATCH(tanh_backward, in, gout, n, gin);
}

void ew_add(const double* a, const double* b, int64_t n, double* out) { S2LDM_DISPATCH(ew_add, a, b, n, out); }
void ew_mul(const double* a, const double* b, int64_t n, double* out) { S2LDM_DISPATCH(ew_mul, a, b, n, out); }
void ew_scale(const double* a, double s, int64_t n, double* out) { S2LDM_DISPATCH(ew_scale, a, s, n, out); }

void adamw_update(double* value, const double* grad, double* m, double* v, int64_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay,
                  double bias_c1, double bias_c2) {
    S2LDM_DISPATCH(adamw_update, value, grad, m, v, n, lr, beta1, beta2, eps, weight_decay, bias_c1, bias_c2);
}

void cosine_map(const double* a, const double* b, int64_t c, int64_t h, int64_t w,
                double eps, double* out) {
    S2LDM_DISPATCH(cosine_map, a, b, c, h, w, eps, out);
}

void nearest_codes(const double* e, int64_t c, int64_t h, int64_t w,
                   const double* codes, int64_t k, int64_t* idx) {
    S2LDM_DISPATCH(nearest_codes, e, c, h, w, codes, k, idx);
}

void gaussian_blur(const double* in, int64_t h, int64_t w, double sigma, double* out) {
    S2LDM_DISPATCH(gaussian_blur, in, h, w, sigma, out);
}

void ssim_map(const double* x, const double* y, int64_t h, int64_t w,
              const double* win, int64_t wsize, double c1, double c2, double* out) {
    S2LDM_DISPATCH(ssim_map, x, y, h, w, win, wsize, c1, c2, out);
}

#undef S2LDM_DISPATCH

} // namespace s2ldm::kernels
