#pragma once

#include <cstdint>

namespace s2ldm::kernels {

// Global execution mode. The OpenMP path is the default; the serial path is
// the reference implementation used by the equivalence tests and benchmark.
// Every kernel writes disjoint outputs with a fixed per-element accumulation
// order, so both paths produce bit-identical results for any thread count.
enum class Mode { Serial, Parallel };
void set_mode(Mode m);
Mode mode();

// 3x3 convolution, zero padding 1, stride 1 or 2.
// in [ci,h,w], wgt [co,ci,3,3], bias [co], out [co,oh,ow] with
// oh = (h + 2 - 3)/stride + 1 (= h for stride 1, ceil(h/2) for stride 2).
void conv3x3_forward(const double* in, int64_t ci, int64_t h, int64_t w,
                     const double* wgt, const double* bias, int64_t co, int64_t stride,
                     double* out, int64_t oh, int64_t ow);

// Gradient wrt the convolution input (gather form, overwrites gin).
void conv3x3_grad_input(const double* wgt, int64_t ci, int64_t co, int64_t stride,
                        const double* gout, int64_t oh, int64_t ow,
                        double* gin, int64_t h, int64_t w);

// Gradient wrt weights and bias (overwrites gw [co,ci,3,3] and gb [co]).
void conv3x3_grad_params(const double* in, int64_t ci, int64_t h, int64_t w,
                         const double* gout, int64_t co, int64_t oh, int64_t ow, int64_t stride,
                         double* gw, double* gb);

// Nearest-neighbor 2x upsampling, in [c,h,w] -> out [c,2h,2w], and its adjoint.
void upsample2x_forward(const double* in, int64_t c, int64_t h, int64_t w, double* out);
void upsample2x_grad(const double* gout, int64_t c, int64_t h, int64_t w, double* gin);

// Group normalization over [c,h,w]; `mean` and `inv_std` have length `groups`.
void group_norm_forward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                        double eps, const double* gamma, const double* beta,
                        double* out, double* mean, double* inv_std);
void group_norm_backward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                         const double* gamma, const double* mean, const double* inv_std,
                         const double* gout, double* gin, double* ggamma, double* gbeta);

// Elementwise activations and their input gradients.
void silu_forward(const double* in, int64_t n, double* out);
void silu_backward(const double* in, const double* gout, int64_t n, double* gin);
void relu_forward(const double* in, int64_t n, double* out);
void relu_backward(const double* in, const double* gout, int64_t n, double* gin);
void tanh_forward(const double* in, int64_t n, double* out);
void tanh_backward(const double* in, const double* gout, int64_t n, double* gin);

// out[i] = a[i] + b[i]  /  out[i] = a[i] * b[i]  /  out[i] = a[i] * s
void ew_add(const double* a, const double* b, int64_t n, double* out);
void ew_mul(const double* a, const double* b, int64_t n, double* out);
void ew_scale(const double* a, double s, int64_t n, double* out);

// Decoupled-weight-decay Adam update over a flat parameter array.
// bias_c1 = 1 - beta1^step, bias_c2 = 1 - beta2^step (step already incremented).
void adamw_update(double* value, const double* grad, double* m, double* v, int64_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay,
                  double bias_c1, double bias_c2);

// Per-location cosine similarity between two [c,h,w] latents -> out [h*w].
void cosine_map(const double* a, const double* b, int64_t c, int64_t h, int64_t w,
                double eps, double* out);

// Nearest codebook entry (squared Euclidean) per spatial location; ties go to
// the lowest code index. e [c,h,w], codes [k,c], idx [h*w].
void nearest_codes(const double* e, int64_t c, int64_t h, int64_t w,
                   const double* codes, int64_t k, int64_t* idx);

// Direct 2-D Gaussian blur with replicate borders; radius = ceil(3*sigma).
void gaussian_blur(const double* in, int64_t h, int64_t w, double sigma, double* out);

// Windowed SSIM values at every valid position. win is a normalized wsize*wsize
// weight matrix; out has (h-wsize+1)*(w-wsize+1) entries.
void ssim_map(const double* x, const double* y, int64_t h, int64_t w,
              const double* win, int64_t wsize, double c1, double c2, double* out);

// Serial reference and OpenMP implementations, exposed for the equivalence
// tests and the benchmark. The unqualified functions above dispatch on mode().
namespace serial {
void conv3x3_forward(const double* in, int64_t ci, int64_t h, int64_t w,
                     const double* wgt, const double* bias, int64_t co, int64_t stride,
                     double* out, int64_t oh, int64_t ow);
void conv3x3_grad_input(const double* wgt, int64_t ci, int64_t co, int64_t stride,
                        const double* gout, int64_t oh, int64_t ow,
                        double* gin, int64_t h, int64_t w);
void conv3x3_grad_params(const double* in, int64_t ci, int64_t h, int64_t w,
                         const double* gout, int64_t co, int64_t oh, int64_t ow, int64_t stride,
                         double* gw, double* gb);
void upsample2x_forward(const double* in, int64_t c, int64_t h, int64_t w, double* out);
void upsample2x_grad(const double* gout, int64_t c, int64_t h, int64_t w, double* gin);
void group_norm_forward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                        double eps, const double* gamma, const double* beta,
                        double* out, double* mean, double* inv_std);
void group_norm_backward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                         const double* gamma, const double* mean, const double* inv_std,
                         const double* gout, double* gin, double* ggamma, double* gbeta);
void silu_forward(const double* in, int64_t n, double* out);
void silu_backward(const double* in, const double* gout, int64_t n, double* gin);
void relu_forward(const double* in, int64_t n, double* out);
void relu_backward(const double* in, const double* gout, int64_t n, double* gin);
void tanh_forward(const double* in, int64_t n, double* out);
void tanh_backward(const double* in, const double* gout, int64_t n, double* gin);
void ew_add(const double* a, const double* b, int64_t n, double* out);
void ew_mul(const double* a, const double* b, int64_t n, double* out);
void ew_scale(const double* a, double s, int64_t n, double* out);
void adamw_update(double* value, const double* grad, double* m, double* v, int64_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay,
                  double bias_c1, double bias_c2);
void cosine_map(const double* a, const double* b, int64_t c, int64_t h, int64_t w,
                double eps, double* out);
void nearest_codes(const double* e, int64_t c, int64_t h, int64_t w,
                   const double* codes, int64_t k, int64_t* idx);
void gaussian_blur(const double* in, int64_t h, int64_t w, double sigma, double* out);
void ssim_map(const double* x, const double* y, int64_t h, int64_t w,
              const double* win, int64_t wsize, double c1, double c2, double* out);
} // namespace serial

namespace omp {
void conv3x3_forward(const double* in, int64_t ci, int64_t h, int64_t w,
                     const double* wgt, const double* bias, int64_t co, int64_t stride,
                     double* out, int64_t oh, int64_t ow);
void conv3x3_grad_input(const double* wgt, int64_t ci, int64_t co, int64_t stride,
                        const double* gout, int64_t oh, int64_t ow,
                        double* gin, int64_t h, int64_t w);
void conv3x3_grad_params(const double* in, int64_t ci, int64_t h, int64_t w,
                         const double* gout, int64_t co, int64_t oh, int64_t ow, int64_t stride,
                         double* gw, double* gb);
void upsample2x_forward(const double* in, int64_t c, int64_t h, int64_t w, double* out);
void upsample2x_grad(const double* gout, int64_t c, int64_t h, int64_t w, double* gin);
void group_norm_forward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                        double eps, const double* gamma, const double* beta,
                        double* out, double* mean, double* inv_std);
void group_norm_backward(const double* in, int64_t c, int64_t h, int64_t w, int64_t groups,
                         const double* gamma, const double* mean, const double* inv_std,
                         const double* gout, double* gin, double* ggamma, double* gbeta);
void silu_forward(const double* in, int64_t n, double* out);
void silu_backward(const double* in, const double* gout, int64_t n, double* gin);
void relu_forward(const double* in, int64_t n, double* out);
void relu_backward(const double* in, const double* gout, int64_t n, double* gin);
void tanh_forward(const double* in, int64_t n, double* out);
void tanh_backward(const double* in, const double* gout, int64_t n, double* gin);
void ew_add(const double* a, const double* b, int64_t n, double* out);
void ew_mul(const double* a, const double* b, int64_t n, double* out);
void ew_scale(const double* a, double s, int64_t n, double* out);
void adamw_update(double* value, const double* grad, double* m, double* v, int64_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay,
                  double bias_c1, double bias_c2);
void cosine_map(const double* a, const double* b, int64_t c, int64_t h, int64_t w,
                double eps, double* out);
void nearest_codes(const double* e, int64_t c, int64_t h, int64_t w,
                   const double* codes, int64_t k, int64_t* idx);
void gaussian_blur(const double* in, int64_t h, int64_t w, double sigma, double* out);
void ssim_map(const double* x, const double* y, int64_t h, int64_t w,
              const double* win, int64_t wsize, double c1, double c2, double* out);
} // namespace omp

} // namespace s2ldm::kernels
