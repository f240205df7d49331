#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2ldm/tensor.hpp"

namespace s2ldm {

// Aggregated evaluation over a set of image pairs (means of per-image values).
struct MetricReport {
    double nmae = 0.0;
    double nmse = 0.0;
    double psnr_db = 0.0;
    bool psnr_exact = false; // every pair matched exactly
    double ssim = 0.0;
    int64_t n_images = 0;
};

// Target-normalized absolute error: sum|pred - target| / sum|target|.
double nmae(const Tensor& pred, const Tensor& target);

// Target-normalized squared error: ||pred - target||^2 / ||target||^2.
double nmse(const Tensor& pred, const Tensor& target);

struct PsnrResult {
    double db = 0.0;
    bool exact = false;
};

// 10*log10(range^2 / MSE). Exact matches report the documented 99 dB cap
// with the exact flag set.
PsnrResult psnr(const Tensor& pred, const Tensor& target, double data_range = 2.0);
inline constexpr double kPsnrExactCapDb = 99.0;

// Mean SSIM over all fully-valid window positions, Gaussian-weighted window.
double ssim(const Tensor& pred, const Tensor& target, int64_t window = 11, double sigma = 1.5,
            double k1 = 0.01, double k2 = 0.03, double data_range = 2.0);

MetricReport evaluate_pairs(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets);

// JSON document with keys {"nmae","nmse","psnr_db","psnr_exact","ssim","n_images"}.
std::string report_to_json(const MetricReport& r);

} // namespace s2ldm
