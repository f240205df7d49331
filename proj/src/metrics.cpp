#include "s2ldm/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "s2ldm/errors.hpp"
#include "s2ldm/kernels.hpp"

namespace s2ldm {

double nmae(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "nmae");
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        num += std::abs(pred[i] - target[i]);
        den += std::abs(target[i]);
    }
    if (den == 0.0) throw UndefinedMetricError("nmae: target is all zero");
    return num / den;
}

double nmse(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "nmse");
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - target[i];
        num += d * d;
        den += target[i] * target[i];
    }
    if (den == 0.0) throw UndefinedMetricError("nmse: target is all zero");
    return num / den;
}

PsnrResult psnr(const Tensor& pred, const Tensor& target, double data_range) {
    require_same_shape(pred, target, "psnr");
    if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be positive");
    double mse = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - target[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.numel());
    if (mse == 0.0) return {kPsnrExactCapDb, true};
    return {10.0 * std::log10(data_range * data_range / mse), false};
}

static Tensor gaussian_window(int64_t size, double sigma) {
    Tensor win({size, size});
    const double c = static_cast<double>(size - 1) / 2.0;
    double sum = 0.0;
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) - c;
            const double dx = static_cast<double>(x) - c;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            win.at(y, x) = v;
            sum += v;
        }
    }
    for (int64_t i = 0; i < win.numel(); ++i) win[i] /= sum;
    return win;
}

double ssim(const Tensor& pred, const Tensor& target, int64_t window, double sigma, double k1,
            double k2, double data_range) {
    require_same_shape(pred, target, "ssim");
    if (pred.ndim() != 2) throw std::invalid_argument("ssim: expects 2-D images");
    const int64_t h = pred.dim(0), w = pred.dim(1);
    if (h < window || w < window)
        throw std::invalid_argument("ssim: image smaller than the window");
    const Tensor win = gaussian_window(window, sigma);
    const double c1 = (k1 * data_range) * (k1 * data_range);
    const double c2 = (k2 * data_range) * (k2 * data_range);
    const int64_t oh = h - window + 1, ow = w - window + 1;
    Tensor map({oh, ow});
    kernels::ssim_map(pred.data(), target.data(), h, w, win.data(), window, c1, c2, map.data());
    double sum = 0.0;
    for (int64_t i = 0; i < map.numel(); ++i) sum += map[i];
    return sum / static_cast<double>(map.numel());
}

MetricReport evaluate_pairs(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets) {
    if (preds.size() != targets.size() || preds.empty())
        throw std::invalid_argument("evaluate_pairs: need equal, non-empty prediction/target sets");
    MetricReport r;
    r.n_images = static_cast<int64_t>(preds.size());
    r.psnr_exact = true;
    for (size_t i = 0; i < preds.size(); ++i) {
        r.nmae += nmae(preds[i], targets[i]);
        r.nmse += nmse(preds[i], targets[i]);
        const PsnrResult p = psnr(preds[i], targets[i]);
        r.psnr_db += p.db;
        r.psnr_exact = r.psnr_exact && p.exact;
        r.ssim += ssim(preds[i], targets[i]);
    }
    const double inv = 1.0 / static_cast<double>(r.n_images);
    r.nmae *= inv;
    r.nmse *= inv;
    r.psnr_db *= inv;
    r.ssim *= inv;
    return r;
}

std::string report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["nmae"] = r.nmae;
    j["nmse"] = r.nmse;
    j["psnr_db"] = r.psnr_db;
    j["psnr_exact"] = r.psnr_exact;
    j["ssim"] = r.ssim;
    j["n_images"] = r.n_images;
    return j.dump(2) + "\n";
}

} // namespace s2ldm
