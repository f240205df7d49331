#include "s2ldm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "s2ldm/rng.hpp"

namespace s2ldm {

namespace {

// Stream ids reserved by the generator so draws stay decoupled.
constexpr uint64_t kStreamAnatomy = 1;
constexpr uint64_t kStreamNoise = 2;
constexpr uint64_t kStreamCrop = 3;
constexpr uint64_t kStreamSplit = 4;

struct Ellipse {
    double cy, cx, ry, rx, angle, hu;
};

bool inside_ellipse(const Ellipse& e, double y, double x) {
    const double dy = y - e.cy;
    const double dx = x - e.cx;
    const double ca = std::cos(e.angle), sa = std::sin(e.angle);
    const double u = (ca * dx + sa * dy) / e.rx;
    const double v = (-sa * dx + ca * dy) / e.ry;
    return u * u + v * v <= 1.0;
}

double uniform_in(RngStream& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.next_uniform();
}

// Squared distance from point p to segment [a, b].
double segment_dist2(double py, double px, double ay, double ax, double by, double bx) {
    const double vy = by - ay, vx = bx - ax;
    const double len2 = vy * vy + vx * vx;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((py - ay) * vy + (px - ax) * vx) / len2, 0.0, 1.0);
    const double dy = py - (ay + t * vy);
    const double dx = px - (ax + t * vx);
    return dy * dy + dx * dx;
}

} // namespace

PairedSample gen_pair(uint64_t seed, int64_t size, const PhantomSpec& spec) {
    if (size < 32) throw std::invalid_argument("gen_pair: size must be at least 32");
    if (!(spec.delta_min > 0.0) || !(spec.delta_max >= spec.delta_min))
        throw std::invalid_argument("gen_pair: contrast delta range must satisfy 0 < min <= max");

    RngStream rng(seed, kStreamAnatomy);
    const double s = static_cast<double>(size);

    // Shared anatomy: body over air, organs inside the body.
    Ellipse body;
    body.cy = s / 2.0 + uniform_in(rng, -0.02, 0.02) * s;
    body.cx = s / 2.0 + uniform_in(rng, -0.02, 0.02) * s;
    body.ry = uniform_in(rng, 0.36, 0.44) * s;
    body.rx = uniform_in(rng, 0.38, 0.46) * s;
    body.angle = uniform_in(rng, -0.2, 0.2);
    body.hu = spec.body_hu + uniform_in(rng, -10.0, 10.0);

    const int64_t n_organs = spec.organ_count_min + rng.next_below(spec.organ_count_max - spec.organ_count_min + 1);
    std::vector<Ellipse> organs;
    for (int64_t i = 0; i < n_organs; ++i) {
        Ellipse o;
        o.cy = body.cy + uniform_in(rng, -0.5, 0.5) * body.ry;
        o.cx = body.cx + uniform_in(rng, -0.5, 0.5) * body.rx;
        o.ry = uniform_in(rng, 0.10, 0.28) * s;
        o.rx = uniform_in(rng, 0.10, 0.28) * s;
        o.angle = uniform_in(rng, -1.5, 1.5);
        o.hu = uniform_in(rng, spec.organ_hu_min, spec.organ_hu_max);
        organs.push_back(o);
    }

    // Vessels: capsule (thick segment) or disk, each with a base tissue HU
    // painted into both images and an enhancement delta applied to cect only.
    struct Vessel {
        double ay, ax, by, bx, r, base_hu, delta;
    };
    const int64_t n_vessels = spec.vessel_count_min + rng.next_below(spec.vessel_count_max - spec.vessel_count_min + 1);
    std::vector<Vessel> vessels;
    for (int64_t i = 0; i < n_vessels; ++i) {
        Vessel v;
        v.r = uniform_in(rng, spec.vessel_radius_min, spec.vessel_radius_max);
        // Center well inside the body so the vessel stays on tissue.
        const double margin = 0.7;
        v.ay = body.cy + uniform_in(rng, -margin, margin) * (body.ry - v.r - 2.0);
        v.ax = body.cx + uniform_in(rng, -margin, margin) * (body.rx - v.r - 2.0);
        if (rng.next_uniform() < spec.capsule_prob) {
            const double len = uniform_in(rng, spec.capsule_len_min, spec.capsule_len_max);
            const double ang = uniform_in(rng, 0.0, 2.0 * 3.14159265358979323846);
            v.by = v.ay + len * std::sin(ang);
            v.bx = v.ax + len * std::cos(ang);
        } else {
            v.by = v.ay;
            v.bx = v.ax;
        }
        v.base_hu = uniform_in(rng, spec.vessel_base_hu_min, spec.vessel_base_hu_max);
        v.delta = uniform_in(rng, spec.delta_min, spec.delta_max);
        vessels.push_back(v);
    }

    Tensor shared({size, size});
    Tensor delta_map({size, size});
    Tensor mask({size, size});
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const double fy = static_cast<double>(y), fx = static_cast<double>(x);
            double hu = spec.air_hu;
            if (inside_ellipse(body, fy, fx)) {
                hu = body.hu;
                for (const Ellipse& o : organs)
                    if (inside_ellipse(o, fy, fx)) hu = o.hu;
            }
            // Vessels overwrite (not add) so the delta stays inside its range
            // even where vessels overlap.
            for (const Vessel& v : vessels) {
                if (segment_dist2(fy, fx, v.ay, v.ax, v.by, v.bx) <= v.r * v.r) {
                    hu = v.base_hu;
                    delta_map.at(y, x) = v.delta;
                    mask.at(y, x) = 1.0;
                }
            }
            shared.at(y, x) = hu;
        }
    }

    // One noise realization for both images keeps the difference image
    // exactly mask-supported.
    RngStream noise_rng(seed, kStreamNoise);
    PairedSample out;
    out.seed = seed;
    out.ncct.pixels = Tensor({size, size});
    out.cect.pixels = Tensor({size, size});
    out.contrast_mask = mask;
    for (int64_t i = 0; i < size * size; ++i) {
        const double noise = spec.noise_sigma * noise_rng.next_gaussian();
        out.ncct.pixels[i] = shared[i] + noise;
        out.cect.pixels[i] = shared[i] + noise + delta_map[i];
    }
    return out;
}

NormalizedImage window_normalize(const HUImage& img, double window_width, double window_level) {
    if (!(window_width > 0.0))
        throw std::invalid_argument("window_normalize: window width must be positive");
    const double lo = window_level - window_width / 2.0;
    NormalizedImage out;
    out.pixels = Tensor(img.pixels.dims());
    for (int64_t i = 0; i < img.pixels.numel(); ++i) {
        const double clipped = std::clamp(img.pixels[i], lo, lo + window_width);
        out.pixels[i] = 2.0 * (clipped - lo) / window_width - 1.0;
    }
    return out;
}

std::pair<int64_t, int64_t> crop_offset(uint64_t seed, int64_t h, int64_t w, int64_t patch) {
    if (patch <= 0 || patch > h || patch > w)
        throw std::invalid_argument("crop_offset: patch must fit inside the image");
    RngStream rng(seed, kStreamCrop);
    const int64_t oy = rng.next_below(h - patch + 1);
    const int64_t ox = rng.next_below(w - patch + 1);
    return {oy, ox};
}

Tensor crop_grid(const Tensor& grid, int64_t patch, uint64_t seed) {
    const auto [oy, ox] = crop_offset(seed, grid.dim(0), grid.dim(1), patch);
    Tensor out({patch, patch});
    for (int64_t y = 0; y < patch; ++y)
        for (int64_t x = 0; x < patch; ++x) out.at(y, x) = grid.at(oy + y, ox + x);
    return out;
}

NormalizedImage crop_patch(const NormalizedImage& img, int64_t patch, uint64_t seed) {
    return {crop_grid(img.pixels, patch, seed)};
}

std::pair<std::vector<PairedSample>, std::vector<PairedSample>>
split_dataset(std::vector<PairedSample> pairs, uint64_t seed) {
    const int64_t n = static_cast<int64_t>(pairs.size());
    if (n < 5) throw std::invalid_argument("split_dataset: need at least 5 pairs");
    RngStream rng(seed, kStreamSplit);
    // Fisher-Yates with the counter-based stream.
    for (int64_t i = n - 1; i > 0; --i) {
        const int64_t j = rng.next_below(i + 1);
        std::swap(pairs[static_cast<size_t>(i)], pairs[static_cast<size_t>(j)]);
    }
    const int64_t n_train = std::llround(0.8 * static_cast<double>(n));
    std::vector<PairedSample> train(pairs.begin(), pairs.begin() + n_train);
    std::vector<PairedSample> val(pairs.begin() + n_train, pairs.end());
    return {std::move(train), std::move(val)};
}

} // namespace s2ldm
