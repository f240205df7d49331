#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "s2ldm/tensor.hpp"

namespace s2ldm {

// 2-D grid of Hounsfield-unit values.
struct HUImage {
    Tensor pixels; // [h,w]
    int64_t height() const { return pixels.dim(0); }
    int64_t width() const { return pixels.dim(1); }
};

// 2-D grid of values in [-1, 1].
struct NormalizedImage {
    Tensor pixels; // [h,w]
    int64_t height() const { return pixels.dim(0); }
    int64_t width() const { return pixels.dim(1); }
};

// A synthetic non-contrast / contrast-enhanced pair with ground truth.
// The two HU grids differ exactly on the support of contrast_mask, and the
// difference there lies in [delta_min, delta_max].
struct PairedSample {
    HUImage ncct;
    HUImage cect;
    Tensor contrast_mask; // [h,w], 0/1
    uint64_t seed = 0;
};

struct PhantomSpec {
    int64_t organ_count_min = 2, organ_count_max = 4;
    int64_t vessel_count_min = 2, vessel_count_max = 6;
    double vessel_radius_min = 2.0, vessel_radius_max = 6.0;
    double capsule_prob = 0.5;            // otherwise a disk
    double capsule_len_min = 6.0, capsule_len_max = 14.0;
    double delta_min = 100.0, delta_max = 250.0; // contrast enhancement, HU
    double noise_sigma = 5.0;                    // shared pixel noise, HU
    double air_hu = -1000.0;
    double body_hu = 40.0;
    double organ_hu_min = 20.0, organ_hu_max = 80.0;
    // Vessels carry their own tissue intensity in both images so contrast
    // regions remain inferable from the non-contrast image alone.
    double vessel_base_hu_min = 80.0, vessel_base_hu_max = 120.0;
};

// Deterministic function of (seed, size, spec). The same anatomy and the same
// noise realization go into both images; only the contrast delta differs.
PairedSample gen_pair(uint64_t seed, int64_t size, const PhantomSpec& spec = {});

// Clip to [level - width/2, level + width/2], then map affinely onto [-1, 1].
NormalizedImage window_normalize(const HUImage& img, double window_width = 400.0,
                                 double window_level = 0.0);

// Seed-determined crop offset; the same (seed, shape, patch) always gives the
// same offset, so paired images crop in alignment.
std::pair<int64_t, int64_t> crop_offset(uint64_t seed, int64_t h, int64_t w, int64_t patch);
NormalizedImage crop_patch(const NormalizedImage& img, int64_t patch, uint64_t seed);
Tensor crop_grid(const Tensor& grid, int64_t patch, uint64_t seed); // same offset rule

// Deterministic shuffle then 4:1 split; |train| = round(0.8 N).
std::pair<std::vector<PairedSample>, std::vector<PairedSample>>
split_dataset(std::vector<PairedSample> pairs, uint64_t seed);

} // namespace s2ldm
