#include "doctest.h"

#include <cmath>
#include <set>

#include "s2ldm/phantom.hpp"
#include "test_util.hpp"

using namespace s2ldm;
using s2ldm::test::same_bits;

TEST_CASE("gen_pair is deterministic in (seed, size, spec)") {
    const PairedSample a = gen_pair(1, 64);
    const PairedSample b = gen_pair(1, 64);
    CHECK(same_bits(a.ncct.pixels, b.ncct.pixels));
    CHECK(same_bits(a.cect.pixels, b.cect.pixels));
    CHECK(same_bits(a.contrast_mask, b.contrast_mask));
}

TEST_CASE("gen_pair differences live exactly on the contrast mask") {
    const PhantomSpec spec;
    for (uint64_t seed : {1ull, 7ull, 99ull}) {
        const PairedSample s = gen_pair(seed, 64, spec);
        bool mask_nonempty = false;
        for (int64_t i = 0; i < s.ncct.pixels.numel(); ++i) {
            const double diff = s.cect.pixels[i] - s.ncct.pixels[i];
            if (s.contrast_mask[i] != 0.0) {
                mask_nonempty = true;
                CHECK(diff >= spec.delta_min);
                CHECK(diff <= spec.delta_max);
            } else {
                CHECK(diff == 0.0);
            }
        }
        CHECK(mask_nonempty);
    }
}

TEST_CASE("different seeds give different phantoms") {
    const PairedSample a = gen_pair(1, 64);
    const PairedSample b = gen_pair(2, 64);
    CHECK(!same_bits(a.ncct.pixels, b.ncct.pixels));
}

TEST_CASE("gen_pair validates its arguments") {
    CHECK_THROWS_AS(gen_pair(1, 31), std::invalid_argument);
    PhantomSpec bad;
    bad.delta_min = 0.0;
    CHECK_THROWS_AS(gen_pair(1, 64, bad), std::invalid_argument);
    PhantomSpec empty;
    empty.delta_min = 200.0;
    empty.delta_max = 100.0;
    CHECK_THROWS_AS(gen_pair(1, 64, empty), std::invalid_argument);
}

TEST_CASE("window_normalize maps the window onto [-1, 1]") {
    HUImage img{Tensor({2, 3}, {0.0, 200.0, -200.0, 550.0, -1000.0, 100.0})};
    const NormalizedImage n = window_normalize(img, 400.0, 0.0);
    CHECK(n.pixels[0] == 0.0);
    CHECK(n.pixels[1] == 1.0);
    CHECK(n.pixels[2] == -1.0);
    CHECK(n.pixels[3] == 1.0);  // clipped above
    CHECK(n.pixels[4] == -1.0); // clipped below
    CHECK(n.pixels[5] == doctest::Approx(0.5));
    CHECK_THROWS_AS(window_normalize(img, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("window_normalize is monotone in HU") {
    RngStream rng(5, 0);
    Tensor hu({64});
    for (int64_t i = 0; i < 64; ++i) hu[i] = -400.0 + 12.5 * static_cast<double>(i);
    const NormalizedImage n = window_normalize({Tensor({8, 8}, hu.vec())});
    for (int64_t i = 1; i < 64; ++i) CHECK(n.pixels[i] >= n.pixels[i - 1]);
}

TEST_CASE("crop_patch identity and determinism") {
    const PairedSample s = gen_pair(3, 64);
    const NormalizedImage n = window_normalize(s.ncct);
    const NormalizedImage full = crop_patch(n, 64, 5);
    CHECK(same_bits(full.pixels, n.pixels));

    const NormalizedImage a = crop_patch(n, 32, 5);
    const NormalizedImage b = crop_patch(n, 32, 5);
    CHECK(same_bits(a.pixels, b.pixels));

    CHECK_THROWS_AS(crop_patch(n, 65, 5), std::invalid_argument);
}

TEST_CASE("paired crops stay aligned: crop commutes with the difference") {
    const PhantomSpec spec;
    const PairedSample s = gen_pair(11, 64, spec);
    const NormalizedImage xn = window_normalize(s.ncct);
    const NormalizedImage xc = window_normalize(s.cect);
    const uint64_t crop_seed = 77;
    const NormalizedImage cn = crop_patch(xn, 32, crop_seed);
    const NormalizedImage cc = crop_patch(xc, 32, crop_seed);
    const Tensor cmask = crop_grid(s.contrast_mask, 32, crop_seed);
    for (int64_t i = 0; i < cn.pixels.numel(); ++i) {
        const double diff = cc.pixels[i] - cn.pixels[i];
        if (cmask[i] == 0.0) {
            CHECK(diff == 0.0);
        } else {
            CHECK(diff >= 0.0);
        }
    }
}

TEST_CASE("split_dataset reproduces the 4:1 ratio") {
    std::vector<PairedSample> pairs;
    for (int i = 0; i < 170; ++i) pairs.push_back(gen_pair(static_cast<uint64_t>(i), 32));
    auto [train, val] = split_dataset(pairs, 9);
    CHECK(train.size() == 136);
    CHECK(val.size() == 34);

    std::vector<PairedSample> five(pairs.begin(), pairs.begin() + 5);
    auto [t5, v5] = split_dataset(five, 9);
    CHECK(t5.size() == 4);
    CHECK(v5.size() == 1);

    std::vector<PairedSample> four(pairs.begin(), pairs.begin() + 4);
    CHECK_THROWS_AS(split_dataset(four, 9), std::invalid_argument);
}

TEST_CASE("split_dataset is a stable partition") {
    std::vector<PairedSample> pairs;
    for (int i = 0; i < 20; ++i) pairs.push_back(gen_pair(static_cast<uint64_t>(100 + i), 32));
    auto [t1, v1] = split_dataset(pairs, 4);
    auto [t2, v2] = split_dataset(pairs, 4);
    REQUIRE(t1.size() == t2.size());
    for (size_t i = 0; i < t1.size(); ++i) CHECK(t1[i].seed == t2[i].seed);

    std::multiset<uint64_t> seen;
    for (const auto& p : t1) seen.insert(p.seed);
    for (const auto& p : v1) seen.insert(p.seed);
    std::multiset<uint64_t> expected;
    for (const auto& p : pairs) expected.insert(p.seed);
    CHECK(seen == expected);
}

TEST_CASE("phantom anatomy is shared while vessels stay visible in ncct") {
    // Vessel tissue must be present in the non-contrast image (brighter than
    // organ tissue) so translation from ncct alone is learnable.
    const PhantomSpec spec;
    const PairedSample s = gen_pair(21, 64, spec);
    double in_mask_sum = 0.0;
    int64_t in_mask_n = 0;
    for (int64_t i = 0; i < s.ncct.pixels.numel(); ++i) {
        if (s.contrast_mask[i] != 0.0) {
            in_mask_sum += s.ncct.pixels[i];
            ++in_mask_n;
        }
    }
    REQUIRE(in_mask_n > 0);
    const double mean_vessel_hu = in_mask_sum / static_cast<double>(in_mask_n);
    CHECK(mean_vessel_hu > spec.organ_hu_max * 0.9);
}
