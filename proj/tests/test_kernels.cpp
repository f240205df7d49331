#include "doctest.h"

#include <cmath>
#include <vector>

#include "s2ldm/kernels.hpp"
#include "s2ldm/rng.hpp"
#include "s2ldm/tensor.hpp"
#include "test_util.hpp"

using namespace s2ldm;
using s2ldm::test::random_tensor;
using s2ldm::test::same_bits;

namespace {

struct ConvShape {
    int64_t ci, co, h, w, stride;
};

} // namespace

TEST_CASE("serial and omp conv kernels are bit-identical") {
    RngStream rng(11, 0);
    const std::vector<ConvShape> shapes = {
        {1, 4, 8, 8, 1}, {3, 5, 9, 7, 1}, {4, 2, 10, 10, 2}, {2, 8, 16, 12, 2}, {6, 6, 5, 11, 1},
    };
    for (const auto& s : shapes) {
        const int64_t oh = (s.h - 1) / s.stride + 1;
        const int64_t ow = (s.w - 1) / s.stride + 1;
        const Tensor in = random_tensor({s.ci, s.h, s.w}, rng);
        const Tensor wgt = random_tensor({s.co, s.ci, 3, 3}, rng);
        const Tensor bias = random_tensor({s.co}, rng);

        Tensor a({s.co, oh, ow}), b({s.co, oh, ow});
        kernels::serial::conv3x3_forward(in.data(), s.ci, s.h, s.w, wgt.data(), bias.data(), s.co,
                                         s.stride, a.data(), oh, ow);
        kernels::omp::conv3x3_forward(in.data(), s.ci, s.h, s.w, wgt.data(), bias.data(), s.co,
                                      s.stride, b.data(), oh, ow);
        CHECK(same_bits(a, b));

        const Tensor gout = random_tensor({s.co, oh, ow}, rng);
        Tensor gin_a({s.ci, s.h, s.w}), gin_b({s.ci, s.h, s.w});
        kernels::serial::conv3x3_grad_input(wgt.data(), s.ci, s.co, s.stride, gout.data(), oh, ow,
                                            gin_a.data(), s.h, s.w);
        kernels::omp::conv3x3_grad_input(wgt.data(), s.ci, s.co, s.stride, gout.data(), oh, ow,
                                         gin_b.data(), s.h, s.w);
        CHECK(same_bits(gin_a, gin_b));

        Tensor gw_a({s.co, s.ci, 3, 3}), gw_b({s.co, s.ci, 3, 3}), gb_a({s.co}), gb_b({s.co});
        kernels::serial::conv3x3_grad_params(in.data(), s.ci, s.h, s.w, gout.data(), s.co, oh, ow,
                                             s.stride, gw_a.data(), gb_a.data());
        kernels::omp::conv3x3_grad_params(in.data(), s.ci, s.h, s.w, gout.data(), s.co, oh, ow,
                                          s.stride, gw_b.data(), gb_b.data());
        CHECK(same_bits(gw_a, gw_b));
        CHECK(same_bits(gb_a, gb_b));
    }
}

TEST_CASE("serial and omp agree on the remaining kernels") {
    RngStream rng(13, 0);
    const int64_t c = 6, h = 12, w = 10;
    const Tensor x = random_tensor({c, h, w}, rng);
    const Tensor y = random_tensor({c, h, w}, rng);

    Tensor up_a({c, 2 * h, 2 * w}), up_b({c, 2 * h, 2 * w});
    kernels::serial::upsample2x_forward(x.data(), c, h, w, up_a.data());
    kernels::omp::upsample2x_forward(x.data(), c, h, w, up_b.data());
    CHECK(same_bits(up_a, up_b));

    Tensor gd_a({c, h, w}), gd_b({c, h, w});
    kernels::serial::upsample2x_grad(up_a.data(), c, h, w, gd_a.data());
    kernels::omp::upsample2x_grad(up_a.data(), c, h, w, gd_b.data());
    CHECK(same_bits(gd_a, gd_b));

    const Tensor gamma = random_tensor({c}, rng), beta = random_tensor({c}, rng);
    Tensor o_a({c, h, w}), o_b({c, h, w}), m_a({3}), m_b({3}), v_a({3}), v_b({3});
    kernels::serial::group_norm_forward(x.data(), c, h, w, 3, 1e-5, gamma.data(), beta.data(),
                                        o_a.data(), m_a.data(), v_a.data());
    kernels::omp::group_norm_forward(x.data(), c, h, w, 3, 1e-5, gamma.data(), beta.data(),
                                     o_b.data(), m_b.data(), v_b.data());
    CHECK(same_bits(o_a, o_b));

    Tensor gi_a({c, h, w}), gi_b({c, h, w}), gg_a({c}), gg_b({c}), gb_a({c}), gb_b({c});
    kernels::serial::group_norm_backward(x.data(), c, h, w, 3, gamma.data(), m_a.data(), v_a.data(),
                                         y.data(), gi_a.data(), gg_a.data(), gb_a.data());
    kernels::omp::group_norm_backward(x.data(), c, h, w, 3, gamma.data(), m_b.data(), v_b.data(),
                                      y.data(), gi_b.data(), gg_b.data(), gb_b.data());
    CHECK(same_bits(gi_a, gi_b));
    CHECK(same_bits(gg_a, gg_b));
    CHECK(same_bits(gb_a, gb_b));

    Tensor cs_a({h, w}), cs_b({h, w});
    kernels::serial::cosine_map(x.data(), y.data(), c, h, w, 1e-8, cs_a.data());
    kernels::omp::cosine_map(x.data(), y.data(), c, h, w, 1e-8, cs_b.data());
    CHECK(same_bits(cs_a, cs_b));

    const Tensor codes = random_tensor({5, c}, rng);
    std::vector<int64_t> idx_a(static_cast<size_t>(h * w)), idx_b(static_cast<size_t>(h * w));
    kernels::serial::nearest_codes(x.data(), c, h, w, codes.data(), 5, idx_a.data());
    kernels::omp::nearest_codes(x.data(), c, h, w, codes.data(), 5, idx_b.data());
    CHECK(idx_a == idx_b);

    const Tensor img = random_tensor({16, 16}, rng);
    Tensor bl_a({16, 16}), bl_b({16, 16});
    kernels::serial::gaussian_blur(img.data(), 16, 16, 1.0, bl_a.data());
    kernels::omp::gaussian_blur(img.data(), 16, 16, 1.0, bl_b.data());
    CHECK(same_bits(bl_a, bl_b));
}

TEST_CASE("dispatch honors the mode switch") {
    RngStream rng(17, 0);
    const Tensor x = random_tensor({4, 8, 8}, rng);
    Tensor out_serial({8, 8}), out_parallel({8, 8});

    const kernels::Mode saved = kernels::mode();
    kernels::set_mode(kernels::Mode::Serial);
    kernels::cosine_map(x.data(), x.data(), 4, 8, 8, 1e-8, out_serial.data());
    kernels::set_mode(kernels::Mode::Parallel);
    kernels::cosine_map(x.data(), x.data(), 4, 8, 8, 1e-8, out_parallel.data());
    kernels::set_mode(saved);
    CHECK(same_bits(out_serial, out_parallel));
}

TEST_CASE("conv3x3 identity kernel reproduces the interior") {
    // Center tap 1, zero bias: interior equals the input, borders see the
    // zero padding (which for a 3x3 identity kernel is still exact).
    RngStream rng(19, 0);
    const int64_t h = 7, w = 9;
    const Tensor in = random_tensor({1, h, w}, rng);
    Tensor wgt({1, 1, 3, 3});
    wgt[4] = 1.0; // center
    Tensor bias({1});
    Tensor out({1, h, w});
    kernels::conv3x3_forward(in.data(), 1, h, w, wgt.data(), bias.data(), 1, 1, out.data(), h, w);
    CHECK(same_bits(in, out));
}

TEST_CASE("gaussian blur preserves constants") {
    Tensor img = Tensor::full({12, 12}, 0.37);
    Tensor out({12, 12});
    kernels::gaussian_blur(img.data(), 12, 12, 1.3, out.data());
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("upsample2x nearest neighbor semantics") {
    Tensor in({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor out({1, 4, 4});
    kernels::upsample2x_forward(in.data(), 1, 2, 2, out.data());
    CHECK(out.at(0, 0, 0) == 1.0);
    CHECK(out.at(0, 0, 1) == 1.0);
    CHECK(out.at(0, 1, 1) == 1.0);
    CHECK(out.at(0, 0, 2) == 2.0);
    CHECK(out.at(0, 3, 3) == 4.0);

    // Adjoint: each input cell collects its 2x2 block.
    Tensor gout = Tensor::full({1, 4, 4}, 1.0);
    Tensor gin({1, 2, 2});
    kernels::upsample2x_grad(gout.data(), 1, 2, 2, gin.data());
    for (int64_t i = 0; i < 4; ++i) CHECK(gin[i] == 4.0);
}
