// Benchmark comparing the serial reference kernels against the OpenMP
// traversals, with a checksum equality check on every kernel.
//
// Usage: s2ldm_bench [reps]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "s2ldm/kernels.hpp"
#include "s2ldm/rng.hpp"
#include "s2ldm/tensor.hpp"

using namespace s2ldm;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor random_tensor(std::vector<int64_t> dims, RngStream& rng) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.next_gaussian();
    return t;
}

struct Result {
    double serial_ms;
    double omp_ms;
    bool identical;
};

template <typename F>
double time_reps(F&& fn, int reps) {
    fn(); // warm up
    const double t0 = now_ms();
    for (int r = 0; r < reps; ++r) fn();
    return (now_ms() - t0) / reps;
}

void report(const char* name, const Result& r) {
    std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, r.serial_ms,
                r.omp_ms, r.serial_ms / r.omp_ms, r.identical ? "bit-identical" : "MISMATCH");
}

bool same_bits(const Tensor& a, const Tensor& b) {
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
    RngStream rng(7, 1);

    const int64_t ci = 32, co = 32, h = 128, w = 128;
    const Tensor in = random_tensor({ci, h, w}, rng);
    const Tensor wgt = random_tensor({co, ci, 3, 3}, rng);
    const Tensor bias = random_tensor({co}, rng);
    Tensor out_s({co, h, w}), out_p({co, h, w});

    {
        Result r;
        r.serial_ms = time_reps(
            [&] {
                kernels::serial::conv3x3_forward(in.data(), ci, h, w, wgt.data(), bias.data(), co, 1,
                                                 out_s.data(), h, w);
            },
            reps);
        r.omp_ms = time_reps(
            [&] {
                kernels::omp::conv3x3_forward(in.data(), ci, h, w, wgt.data(), bias.data(), co, 1,
                                              out_p.data(), h, w);
            },
            reps);
        r.identical = same_bits(out_s, out_p);
        report("conv3x3_forward", r);
    }

    {
        const Tensor gout = random_tensor({co, h, w}, rng);
        Tensor gin_s({ci, h, w}), gin_p({ci, h, w});
        Result r;
        r.serial_ms = time_reps(
            [&] {
                kernels::serial::conv3x3_grad_input(wgt.data(), ci, co, 1, gout.data(), h, w,
                                                    gin_s.data(), h, w);
            },
            reps);
        r.omp_ms = time_reps(
            [&] {
                kernels::omp::conv3x3_grad_input(wgt.data(), ci, co, 1, gout.data(), h, w,
                                                 gin_p.data(), h, w);
            },
            reps);
        r.identical = same_bits(gin_s, gin_p);
        report("conv3x3_grad_input", r);

        Tensor gw_s({co, ci, 3, 3}), gw_p({co, ci, 3, 3}), gb_s({co}), gb_p({co});
        Result r2;
        r2.serial_ms = time_reps(
            [&] {
                kernels::serial::conv3x3_grad_params(in.data(), ci, h, w, gout.data(), co, h, w, 1,
                                                     gw_s.data(), gb_s.data());
            },
            reps);
        r2.omp_ms = time_reps(
            [&] {
                kernels::omp::conv3x3_grad_params(in.data(), ci, h, w, gout.data(), co, h, w, 1,
                                                  gw_p.data(), gb_p.data());
            },
            reps);
        r2.identical = same_bits(gw_s, gw_p) && same_bits(gb_s, gb_p);
        report("conv3x3_grad_params", r2);
    }

    {
        const int64_t gc = 32;
        const Tensor gamma = random_tensor({gc}, rng), beta = random_tensor({gc}, rng);
        Tensor o_s({gc, h, w}), o_p({gc, h, w}), m_s({8}), m_p({8}), v_s({8}), v_p({8});
        Result r;
        r.serial_ms = time_reps(
            [&] {
                kernels::serial::group_norm_forward(in.data(), gc, h, w, 8, 1e-5, gamma.data(),
                                                    beta.data(), o_s.data(), m_s.data(), v_s.data());
            },
            reps);
        r.omp_ms = time_reps(
            [&] {
                kernels::omp::group_norm_forward(in.data(), gc, h, w, 8, 1e-5, gamma.data(),
                                                 beta.data(), o_p.data(), m_p.data(), v_p.data());
            },
            reps);
        r.identical = same_bits(o_s, o_p);
        report("group_norm_forward", r);
    }

    {
        const Tensor a = random_tensor({ci, h, w}, rng), b = random_tensor({ci, h, w}, rng);
        Tensor o_s({h, w}), o_p({h, w});
        Result r;
        r.serial_ms = time_reps(
            [&] { kernels::serial::cosine_map(a.data(), b.data(), ci, h, w, 1e-8, o_s.data()); },
            reps);
        r.omp_ms = time_reps(
            [&] { kernels::omp::cosine_map(a.data(), b.data(), ci, h, w, 1e-8, o_p.data()); }, reps);
        r.identical = same_bits(o_s, o_p);
        report("cosine_map", r);
    }

    {
        const Tensor x = random_tensor({h, w}, rng), y = random_tensor({h, w}, rng);
        Tensor win({11, 11});
        double sum = 0.0;
        for (int64_t i = 0; i < win.numel(); ++i) sum += (win[i] = 1.0);
        for (int64_t i = 0; i < win.numel(); ++i) win[i] /= sum;
        Tensor o_s({h - 10, w - 10}), o_p({h - 10, w - 10});
        Result r;
        r.serial_ms = time_reps(
            [&] {
                kernels::serial::ssim_map(x.data(), y.data(), h, w, win.data(), 11, 1e-4, 9e-4,
                                          o_s.data());
            },
            reps);
        r.omp_ms = time_reps(
            [&] {
                kernels::omp::ssim_map(x.data(), y.data(), h, w, win.data(), 11, 1e-4, 9e-4,
                                       o_p.data());
            },
            reps);
        r.identical = same_bits(o_s, o_p);
        report("ssim_map", r);
    }

    {
        const Tensor x = random_tensor({h, w}, rng);
        Tensor o_s({h, w}), o_p({h, w});
        Result r;
        r.serial_ms = time_reps(
            [&] { kernels::serial::gaussian_blur(x.data(), h, w, 1.5, o_s.data()); }, reps);
        r.omp_ms = time_reps(
            [&] { kernels::omp::gaussian_blur(x.data(), h, w, 1.5, o_p.data()); }, reps);
        r.identical = same_bits(o_s, o_p);
        report("gaussian_blur", r);
    }

    return 0;
}
