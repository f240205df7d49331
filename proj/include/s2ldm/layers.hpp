#pragma once

#include <any>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "s2ldm/rng.hpp"
#include "s2ldm/tensor.hpp"

namespace s2ldm {

// Trainable parameter with gradient and Adam moment buffers, all same shape.
struct Param {
    Tensor value, grad, adam_m, adam_v;
    int64_t step_count = 0;

    Param() = default;
    explicit Param(std::vector<int64_t> dims)
        : value(dims), grad(dims), adam_m(dims), adam_v(std::move(dims)) {}

    void zero_grad() { grad.fill(0.0); }
    int64_t numel() const { return value.numel(); }
};

struct AdamwConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled-weight-decay Adam with bias correction. lr = 0 is the exact
// identity on the value. Throws DivergenceError on a non-finite gradient.
void adamw_step(Param& p, const AdamwConfig& cfg);

void he_init(Param& p, RngStream& rng, int64_t fan_in);

// ---------------------------------------------------------------------------
// Layers. Each holds its Params, a forward that fills a Cache, and a backward
// that accumulates into Param::grad and returns the input gradient.
// ---------------------------------------------------------------------------

struct Conv3x3 {
    Param w, b; // w [cout,cin,3,3], b [cout]
    int64_t cin = 0, cout = 0, stride = 1;

    Conv3x3() = default;
    Conv3x3(int64_t cin, int64_t cout, int64_t stride, RngStream& rng, bool zero_init = false);

    static int64_t out_size(int64_t in, int64_t stride) { return (in - 1) / stride + 1; }

    Tensor forward(const Tensor& x) const;
    // cache = the input tensor
    Tensor forward(const Tensor& x, Tensor& cache) const;
    Tensor backward(const Tensor& cached_input, const Tensor& gout);
};

struct GroupNorm {
    Param gamma, beta;
    int64_t channels = 0, groups = 1;
    double eps = 1e-5;

    struct Cache {
        Tensor input;
        Tensor mean, inv_std; // per group
    };

    GroupNorm() = default;
    GroupNorm(int64_t channels, int64_t groups);

    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& x, Cache& cache) const;
    Tensor backward(const Cache& cache, const Tensor& gout);
};

struct Linear {
    Param w, b; // w [out,in], b [out]
    int64_t in = 0, out = 0;

    Linear() = default;
    Linear(int64_t in, int64_t out, RngStream& rng, bool zero_init = false);

    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& x, Tensor& cache) const;
    Tensor backward(const Tensor& cached_input, const Tensor& gout);
};

// Nearest-neighbor 2x upsample followed by a stride-1 3x3 convolution.
struct UpsampleConv3x3 {
    Conv3x3 conv;

    UpsampleConv3x3() = default;
    UpsampleConv3x3(int64_t cin, int64_t cout, RngStream& rng) : conv(cin, cout, 1, rng) {}

    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& x, Tensor& cache) const; // cache = upsampled input
    Tensor backward(const Tensor& cached_upsampled, const Tensor& gout);
};

// Stateless activations over any shape.
Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& gout);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& gout);
Tensor tanh_act(const Tensor& x);
Tensor tanh_backward(const Tensor& x, const Tensor& gout);

// Interleaved (sin, cos) embedding of a scalar timestep; dim must be even.
// Frequencies follow the usual geometric ladder down from 1 to 1/10000.
Tensor sinusoidal_time_embed(double t, int64_t dim);
// d(embed)/dt contracted with gout (the embedding is smooth in t).
double sinusoidal_time_embed_grad(double t, int64_t dim, const Tensor& gout);

// Pre-activation residual block with additive time conditioning:
//   x + conv2(silu(gn2(conv1(silu(gn1(x))) + proj(silu(temb)))))
struct ResidualBlock {
    GroupNorm gn1, gn2;
    Conv3x3 conv1, conv2;
    Linear time_proj;

    struct Cache {
        Tensor x;
        GroupNorm::Cache g1, g2;
        Tensor gn1_out, gn2_out;   // silu inputs
        Tensor conv1_in, conv2_in; // silu outputs feeding the convs
        Tensor temb, temb_silu;
    };

    ResidualBlock() = default;
    ResidualBlock(int64_t channels, int64_t temb_dim, int64_t groups, RngStream& rng);

    Tensor forward(const Tensor& x, const Tensor& temb) const;
    Tensor forward(const Tensor& x, const Tensor& temb, Cache& cache) const;
    // Returns the input gradient; adds the time-embedding gradient into gtemb.
    Tensor backward(const Cache& cache, const Tensor& gout, Tensor& gtemb);

    std::vector<Param*> params();
};

// ---------------------------------------------------------------------------
// Uniform layer dispatch. This is the generic forward/backward surface the
// gradient suite iterates over; networks use the concrete structs directly.
// ---------------------------------------------------------------------------

enum class LayerKind {
    Conv3x3S1,
    Conv3x3S2,
    UpsampleConv3x3,
    GroupNormK,
    SiLU,
    ReLU,
    Tanh,
    LinearK,
    SinusoidalTimeEmbed,
    ResidualBlockK,
};

const char* layer_kind_name(LayerKind k);
std::vector<LayerKind> all_layer_kinds();

class Layer {
public:
    using CacheHandle = std::any;

    // Builds a layer with randomized parameters sized for small test tensors.
    // For tensor layers cio = {cin, cout}; for Linear it is {in, out}; for
    // SinusoidalTimeEmbed cio.second is the embedding dim.
    static Layer make(LayerKind kind, std::pair<int64_t, int64_t> cio, RngStream& rng);

    LayerKind kind() const { return kind_; }

    // aux: the time embedding for ResidualBlockK, ignored elsewhere.
    std::pair<Tensor, CacheHandle> forward(const Tensor& input, const Tensor* aux = nullptr) const;
    // aux_grad, when non-null, receives the gradient wrt aux (accumulated).
    Tensor backward(const CacheHandle& cache, const Tensor& gout, Tensor* aux_grad = nullptr);

    std::vector<Param*> params();

private:
    LayerKind kind_{};
    std::variant<std::monostate, Conv3x3, UpsampleConv3x3, GroupNorm, Linear, ResidualBlock> impl_;
    int64_t embed_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
// ---------------------------------------------------------------------------

// A differentiable scalar function of a tensor: value and analytic gradient.
struct ScalarFn {
    std::function<double(const Tensor&)> value;
    std::function<Tensor(const Tensor&)> grad;
};

// Max over coordinates of |analytic - central_difference| /
// max(1e-12, |analytic| + |numeric|). Throws on non-finite evaluations.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-4);

// Flattened view over a set of params, for whole-model gradient checks.
Tensor flatten_values(const std::vector<Param*>& params);
Tensor flatten_grads(const std::vector<Param*>& params);
void load_values(const std::vector<Param*>& params, const Tensor& flat);
void zero_grads(const std::vector<Param*>& params);

} // namespace s2ldm
