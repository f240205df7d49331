#include "s2ldm/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "s2ldm/errors.hpp"
#include "s2ldm/kernels.hpp"

namespace s2ldm {

void adamw_step(Param& p, const AdamwConfig& cfg) {
    if (cfg.lr < 0.0) throw std::invalid_argument("adamw_step: lr must be non-negative");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
        throw std::invalid_argument("adamw_step: betas must lie in [0, 1)");
    if (!p.grad.all_finite())
        throw DivergenceError("adamw_step: non-finite gradient, aborting run");
    p.step_count += 1;
    const double bias_c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step_count));
    const double bias_c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step_count));
    kernels::adamw_update(p.value.data(), p.grad.data(), p.adam_m.data(), p.adam_v.data(),
                          p.numel(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay,
                          bias_c1, bias_c2);
}

void he_init(Param& p, RngStream& rng, int64_t fan_in) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < p.numel(); ++i) p.value[i] = std * rng.next_gaussian();
}

// --------------------------------------------------------------------------
// Conv3x3

Conv3x3::Conv3x3(int64_t cin_, int64_t cout_, int64_t stride_, RngStream& rng, bool zero_init)
    : w({cout_, cin_, 3, 3}), b({cout_}), cin(cin_), cout(cout_), stride(stride_) {
    if (stride != 1 && stride != 2) throw std::invalid_argument("Conv3x3: stride must be 1 or 2");
    if (!zero_init) he_init(w, rng, cin * 9);
}

static void check_conv_input(const Tensor& x, int64_t cin, const char* who) {
    if (x.ndim() != 3 || x.dim(0) != cin)
        throw std::invalid_argument(std::string(who) + ": expected [" + std::to_string(cin) +
                                    ",h,w] input, got " + shape_str(x));
}

Tensor Conv3x3::forward(const Tensor& x) const {
    check_conv_input(x, cin, "Conv3x3");
    const int64_t h = x.dim(1), w_ = x.dim(2);
    const int64_t oh = out_size(h, stride), ow = out_size(w_, stride);
    Tensor y({cout, oh, ow});
    kernels::conv3x3_forward(x.data(), cin, h, w_, w.value.data(), b.value.data(), cout, stride,
                             y.data(), oh, ow);
    return y;
}

Tensor Conv3x3::forward(const Tensor& x, Tensor& cache) const {
    cache = x;
    return forward(x);
}

Tensor Conv3x3::backward(const Tensor& cached_input, const Tensor& gout) {
    const Tensor& x = cached_input;
    check_conv_input(x, cin, "Conv3x3::backward");
    const int64_t h = x.dim(1), w_ = x.dim(2);
    const int64_t oh = out_size(h, stride), ow = out_size(w_, stride);
    if (gout.ndim() != 3 || gout.dim(0) != cout || gout.dim(1) != oh || gout.dim(2) != ow)
        throw std::invalid_argument("Conv3x3::backward: gout shape mismatch " + shape_str(gout));

    Tensor gw({cout, cin, 3, 3}), gb({cout});
    kernels::conv3x3_grad_params(x.data(), cin, h, w_, gout.data(), cout, oh, ow, stride,
                                 gw.data(), gb.data());
    for (int64_t i = 0; i < gw.numel(); ++i) w.grad[i] += gw[i];
    for (int64_t i = 0; i < gb.numel(); ++i) b.grad[i] += gb[i];

    Tensor gin({cin, h, w_});
    kernels::conv3x3_grad_input(w.value.data(), cin, cout, stride, gout.data(), oh, ow,
                                gin.data(), h, w_);
    return gin;
}

// --------------------------------------------------------------------------
// GroupNorm

GroupNorm::GroupNorm(int64_t channels_, int64_t groups_)
    : gamma({channels_}), beta({channels_}), channels(channels_), groups(groups_) {
    if (groups <= 0 || channels % groups != 0)
        throw std::invalid_argument("GroupNorm: groups must divide channels");
    gamma.value.fill(1.0);
}

Tensor GroupNorm::forward(const Tensor& x) const {
    Cache scratch;
    return forward(x, scratch);
}

Tensor GroupNorm::forward(const Tensor& x, Cache& cache) const {
    check_conv_input(x, channels, "GroupNorm");
    const int64_t h = x.dim(1), w = x.dim(2);
    Tensor y({channels, h, w});
    cache.input = x;
    cache.mean = Tensor({groups});
    cache.inv_std = Tensor({groups});
    kernels::group_norm_forward(x.data(), channels, h, w, groups, eps, gamma.value.data(),
                                beta.value.data(), y.data(), cache.mean.data(),
                                cache.inv_std.data());
    return y;
}

Tensor GroupNorm::backward(const Cache& cache, const Tensor& gout) {
    const Tensor& x = cache.input;
    require_same_shape(x, gout, "GroupNorm::backward");
    const int64_t h = x.dim(1), w = x.dim(2);
    Tensor gin({channels, h, w}), gg({channels}), gb({channels});
    kernels::group_norm_backward(x.data(), channels, h, w, groups, gamma.value.data(),
                                 cache.mean.data(), cache.inv_std.data(), gout.data(),
                                 gin.data(), gg.data(), gb.data());
    for (int64_t i = 0; i < channels; ++i) {
        gamma.grad[i] += gg[i];
        beta.grad[i] += gb[i];
    }
    return gin;
}

// --------------------------------------------------------------------------
// Linear

Linear::Linear(int64_t in_, int64_t out_, RngStream& rng, bool zero_init)
    : w({out_, in_}), b({out_}), in(in_), out(out_) {
    if (!zero_init) he_init(w, rng, in);
}

Tensor Linear::forward(const Tensor& x) const {
    if (x.numel() != in)
        throw std::invalid_argument("Linear: expected " + std::to_string(in) + " inputs, got " +
                                    shape_str(x));
    Tensor y({out});
    for (int64_t o = 0; o < out; ++o) {
        double acc = b.value[o];
        const double* wrow = w.value.data() + o * in;
        for (int64_t i = 0; i < in; ++i) acc += wrow[i] * x[i];
        y[o] = acc;
    }
    return y;
}

Tensor Linear::forward(const Tensor& x, Tensor& cache) const {
    cache = x;
    return forward(x);
}

Tensor Linear::backward(const Tensor& cached_input, const Tensor& gout) {
    const Tensor& x = cached_input;
    if (gout.numel() != out)
        throw std::invalid_argument("Linear::backward: gout size mismatch " + shape_str(gout));
    Tensor gin(x.dims());
    for (int64_t o = 0; o < out; ++o) {
        const double go = gout[o];
        b.grad[o] += go;
        double* wgrow = w.grad.data() + o * in;
        const double* wrow = w.value.data() + o * in;
        for (int64_t i = 0; i < in; ++i) {
            wgrow[i] += go * x[i];
            gin[i] += go * wrow[i];
        }
    }
    return gin;
}

// --------------------------------------------------------------------------
// UpsampleConv3x3

static Tensor upsample2x(const Tensor& x) {
    Tensor y({x.dim(0), 2 * x.dim(1), 2 * x.dim(2)});
    kernels::upsample2x_forward(x.data(), x.dim(0), x.dim(1), x.dim(2), y.data());
    return y;
}

Tensor UpsampleConv3x3::forward(const Tensor& x) const {
    return conv.forward(upsample2x(x));
}

Tensor UpsampleConv3x3::forward(const Tensor& x, Tensor& cache) const {
    cache = upsample2x(x);
    return conv.forward(cache);
}

Tensor UpsampleConv3x3::backward(const Tensor& cached_upsampled, const Tensor& gout) {
    Tensor gup = conv.backward(cached_upsampled, gout);
    Tensor gin({gup.dim(0), gup.dim(1) / 2, gup.dim(2) / 2});
    kernels::upsample2x_grad(gup.data(), gin.dim(0), gin.dim(1), gin.dim(2), gin.data());
    return gin;
}

// --------------------------------------------------------------------------
// Activations

Tensor silu(const Tensor& x) {
    Tensor y(x.dims());
    kernels::silu_forward(x.data(), x.numel(), y.data());
    return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& gout) {
    require_same_shape(x, gout, "silu_backward");
    Tensor gin(x.dims());
    kernels::silu_backward(x.data(), gout.data(), x.numel(), gin.data());
    return gin;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.dims());
    kernels::relu_forward(x.data(), x.numel(), y.data());
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& gout) {
    require_same_shape(x, gout, "relu_backward");
    Tensor gin(x.dims());
    kernels::relu_backward(x.data(), gout.data(), x.numel(), gin.data());
    return gin;
}

Tensor tanh_act(const Tensor& x) {
    Tensor y(x.dims());
    kernels::tanh_forward(x.data(), x.numel(), y.data());
    return y;
}

Tensor tanh_backward(const Tensor& x, const Tensor& gout) {
    require_same_shape(x, gout, "tanh_backward");
    Tensor gin(x.dims());
    kernels::tanh_backward(x.data(), gout.data(), x.numel(), gin.data());
    return gin;
}

// --------------------------------------------------------------------------
// Sinusoidal timestep embedding

Tensor sinusoidal_time_embed(double t, int64_t dim) {
    if (dim <= 0 || dim % 2 != 0)
        throw std::invalid_argument("sinusoidal_time_embed: dim must be positive and even");
    const int64_t half = dim / 2;
    Tensor e({dim});
    for (int64_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

double sinusoidal_time_embed_grad(double t, int64_t dim, const Tensor& gout) {
    if (gout.numel() != dim)
        throw std::invalid_argument("sinusoidal_time_embed_grad: gout size mismatch");
    const int64_t half = dim / 2;
    double acc = 0.0;
    for (int64_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        acc += gout[2 * i] * freq * std::cos(t * freq);
        acc += gout[2 * i + 1] * -freq * std::sin(t * freq);
    }
    return acc;
}

// --------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int64_t channels, int64_t temb_dim, int64_t groups, RngStream& rng)
    : gn1(channels, groups),
      gn2(channels, groups),
      conv1(channels, channels, 1, rng),
      conv2(channels, channels, 1, rng),
      time_proj(temb_dim, channels, rng) {}

Tensor ResidualBlock::forward(const Tensor& x, const Tensor& temb) const {
    Cache scratch;
    return forward(x, temb, scratch);
}

Tensor ResidualBlock::forward(const Tensor& x, const Tensor& temb, Cache& cache) const {
    cache.x = x;
    cache.temb = temb;
    cache.gn1_out = gn1.forward(x, cache.g1);
    cache.conv1_in = silu(cache.gn1_out);
    Tensor h = conv1.forward(cache.conv1_in);
    cache.temb_silu = silu(temb);
    Tensor tp = time_proj.forward(cache.temb_silu);
    const int64_t plane = h.dim(1) * h.dim(2);
    for (int64_t c = 0; c < h.dim(0); ++c) {
        const double bias = tp[c];
        double* hp = h.data() + c * plane;
        for (int64_t i = 0; i < plane; ++i) hp[i] += bias;
    }
    cache.gn2_out = gn2.forward(h, cache.g2);
    cache.conv2_in = silu(cache.gn2_out);
    Tensor h2 = conv2.forward(cache.conv2_in);
    Tensor y(x.dims());
    kernels::ew_add(x.data(), h2.data(), x.numel(), y.data());
    return y;
}

Tensor ResidualBlock::backward(const Cache& cache, const Tensor& gout, Tensor& gtemb) {
    // Branch: conv2 <- silu <- gn2 <- (+time bias) <- conv1 <- silu <- gn1.
    Tensor g_conv2_in = conv2.backward(cache.conv2_in, gout);
    Tensor g_b1 = silu_backward(cache.gn2_out, g_conv2_in);
    Tensor g_h = gn2.backward(cache.g2, g_b1);

    // Time bias: gradient is the spatial sum per channel.
    const int64_t plane = g_h.dim(1) * g_h.dim(2);
    Tensor g_tp({g_h.dim(0)});
    for (int64_t c = 0; c < g_h.dim(0); ++c) {
        double acc = 0.0;
        const double* gp = g_h.data() + c * plane;
        for (int64_t i = 0; i < plane; ++i) acc += gp[i];
        g_tp[c] = acc;
    }
    Tensor g_temb_silu = time_proj.backward(cache.temb_silu, g_tp);
    Tensor g_temb_local = silu_backward(cache.temb, g_temb_silu);
    for (int64_t i = 0; i < gtemb.numel(); ++i) gtemb[i] += g_temb_local[i];

    Tensor g_conv1_in = conv1.backward(cache.conv1_in, g_h);
    Tensor g_a1 = silu_backward(cache.gn1_out, g_conv1_in);
    Tensor g_x = gn1.backward(cache.g1, g_a1);

    Tensor gin(cache.x.dims());
    kernels::ew_add(g_x.data(), gout.data(), gin.numel(), gin.data());
    return gin;
}

std::vector<Param*> ResidualBlock::params() {
    return {&gn1.gamma, &gn1.beta, &conv1.w, &conv1.b, &time_proj.w, &time_proj.b,
            &gn2.gamma, &gn2.beta, &conv2.w, &conv2.b};
}

// --------------------------------------------------------------------------
// Uniform layer dispatch

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv3x3S1: return "conv3x3_s1";
        case LayerKind::Conv3x3S2: return "conv3x3_s2";
        case LayerKind::UpsampleConv3x3: return "upsample2x_conv3x3";
        case LayerKind::GroupNormK: return "group_norm";
        case LayerKind::SiLU: return "silu";
        case LayerKind::ReLU: return "relu";
        case LayerKind::Tanh: return "tanh";
        case LayerKind::LinearK: return "linear";
        case LayerKind::SinusoidalTimeEmbed: return "sinusoidal_time_embed";
        case LayerKind::ResidualBlockK: return "residual_block";
    }
    return "?";
}

std::vector<LayerKind> all_layer_kinds() {
    return {LayerKind::Conv3x3S1, LayerKind::Conv3x3S2, LayerKind::UpsampleConv3x3,
            LayerKind::GroupNormK, LayerKind::SiLU, LayerKind::ReLU, LayerKind::Tanh,
            LayerKind::LinearK, LayerKind::SinusoidalTimeEmbed, LayerKind::ResidualBlockK};
}

Layer Layer::make(LayerKind kind, std::pair<int64_t, int64_t> cio, RngStream& rng) {
    Layer l;
    l.kind_ = kind;
    switch (kind) {
        case LayerKind::Conv3x3S1: l.impl_ = Conv3x3(cio.first, cio.second, 1, rng); break;
        case LayerKind::Conv3x3S2: l.impl_ = Conv3x3(cio.first, cio.second, 2, rng); break;
        case LayerKind::UpsampleConv3x3: l.impl_ = UpsampleConv3x3(cio.first, cio.second, rng); break;
        case LayerKind::GroupNormK: {
            GroupNorm gn(cio.first, cio.second);
            // Randomize affine params so the gradient test is not at a fixed point.
            for (int64_t i = 0; i < gn.gamma.numel(); ++i) gn.gamma.value[i] = 1.0 + 0.1 * rng.next_gaussian();
            for (int64_t i = 0; i < gn.beta.numel(); ++i) gn.beta.value[i] = 0.1 * rng.next_gaussian();
            l.impl_ = std::move(gn);
            break;
        }
        case LayerKind::SiLU:
        case LayerKind::ReLU:
        case LayerKind::Tanh: l.impl_ = std::monostate{}; break;
        case LayerKind::LinearK: l.impl_ = Linear(cio.first, cio.second, rng); break;
        case LayerKind::SinusoidalTimeEmbed:
            l.impl_ = std::monostate{};
            l.embed_dim_ = cio.second;
            break;
        case LayerKind::ResidualBlockK: {
            const int64_t groups = (cio.first % 2 == 0) ? 2 : 1;
            l.impl_ = ResidualBlock(cio.first, cio.second, groups, rng);
            break;
        }
    }
    return l;
}

std::pair<Tensor, Layer::CacheHandle> Layer::forward(const Tensor& input, const Tensor* aux) const {
    switch (kind_) {
        case LayerKind::Conv3x3S1:
        case LayerKind::Conv3x3S2: {
            Tensor cache;
            Tensor y = std::get<Conv3x3>(impl_).forward(input, cache);
            return {std::move(y), std::move(cache)};
        }
        case LayerKind::UpsampleConv3x3: {
            Tensor cache;
            Tensor y = std::get<UpsampleConv3x3>(impl_).forward(input, cache);
            return {std::move(y), std::move(cache)};
        }
        case LayerKind::GroupNormK: {
            GroupNorm::Cache cache;
            Tensor y = std::get<GroupNorm>(impl_).forward(input, cache);
            return {std::move(y), std::move(cache)};
        }
        case LayerKind::SiLU: return {silu(input), input};
        case LayerKind::ReLU: return {relu(input), input};
        case LayerKind::Tanh: return {tanh_act(input), input};
        case LayerKind::LinearK: {
            Tensor cache;
            Tensor y = std::get<Linear>(impl_).forward(input, cache);
            return {std::move(y), std::move(cache)};
        }
        case LayerKind::SinusoidalTimeEmbed: {
            if (input.numel() != 1)
                throw std::invalid_argument("sinusoidal_time_embed takes a single scalar input");
            return {sinusoidal_time_embed(input[0], embed_dim_), input};
        }
        case LayerKind::ResidualBlockK: {
            if (!aux) throw std::invalid_argument("residual_block requires the time embedding aux input");
            ResidualBlock::Cache cache;
            Tensor y = std::get<ResidualBlock>(impl_).forward(input, *aux, cache);
            return {std::move(y), std::move(cache)};
        }
    }
    throw std::invalid_argument("unknown layer kind");
}

Tensor Layer::backward(const CacheHandle& cache, const Tensor& gout, Tensor* aux_grad) {
    switch (kind_) {
        case LayerKind::Conv3x3S1:
        case LayerKind::Conv3x3S2:
            return std::get<Conv3x3>(impl_).backward(std::any_cast<const Tensor&>(cache), gout);
        case LayerKind::UpsampleConv3x3:
            return std::get<UpsampleConv3x3>(impl_).backward(std::any_cast<const Tensor&>(cache), gout);
        case LayerKind::GroupNormK:
            return std::get<GroupNorm>(impl_).backward(std::any_cast<const GroupNorm::Cache&>(cache), gout);
        case LayerKind::SiLU: return silu_backward(std::any_cast<const Tensor&>(cache), gout);
        case LayerKind::ReLU: return relu_backward(std::any_cast<const Tensor&>(cache), gout);
        case LayerKind::Tanh: return tanh_backward(std::any_cast<const Tensor&>(cache), gout);
        case LayerKind::LinearK:
            return std::get<Linear>(impl_).backward(std::any_cast<const Tensor&>(cache), gout);
        case LayerKind::SinusoidalTimeEmbed: {
            const Tensor& input = std::any_cast<const Tensor&>(cache);
            Tensor gin({1});
            gin[0] = sinusoidal_time_embed_grad(input[0], embed_dim_, gout);
            return gin;
        }
        case LayerKind::ResidualBlockK: {
            auto& rb = std::get<ResidualBlock>(impl_);
            const auto& c = std::any_cast<const ResidualBlock::Cache&>(cache);
            Tensor gtemb(c.temb.dims());
            Tensor gin = rb.backward(c, gout, gtemb);
            if (aux_grad)
                for (int64_t i = 0; i < gtemb.numel(); ++i) (*aux_grad)[i] += gtemb[i];
            return gin;
        }
    }
    throw std::invalid_argument("unknown layer kind");
}

std::vector<Param*> Layer::params() {
    switch (kind_) {
        case LayerKind::Conv3x3S1:
        case LayerKind::Conv3x3S2: {
            auto& c = std::get<Conv3x3>(impl_);
            return {&c.w, &c.b};
        }
        case LayerKind::UpsampleConv3x3: {
            auto& c = std::get<UpsampleConv3x3>(impl_);
            return {&c.conv.w, &c.conv.b};
        }
        case LayerKind::GroupNormK: {
            auto& g = std::get<GroupNorm>(impl_);
            return {&g.gamma, &g.beta};
        }
        case LayerKind::LinearK: {
            auto& lin = std::get<Linear>(impl_);
            return {&lin.w, &lin.b};
        }
        case LayerKind::ResidualBlockK: return std::get<ResidualBlock>(impl_).params();
        default: return {};
    }
}

// --------------------------------------------------------------------------
// Gradient checking

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
    Tensor analytic = f.grad(x);
    if (!analytic.all_finite()) throw std::runtime_error("grad_check: non-finite analytic gradient");
    if (analytic.numel() != x.numel())
        throw std::invalid_argument("grad_check: gradient size mismatch");
    Tensor probe = x;
    double max_rel = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f.value(probe);
        probe[i] = x[i] - h;
        const double fm = f.value(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: non-finite function evaluation");
        const double numeric = (fp - fm) / (2.0 * h);
        const double rel = std::abs(analytic[i] - numeric) /
                           std::max(1e-12, std::abs(analytic[i]) + std::abs(numeric));
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

Tensor flatten_values(const std::vector<Param*>& params) {
    int64_t total = 0;
    for (const Param* p : params) total += p->numel();
    Tensor flat({std::max<int64_t>(total, 1)});
    int64_t off = 0;
    for (const Param* p : params)
        for (int64_t i = 0; i < p->numel(); ++i) flat[off++] = p->value[i];
    return flat;
}

Tensor flatten_grads(const std::vector<Param*>& params) {
    int64_t total = 0;
    for (const Param* p : params) total += p->numel();
    Tensor flat({std::max<int64_t>(total, 1)});
    int64_t off = 0;
    for (const Param* p : params)
        for (int64_t i = 0; i < p->numel(); ++i) flat[off++] = p->grad[i];
    return flat;
}

void load_values(const std::vector<Param*>& params, const Tensor& flat) {
    int64_t off = 0;
    for (Param* p : params)
        for (int64_t i = 0; i < p->numel(); ++i) p->value[i] = flat[off++];
}

void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

} // namespace s2ldm
