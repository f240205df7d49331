#include "s2ldm/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "s2ldm/errors.hpp"
#include "s2ldm/kernels.hpp"

namespace fs = std::filesystem;

namespace s2ldm {

namespace {
constexpr double kWindowWidth = 400.0;
constexpr double kWindowLevel = 0.0;
} // namespace

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

AeConfig RunConfig::ae_config() const {
    AeConfig c;
    c.latent_channels = latent_channels;
    c.base_width = base_width;
    c.groups = groups;
    c.codebook_size = codebook_size;
    c.beta_commit = beta_commit;
    c.hf_beta = hf_beta;
    c.hf_sigma = hf_sigma;
    c.weights = {lambda_r, lambda_q, lambda_s, lambda_adv};
    c.sim_gamma = sim_gamma;
    c.sim_floor = sim_floor;
    return c;
}

DenoiserConfig RunConfig::denoiser_config() const {
    DenoiserConfig c;
    c.latent_channels = latent_channels;
    c.base_width = base_width;
    c.temb_dim = temb_dim;
    c.groups = groups;
    return c;
}

namespace {

struct ConfigKey {
    std::function<void(RunConfig&, const std::string&)> set;
};

int64_t parse_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: invalid integer for '" + key + "': " + v);
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: invalid unsigned integer for '" + key + "': " + v);
    }
}

double parse_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: invalid number for '" + key + "': " + v);
    }
}

const std::map<std::string, ConfigKey>& config_keys() {
    static const std::map<std::string, ConfigKey> keys = {
        {"seed", {[](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }}},
        {"image_size", {[](RunConfig& c, const std::string& v) { c.image_size = parse_i64("image_size", v); }}},
        {"patch_size", {[](RunConfig& c, const std::string& v) { c.patch_size = parse_i64("patch_size", v); }}},
        {"n_pairs", {[](RunConfig& c, const std::string& v) { c.n_pairs = parse_i64("n_pairs", v); }}},
        {"latent_channels", {[](RunConfig& c, const std::string& v) { c.latent_channels = parse_i64("latent_channels", v); }}},
        {"base_width", {[](RunConfig& c, const std::string& v) { c.base_width = parse_i64("base_width", v); }}},
        {"groups", {[](RunConfig& c, const std::string& v) { c.groups = parse_i64("groups", v); }}},
        {"stage1.steps", {[](RunConfig& c, const std::string& v) { c.stage1_steps = parse_i64("stage1.steps", v); }}},
        {"stage1.batch_size", {[](RunConfig& c, const std::string& v) { c.stage1_batch_size = parse_i64("stage1.batch_size", v); }}},
        {"stage1.lr", {[](RunConfig& c, const std::string& v) { c.stage1_lr = parse_f64("stage1.lr", v); }}},
        {"stage1.weight_decay", {[](RunConfig& c, const std::string& v) { c.stage1_weight_decay = parse_f64("stage1.weight_decay", v); }}},
        {"stage1.lambda_r", {[](RunConfig& c, const std::string& v) { c.lambda_r = parse_f64("stage1.lambda_r", v); }}},
        {"stage1.lambda_q", {[](RunConfig& c, const std::string& v) { c.lambda_q = parse_f64("stage1.lambda_q", v); }}},
        {"stage1.lambda_s", {[](RunConfig& c, const std::string& v) { c.lambda_s = parse_f64("stage1.lambda_s", v); }}},
        {"stage1.lambda_adv", {[](RunConfig& c, const std::string& v) { c.lambda_adv = parse_f64("stage1.lambda_adv", v); }}},
        {"stage1.gamma", {[](RunConfig& c, const std::string& v) { c.sim_gamma = parse_f64("stage1.gamma", v); }}},
        {"stage1.floor", {[](RunConfig& c, const std::string& v) { c.sim_floor = parse_f64("stage1.floor", v); }}},
        {"stage1.codebook_size", {[](RunConfig& c, const std::string& v) { c.codebook_size = parse_i64("stage1.codebook_size", v); }}},
        {"stage1.beta_commit", {[](RunConfig& c, const std::string& v) { c.beta_commit = parse_f64("stage1.beta_commit", v); }}},
        {"stage1.hf_beta", {[](RunConfig& c, const std::string& v) { c.hf_beta = parse_f64("stage1.hf_beta", v); }}},
        {"stage1.hf_sigma", {[](RunConfig& c, const std::string& v) { c.hf_sigma = parse_f64("stage1.hf_sigma", v); }}},
        {"stage2.epochs", {[](RunConfig& c, const std::string& v) { c.stage2_epochs = parse_i64("stage2.epochs", v); }}},
        {"stage2.steps_per_epoch", {[](RunConfig& c, const std::string& v) { c.stage2_steps_per_epoch = parse_i64("stage2.steps_per_epoch", v); }}},
        {"stage2.batch_size", {[](RunConfig& c, const std::string& v) { c.stage2_batch_size = parse_i64("stage2.batch_size", v); }}},
        {"stage2.lr", {[](RunConfig& c, const std::string& v) { c.stage2_lr = parse_f64("stage2.lr", v); }}},
        {"stage2.weight_decay", {[](RunConfig& c, const std::string& v) { c.stage2_weight_decay = parse_f64("stage2.weight_decay", v); }}},
        {"stage2.T", {[](RunConfig& c, const std::string& v) { c.diffusion_T = parse_i64("stage2.T", v); }}},
        {"stage2.beta_1", {[](RunConfig& c, const std::string& v) { c.beta_1 = parse_f64("stage2.beta_1", v); }}},
        {"stage2.beta_T", {[](RunConfig& c, const std::string& v) { c.beta_T = parse_f64("stage2.beta_T", v); }}},
        {"stage2.alpha", {[](RunConfig& c, const std::string& v) { c.mask_alpha = parse_f64("stage2.alpha", v); }}},
        {"stage2.temb_dim", {[](RunConfig& c, const std::string& v) { c.temb_dim = parse_i64("stage2.temb_dim", v); }}},
        {"sampler.t_start", {[](RunConfig& c, const std::string& v) { c.t_start = parse_i64("sampler.t_start", v); }}},
    };
    return keys;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = config_keys().find(key);
        if (it == config_keys().end())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": unknown key '" + key + "'");
        it->second.set(cfg, value);
    }
    validate_config(cfg);
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (c.image_size < 32 || c.image_size % 4 != 0) fail("image_size must be >= 32 and divisible by 4");
    if (c.patch_size < 8 || c.patch_size > c.image_size || c.patch_size % 4 != 0)
        fail("patch_size must be in [8, image_size] and divisible by 4");
    if (c.n_pairs < 5) fail("n_pairs must be >= 5");
    if (c.latent_channels < 1) fail("latent_channels must be >= 1");
    if (c.base_width < 1 || c.groups < 1 || c.base_width % c.groups != 0)
        fail("groups must divide base_width");
    if (c.codebook_size < 2) fail("codebook_size must be >= 2");
    if (c.stage1_steps < 1 || c.stage2_epochs < 1 || c.stage2_steps_per_epoch < 1)
        fail("training budgets must be >= 1");
    if (c.stage1_batch_size < 1 || c.stage2_batch_size < 1) fail("batch sizes must be >= 1");
    if (c.stage1_lr < 0 || c.stage2_lr < 0) fail("learning rates must be >= 0");
    if (c.stage1_weight_decay < 0 || c.stage2_weight_decay < 0) fail("weight decay must be >= 0");
    if (c.lambda_r < 0 || c.lambda_q < 0 || c.lambda_s < 0 || c.lambda_adv < 0)
        fail("loss weights must be >= 0");
    if (c.lambda_r <= 0 && c.lambda_q <= 0 && c.lambda_s <= 0)
        fail("at least one of lambda_r/q/s must be positive");
    if (!(c.sim_gamma > 0)) fail("stage1.gamma must be positive");
    if (!(c.sim_floor > 0) || c.sim_floor >= 1) fail("stage1.floor must lie in (0, 1)");
    if (!(c.beta_commit >= 0)) fail("stage1.beta_commit must be >= 0");
    if (c.hf_beta < 0 || !(c.hf_sigma > 0)) fail("hf_beta must be >= 0 and hf_sigma > 0");
    if (c.diffusion_T < 1) fail("stage2.T must be >= 1");
    if (!(c.beta_1 > 0) || !(c.beta_1 < c.beta_T) || !(c.beta_T < 1))
        fail("need 0 < stage2.beta_1 < stage2.beta_T < 1");
    if (!(c.mask_alpha > 0)) fail("stage2.alpha must be positive");
    if (c.temb_dim < 2 || c.temb_dim % 2 != 0) fail("stage2.temb_dim must be even and >= 2");
    if (c.t_start < -1 || c.t_start > c.diffusion_T) fail("sampler.t_start must be -1 or in [0, T]");
}

// ---------------------------------------------------------------------------
// S2T1 container
// ---------------------------------------------------------------------------

namespace {

void append_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& out, double v) { append_u64(out, std::bit_cast<uint64_t>(v)); }
void append_f32(std::string& out, float v) { append_u32(out, std::bit_cast<uint32_t>(v)); }

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const std::string& field) {
        if (pos + n > buf.size())
            throw CorruptCheckpointError("corrupt checkpoint: truncated " + field);
    }
    uint8_t u8(const std::string& field) {
        need(1, field);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint16_t u16(const std::string& field) {
        need(2, field);
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint32_t u32(const std::string& field) {
        need(4, field);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64(const std::string& field) {
        need(8, field);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    std::string bytes(size_t n, const std::string& field) {
        need(n, field);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

int64_t S2t1Entry::numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
}

static const S2t1Entry* find_entry(const std::vector<S2t1Entry>& entries, const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

void S2t1File::put_tensor(const std::string& name, const Tensor& t) {
    if (find_entry(entries_, name)) throw std::invalid_argument("s2t1: duplicate entry '" + name + "'");
    S2t1Entry e;
    e.name = name;
    e.dtype = 1;
    e.dims = t.dims();
    e.f64 = t.vec();
    entries_.push_back(std::move(e));
}

void S2t1File::put_tensor_f32(const std::string& name, const Tensor& t) {
    if (find_entry(entries_, name)) throw std::invalid_argument("s2t1: duplicate entry '" + name + "'");
    S2t1Entry e;
    e.name = name;
    e.dtype = 0;
    e.dims = t.dims();
    e.f64.reserve(t.vec().size());
    for (double v : t.vec()) e.f64.push_back(static_cast<double>(static_cast<float>(v)));
    entries_.push_back(std::move(e));
}

void S2t1File::put_i64(const std::string& name, std::vector<int64_t> dims, std::vector<int64_t> values) {
    if (find_entry(entries_, name)) throw std::invalid_argument("s2t1: duplicate entry '" + name + "'");
    S2t1Entry e;
    e.name = name;
    e.dtype = 2;
    e.dims = std::move(dims);
    e.i64 = std::move(values);
    if (e.numel() != static_cast<int64_t>(e.i64.size()))
        throw std::invalid_argument("s2t1: dims do not match value count for '" + name + "'");
    entries_.push_back(std::move(e));
}

void S2t1File::put_scalar(const std::string& name, double v) {
    if (find_entry(entries_, name)) throw std::invalid_argument("s2t1: duplicate entry '" + name + "'");
    S2t1Entry e;
    e.name = name;
    e.dtype = 1;
    e.f64 = {v};
    entries_.push_back(std::move(e));
}

void S2t1File::put_scalar_i64(const std::string& name, int64_t v) {
    if (find_entry(entries_, name)) throw std::invalid_argument("s2t1: duplicate entry '" + name + "'");
    S2t1Entry e;
    e.name = name;
    e.dtype = 2;
    e.i64 = {v};
    entries_.push_back(std::move(e));
}

bool S2t1File::has(const std::string& name) const { return find_entry(entries_, name) != nullptr; }

const S2t1Entry& S2t1File::entry(const std::string& name) const {
    const S2t1Entry* e = find_entry(entries_, name);
    if (!e) throw CorruptCheckpointError("corrupt checkpoint: missing entry '" + name + "'");
    return *e;
}

Tensor S2t1File::tensor(const std::string& name) const {
    const S2t1Entry& e = entry(name);
    if (e.dtype == 2) {
        Tensor t(e.dims.empty() ? std::vector<int64_t>{1} : e.dims);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(e.i64[static_cast<size_t>(i)]);
        return t;
    }
    return Tensor(e.dims.empty() ? std::vector<int64_t>{1} : e.dims, e.f64);
}

double S2t1File::scalar(const std::string& name) const {
    const S2t1Entry& e = entry(name);
    if (e.numel() != 1) throw CorruptCheckpointError("corrupt checkpoint: entry '" + name + "' is not scalar");
    return e.dtype == 2 ? static_cast<double>(e.i64[0]) : e.f64[0];
}

int64_t S2t1File::scalar_i64(const std::string& name) const {
    const S2t1Entry& e = entry(name);
    if (e.numel() != 1) throw CorruptCheckpointError("corrupt checkpoint: entry '" + name + "' is not scalar");
    return e.dtype == 2 ? e.i64[0] : static_cast<int64_t>(e.f64[0]);
}

void S2t1File::save(const std::string& path) const {
    std::string out;
    out += "S2T1";
    append_u32(out, 1);
    append_u32(out, static_cast<uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        append_u16(out, static_cast<uint16_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.dtype));
        out.push_back(static_cast<char>(e.dims.size()));
        for (int64_t d : e.dims) append_u64(out, static_cast<uint64_t>(d));
        if (e.dtype == 0)
            for (double v : e.f64) append_f32(out, static_cast<float>(v));
        else if (e.dtype == 1)
            for (double v : e.f64) append_f64(out, v);
        else
            for (int64_t v : e.i64) append_u64(out, static_cast<uint64_t>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("s2t1: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("s2t1: write failed: " + path);
}

S2t1File S2t1File::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CorruptCheckpointError("corrupt checkpoint: cannot open " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    const std::string data = buf.str();

    Reader r{data};
    const std::string magic = r.bytes(4, "magic");
    if (magic != "S2T1") throw CorruptCheckpointError("corrupt checkpoint: bad magic");
    const uint32_t version = r.u32("version");
    if (version != 1)
        throw CorruptCheckpointError("corrupt checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = r.u32("entry count");

    S2t1File out;
    for (uint32_t i = 0; i < count; ++i) {
        S2t1Entry e;
        const uint16_t name_len = r.u16("entry name length");
        e.name = r.bytes(name_len, "entry name");
        e.dtype = r.u8("dtype of entry '" + e.name + "'");
        if (e.dtype > 2)
            throw CorruptCheckpointError("corrupt checkpoint: invalid dtype for entry '" + e.name + "'");
        const uint8_t ndim = r.u8("ndim of entry '" + e.name + "'");
        int64_t numel = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            const uint64_t dim = r.u64("dims of entry '" + e.name + "'");
            if (dim == 0 || dim > (1ull << 32))
                throw CorruptCheckpointError("corrupt checkpoint: invalid dim for entry '" + e.name + "'");
            e.dims.push_back(static_cast<int64_t>(dim));
            numel *= static_cast<int64_t>(dim);
            if (numel > (1ll << 32))
                throw CorruptCheckpointError("corrupt checkpoint: oversized entry '" + e.name + "'");
        }
        const std::string field = "payload for entry '" + e.name + "'";
        if (e.dtype == 0) {
            e.f64.reserve(static_cast<size_t>(numel));
            for (int64_t k = 0; k < numel; ++k)
                e.f64.push_back(static_cast<double>(std::bit_cast<float>(r.u32(field))));
        } else if (e.dtype == 1) {
            e.f64.reserve(static_cast<size_t>(numel));
            for (int64_t k = 0; k < numel; ++k) e.f64.push_back(std::bit_cast<double>(r.u64(field)));
        } else {
            e.i64.reserve(static_cast<size_t>(numel));
            for (int64_t k = 0; k < numel; ++k) e.i64.push_back(static_cast<int64_t>(r.u64(field)));
        }
        out.entries_.push_back(std::move(e));
    }
    if (r.pos != data.size())
        throw CorruptCheckpointError("corrupt checkpoint: trailing bytes after last entry");
    return out;
}

// ---------------------------------------------------------------------------
// Sample files
// ---------------------------------------------------------------------------

void write_sample_file(const std::string& path, const PairedSample& sample) {
    S2t1File f;
    f.put_tensor("ncct", sample.ncct.pixels);
    f.put_tensor("cect", sample.cect.pixels);
    std::vector<int64_t> mask(static_cast<size_t>(sample.contrast_mask.numel()));
    for (int64_t i = 0; i < sample.contrast_mask.numel(); ++i)
        mask[static_cast<size_t>(i)] = sample.contrast_mask[i] != 0.0 ? 1 : 0;
    f.put_i64("mask", sample.contrast_mask.dims(), std::move(mask));
    f.put_scalar_i64("seed", static_cast<int64_t>(sample.seed));
    f.save(path);
}

PairedSample read_sample_file(const std::string& path) {
    const S2t1File f = S2t1File::load(path);
    PairedSample s;
    s.ncct.pixels = f.tensor("ncct");
    s.cect.pixels = f.tensor("cect");
    s.contrast_mask = f.tensor("mask");
    s.seed = static_cast<uint64_t>(f.scalar_i64("seed"));
    return s;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_ae_checkpoint(const std::string& path, Autoencoder& ae, bool diverged) {
    S2t1File f;
    for (auto& [name, p] : ae.named_params()) f.put_tensor(name, p->value);
    f.put_scalar_i64("stage", 0);
    f.put_scalar_i64("latent_channels", ae.cfg.latent_channels);
    f.put_scalar_i64("downsample_factor", SyncreticEncoder::kDownsampleFactor);
    f.put_scalar_i64("base_width", ae.cfg.base_width);
    f.put_scalar_i64("groups", ae.cfg.groups);
    f.put_scalar_i64("codebook_size", ae.cfg.codebook_size);
    f.put_scalar("beta_commit", ae.cfg.beta_commit);
    f.put_scalar("hf_beta", ae.cfg.hf_beta);
    f.put_scalar("hf_sigma", ae.cfg.hf_sigma);
    f.put_scalar("lambda_r", ae.cfg.weights.lambda_r);
    f.put_scalar("lambda_q", ae.cfg.weights.lambda_q);
    f.put_scalar("lambda_s", ae.cfg.weights.lambda_s);
    f.put_scalar("lambda_adv", ae.cfg.weights.lambda_adv);
    f.put_scalar("sim_gamma", ae.cfg.sim_gamma);
    f.put_scalar("sim_floor", ae.cfg.sim_floor);
    if (diverged) f.put_scalar_i64("diverged", 1);
    f.save(path);
}

Autoencoder load_ae_checkpoint(const std::string& path) {
    const S2t1File f = S2t1File::load(path);
    if (f.scalar_i64("stage") != 0)
        throw std::invalid_argument("checkpoint " + path + " is not a stage-1 (ae) checkpoint");
    AeConfig cfg;
    cfg.latent_channels = f.scalar_i64("latent_channels");
    cfg.base_width = f.scalar_i64("base_width");
    cfg.groups = f.scalar_i64("groups");
    cfg.codebook_size = f.scalar_i64("codebook_size");
    cfg.beta_commit = f.scalar("beta_commit");
    cfg.hf_beta = f.scalar("hf_beta");
    cfg.hf_sigma = f.scalar("hf_sigma");
    cfg.weights.lambda_r = f.scalar("lambda_r");
    cfg.weights.lambda_q = f.scalar("lambda_q");
    cfg.weights.lambda_s = f.scalar("lambda_s");
    cfg.weights.lambda_adv = f.scalar("lambda_adv");
    cfg.sim_gamma = f.scalar("sim_gamma");
    cfg.sim_floor = f.scalar("sim_floor");
    Autoencoder ae(cfg, 0);
    for (auto& [name, p] : ae.named_params()) {
        const Tensor t = f.tensor(name);
        if (t.dims() != p->value.dims())
            throw std::invalid_argument("checkpoint entry '" + name + "' has shape " + shape_str(t) +
                                        ", expected " + shape_str(p->value));
        p->value = t;
    }
    return ae;
}

void save_diff_checkpoint(const std::string& path, Denoiser& denoiser, const NoiseSchedule& sched,
                          int64_t t_start_default, double latent_scale, bool diverged) {
    S2t1File f;
    for (auto& [name, p] : denoiser.named_params()) f.put_tensor("diff." + name, p->value);
    f.put_scalar_i64("stage", 1);
    f.put_scalar_i64("T", sched.T);
    f.put_scalar("beta_1", sched.beta.front());
    f.put_scalar("beta_T", sched.beta.back());
    f.put_scalar_i64("t_start_default", t_start_default);
    f.put_scalar("latent_scale", latent_scale);
    f.put_scalar_i64("latent_channels", denoiser.config().latent_channels);
    f.put_scalar_i64("base_width", denoiser.config().base_width);
    f.put_scalar_i64("temb_dim", denoiser.config().temb_dim);
    f.put_scalar_i64("groups", denoiser.config().groups);
    if (diverged) f.put_scalar_i64("diverged", 1);
    f.save(path);
}

DiffCheckpoint load_diff_checkpoint(const std::string& path) {
    const S2t1File f = S2t1File::load(path);
    if (f.scalar_i64("stage") != 1)
        throw std::invalid_argument("checkpoint " + path + " is not a stage-2 (diff) checkpoint");
    DenoiserConfig cfg;
    cfg.latent_channels = f.scalar_i64("latent_channels");
    cfg.base_width = f.scalar_i64("base_width");
    cfg.temb_dim = f.scalar_i64("temb_dim");
    cfg.groups = f.scalar_i64("groups");
    DiffCheckpoint out;
    out.denoiser = Denoiser(cfg, 0);
    for (auto& [name, p] : out.denoiser.named_params()) {
        const Tensor t = f.tensor("diff." + name);
        if (t.dims() != p->value.dims())
            throw std::invalid_argument("checkpoint entry 'diff." + name + "' has shape " +
                                        shape_str(t) + ", expected " + shape_str(p->value));
        p->value = t;
    }
    out.sched = make_schedule(f.scalar_i64("T"), f.scalar("beta_1"), f.scalar("beta_T"));
    out.t_start_default = f.scalar_i64("t_start_default");
    out.latent_scale = f.scalar("latent_scale");
    return out;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

struct NormalizedPair {
    NormalizedImage xn, xc;
};

std::vector<NormalizedPair> normalize_pairs(const std::vector<PairedSample>& pairs) {
    std::vector<NormalizedPair> out;
    out.reserve(pairs.size());
    for (const PairedSample& p : pairs)
        out.push_back({window_normalize(p.ncct, kWindowWidth, kWindowLevel),
                       window_normalize(p.cect, kWindowWidth, kWindowLevel)});
    return out;
}

} // namespace

AeTrainResult train_stage1(const RunConfig& cfg, const std::vector<PairedSample>& train_pairs) {
    validate_config(cfg);
    if (train_pairs.size() < 8)
        throw std::invalid_argument("train_stage1: need at least 8 training pairs");

    AeTrainResult result;
    result.ae = Autoencoder(cfg.ae_config(), cfg.seed);

    const std::vector<NormalizedPair> data = normalize_pairs(train_pairs);
    const int64_t n = static_cast<int64_t>(data.size());

    AdamwConfig opt;
    opt.lr = cfg.stage1_lr;
    opt.weight_decay = cfg.stage1_weight_decay;

    RngStream step_stream(cfg.seed, 40);
    RngStream reseed_rng(cfg.seed, 41);

    result.losses.reserve(static_cast<size_t>(cfg.stage1_steps));
    for (int64_t step = 0; step < cfg.stage1_steps; ++step) {
        std::vector<std::pair<NormalizedImage, NormalizedImage>> batch;
        batch.reserve(static_cast<size_t>(cfg.stage1_batch_size));
        for (int64_t b = 0; b < cfg.stage1_batch_size; ++b) {
            const int64_t idx = step_stream.next_below(n);
            const uint64_t crop_seed = step_stream.next_u64();
            batch.emplace_back(crop_patch(data[static_cast<size_t>(idx)].xn, cfg.patch_size, crop_seed),
                               crop_patch(data[static_cast<size_t>(idx)].xc, cfg.patch_size, crop_seed));
        }
        try {
            result.losses.push_back(ae_train_step(result.ae, batch, opt, reseed_rng));
        } catch (const DivergenceError&) {
            result.diverged = true;
            break;
        }
    }
    return result;
}

DiffTrainResult train_stage2(const RunConfig& cfg, const std::vector<PairedSample>& train_pairs,
                             const Autoencoder& ae) {
    validate_config(cfg);
    if (train_pairs.empty()) throw std::invalid_argument("train_stage2: no training pairs");
    if (!train_pairs.empty()) {
        const int64_t h = train_pairs.front().ncct.height();
        const int64_t w = train_pairs.front().ncct.width();
        if (h % SyncreticEncoder::kDownsampleFactor != 0 || w % SyncreticEncoder::kDownsampleFactor != 0)
            throw std::invalid_argument("train_stage2: image dims incompatible with the encoder");
    }

    DiffTrainResult result;
    DenoiserConfig dcfg = cfg.denoiser_config();
    dcfg.latent_channels = ae.cfg.latent_channels; // the frozen encoder sets the latent shape
    result.denoiser = Denoiser(dcfg, cfg.seed);
    result.sched = make_schedule(cfg.diffusion_T, cfg.beta_1, cfg.beta_T);

    // The autoencoder is frozen, so every latent is fixed; cache them all.
    const std::vector<NormalizedPair> data = normalize_pairs(train_pairs);
    std::vector<Tensor> e_n, e_c;
    e_n.reserve(data.size());
    e_c.reserve(data.size());
    for (const NormalizedPair& p : data) {
        e_n.push_back(ae.enc.forward(p.xn));
        e_c.push_back(ae.enc.forward(p.xc));
    }

    // Scale latents to unit RMS for the diffusion process; the cosine map and
    // mask are invariant to this shared positive rescaling.
    double sq = 0.0;
    int64_t count = 0;
    for (const Tensor& e : e_n) {
        for (int64_t i = 0; i < e.numel(); ++i) sq += e[i] * e[i];
        count += e.numel();
    }
    const double rms = std::sqrt(sq / static_cast<double>(count));
    result.latent_scale = rms > 0.0 ? 1.0 / rms : 1.0;
    for (Tensor& e : e_n) kernels::ew_scale(e.data(), result.latent_scale, e.numel(), e.data());
    for (Tensor& e : e_c) kernels::ew_scale(e.data(), result.latent_scale, e.numel(), e.data());

    AdamwConfig opt;
    opt.lr = cfg.stage2_lr;
    opt.weight_decay = cfg.stage2_weight_decay;

    RngStream stream(cfg.seed, 42);
    std::vector<Param*> params = result.denoiser.params();

    const int64_t n = static_cast<int64_t>(data.size());
    for (int64_t tau = 0; tau < cfg.stage2_epochs && !result.diverged; ++tau) {
        // Logged schedule: mean mask over the whole training set at this epoch.
        double mask_sum = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const SimilarityMap sim = cosine_map(e_n[static_cast<size_t>(i)], e_c[static_cast<size_t>(i)]);
            const DynamicMask mask = dynamic_mask(sim, tau, cfg.stage2_epochs, cfg.mask_alpha);
            double s = 0.0;
            for (int64_t k = 0; k < mask.values.numel(); ++k) s += mask.values[k];
            mask_sum += s / static_cast<double>(mask.values.numel());
        }
        result.mask_mean_per_epoch.push_back(mask_sum / static_cast<double>(n));

        for (int64_t step = 0; step < cfg.stage2_steps_per_epoch; ++step) {
            zero_grads(params);
            double loss = 0.0;
            try {
                for (int64_t b = 0; b < cfg.stage2_batch_size; ++b) {
                    const int64_t idx = stream.next_below(n);
                    const DiffLossResult r =
                        diff_loss(e_n[static_cast<size_t>(idx)], e_c[static_cast<size_t>(idx)], tau,
                                  cfg.stage2_epochs, result.denoiser, result.sched, stream,
                                  cfg.mask_alpha, true);
                    loss += r.loss;
                }
                const double inv = 1.0 / static_cast<double>(cfg.stage2_batch_size);
                for (Param* p : params) kernels::ew_scale(p->grad.data(), inv, p->numel(), p->grad.data());
                for (Param* p : params) adamw_step(*p, opt);
            } catch (const DivergenceError&) {
                result.diverged = true;
                break;
            }
            result.loss_per_step.push_back(loss / static_cast<double>(cfg.stage2_batch_size));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

MetricReport evaluate_translation(const std::vector<PairedSample>& pairs, const Autoencoder& ae,
                                  const Denoiser& denoiser, const NoiseSchedule& sched,
                                  int64_t t_start, uint64_t seed, double latent_scale) {
    std::vector<Tensor> preds, targets;
    preds.reserve(pairs.size());
    targets.reserve(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        const NormalizedImage xn = window_normalize(pairs[i].ncct, kWindowWidth, kWindowLevel);
        const NormalizedImage xc = window_normalize(pairs[i].cect, kWindowWidth, kWindowLevel);
        SamplerConfig cfg;
        cfg.t_start = t_start;
        cfg.seed = seed + static_cast<uint64_t>(i);
        preds.push_back(translate(xn, ae, denoiser, sched, cfg, latent_scale).pixels);
        targets.push_back(xc.pixels);
    }
    return evaluate_pairs(preds, targets);
}

MetricReport evaluate_identity(const std::vector<PairedSample>& pairs) {
    std::vector<Tensor> preds, targets;
    preds.reserve(pairs.size());
    targets.reserve(pairs.size());
    for (const PairedSample& p : pairs) {
        preds.push_back(window_normalize(p.ncct, kWindowWidth, kWindowLevel).pixels);
        targets.push_back(window_normalize(p.cect, kWindowWidth, kWindowLevel).pixels);
    }
    return evaluate_pairs(preds, targets);
}

// ---------------------------------------------------------------------------
// PGM emission
// ---------------------------------------------------------------------------

void emit_pgm(const Tensor& values, const std::string& path) {
    if (values.ndim() != 2) throw std::invalid_argument("emit_pgm: expected a 2-D grid");
    for (int64_t i = 0; i < values.numel(); ++i)
        if (!(values[i] >= -1.0 && values[i] <= 1.0))
            throw std::invalid_argument("emit_pgm: values must lie in [-1, 1]");
    const int64_t h = values.dim(0), w = values.dim(1);
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (int64_t i = 0; i < values.numel(); ++i) {
        const double mapped = std::floor((values[i] + 1.0) * 127.5 + 0.5);
        out.push_back(static_cast<char>(static_cast<uint8_t>(std::clamp(mapped, 0.0, 255.0))));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("emit_pgm: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("emit_pgm: write failed: " + path);
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> sorted_s2t1_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".s2t1") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<PairedSample> load_pairs_from_dir(const std::string& dir) {
    std::vector<PairedSample> pairs;
    for (const std::string& f : sorted_s2t1_files(dir)) pairs.push_back(read_sample_file(f));
    if (pairs.empty()) throw std::invalid_argument("no .s2t1 sample files found in " + dir);
    return pairs;
}

RunConfig load_cli_config(const std::string& config_path, uint64_t* seed_override) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config_file(config_path);
    if (seed_override) cfg.seed = *seed_override;
    validate_config(cfg);
    return cfg;
}

void write_stage1_log(const std::string& path, const std::vector<AeStepRecord>& losses) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open log file " + path);
    f << "step,total,rec,quan,sim\n";
    char buf[256];
    for (size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", i, losses[i].total,
                      losses[i].rec, losses[i].quan, losses[i].sim);
        f << buf;
    }
}

void write_stage2_log(const std::string& path, const DiffTrainResult& r, int64_t steps_per_epoch) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open log file " + path);
    f << "epoch,mean_mask,mean_loss\n";
    char buf[256];
    for (size_t e = 0; e < r.mask_mean_per_epoch.size(); ++e) {
        double loss = 0.0;
        int64_t n = 0;
        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            const size_t idx = e * static_cast<size_t>(steps_per_epoch) + static_cast<size_t>(s);
            if (idx < r.loss_per_step.size()) {
                loss += r.loss_per_step[idx];
                ++n;
            }
        }
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e, r.mask_mean_per_epoch[e],
                      n > 0 ? loss / static_cast<double>(n) : 0.0);
        f << buf;
    }
}

int cmd_gen(int64_t n, int64_t size, uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/train");
    fs::create_directories(out_dir + "/val");

    std::vector<PairedSample> pairs;
    pairs.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        RngStream derive(seed, 50);
        derive.counter = static_cast<uint64_t>(i);
        pairs.push_back(gen_pair(derive.next_u64(), size));
    }
    auto [train, val] = split_dataset(std::move(pairs), seed);

    nlohmann::json manifest;
    manifest["n"] = n;
    manifest["size"] = size;
    manifest["seed"] = seed;
    std::vector<std::string> train_files, val_files;
    char name[64];
    for (size_t i = 0; i < train.size(); ++i) {
        std::snprintf(name, sizeof(name), "train/pair_%04zu.s2t1", i);
        write_sample_file(out_dir + "/" + name, train[i]);
        train_files.emplace_back(name);
    }
    for (size_t i = 0; i < val.size(); ++i) {
        std::snprintf(name, sizeof(name), "val/pair_%04zu.s2t1", i);
        write_sample_file(out_dir + "/" + name, val[i]);
        val_files.emplace_back(name);
    }
    manifest["train_files"] = train_files;
    manifest["val_files"] = val_files;
    std::ofstream mf(out_dir + "/manifest.json", std::ios::trunc);
    if (!mf) throw std::runtime_error("cannot write manifest in " + out_dir);
    mf << manifest.dump(2) << "\n";
    std::printf("wrote %zu train + %zu val samples to %s\n", train.size(), val.size(),
                out_dir.c_str());
    return 0;
}

int cmd_train_ae(const std::string& data_dir, const std::string& out_path,
                 const std::string& config_path, uint64_t* seed_override,
                 const std::string& log_path) {
    const RunConfig cfg = load_cli_config(config_path, seed_override);
    const std::vector<PairedSample> pairs = load_pairs_from_dir(data_dir);
    AeTrainResult r = train_stage1(cfg, pairs);
    save_ae_checkpoint(out_path, r.ae, r.diverged);
    if (!log_path.empty()) write_stage1_log(log_path, r.losses);
    if (r.diverged) throw DivergenceError("stage-1 training diverged; partial checkpoint saved to " + out_path);
    std::printf("stage 1 done: %zu steps, final loss %.6f -> %s\n", r.losses.size(),
                r.losses.empty() ? 0.0 : r.losses.back().total, out_path.c_str());
    return 0;
}

int cmd_train_diff(const std::string& data_dir, const std::string& ae_path,
                   const std::string& out_path, const std::string& config_path,
                   uint64_t* seed_override, const std::string& log_path) {
    const RunConfig cfg = load_cli_config(config_path, seed_override);
    const std::vector<PairedSample> pairs = load_pairs_from_dir(data_dir);
    Autoencoder ae = load_ae_checkpoint(ae_path);
    DiffTrainResult r = train_stage2(cfg, pairs, ae);
    save_diff_checkpoint(out_path, r.denoiser, r.sched, cfg.sampler_t_start(), r.latent_scale,
                         r.diverged);
    if (!log_path.empty()) write_stage2_log(log_path, r, cfg.stage2_steps_per_epoch);
    if (r.diverged) throw DivergenceError("stage-2 training diverged; partial checkpoint saved to " + out_path);
    std::printf("stage 2 done: %zu steps, final loss %.6f -> %s\n", r.loss_per_step.size(),
                r.loss_per_step.empty() ? 0.0 : r.loss_per_step.back(), out_path.c_str());
    return 0;
}

int cmd_translate(const std::string& in_path, const std::string& ae_path,
                  const std::string& diff_path, const std::string& out_path, uint64_t seed,
                  int64_t t_start_flag, double ww, double wl) {
    const S2t1File in = S2t1File::load(in_path);
    // Inference consumes the non-contrast image only.
    HUImage ncct{in.tensor("ncct")};
    const NormalizedImage xn = window_normalize(ncct, ww, wl);

    const Autoencoder ae = load_ae_checkpoint(ae_path);
    const DiffCheckpoint diff = load_diff_checkpoint(diff_path);

    SamplerConfig cfg;
    cfg.t_start = t_start_flag >= 0 ? t_start_flag : diff.t_start_default;
    cfg.seed = seed;
    const NormalizedImage pred = translate(xn, ae, diff.denoiser, diff.sched, cfg, diff.latent_scale);

    S2t1File out;
    out.put_tensor("pred", pred.pixels);
    out.put_scalar_i64("t_start", cfg.t_start);
    out.put_scalar_i64("seed", static_cast<int64_t>(seed));
    out.save(out_path);
    std::printf("translated %s -> %s (t_start=%lld)\n", in_path.c_str(), out_path.c_str(),
                static_cast<long long>(cfg.t_start));
    return 0;
}

Tensor load_eval_entry(const std::string& path, const std::string& entry, double ww, double wl) {
    const S2t1File f = S2t1File::load(path);
    Tensor t = f.tensor(entry);
    // HU-domain entries are windowed; predictions are already normalized.
    if (entry == "ncct" || entry == "cect") t = window_normalize(HUImage{t}, ww, wl).pixels;
    return t;
}

int cmd_eval(const std::string& pred_path, const std::string& target_path,
             const std::string& report_path, const std::string& pred_entry,
             const std::string& target_entry, double ww, double wl) {
    std::vector<Tensor> preds, targets;
    if (fs::is_directory(pred_path) != fs::is_directory(target_path))
        throw std::invalid_argument("eval: --pred and --target must both be files or both be directories");
    if (fs::is_directory(pred_path)) {
        for (const std::string& tf : sorted_s2t1_files(target_path)) {
            const std::string name = fs::path(tf).filename().string();
            const std::string pf = (fs::path(pred_path) / name).string();
            if (!fs::exists(pf)) continue;
            preds.push_back(load_eval_entry(pf, pred_entry, ww, wl));
            targets.push_back(load_eval_entry(tf, target_entry, ww, wl));
        }
        if (preds.empty())
            throw std::invalid_argument("eval: no matching .s2t1 file names between the directories");
    } else {
        preds.push_back(load_eval_entry(pred_path, pred_entry, ww, wl));
        targets.push_back(load_eval_entry(target_path, target_entry, ww, wl));
    }
    const MetricReport report = evaluate_pairs(preds, targets);
    const std::string json = report_to_json(report);
    std::ofstream f(report_path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("eval: cannot open report file " + report_path);
    f << json;
    std::printf("%s", json.c_str());
    return 0;
}

int cmd_simmap(const std::string& pair_path, const std::string& ae_path,
               const std::string& out_path, double ww, double wl) {
    const PairedSample sample = read_sample_file(pair_path);
    const Autoencoder ae = load_ae_checkpoint(ae_path);
    const NormalizedImage xn = window_normalize(sample.ncct, ww, wl);
    const NormalizedImage xc = window_normalize(sample.cect, ww, wl);
    const SimilarityMap sim = cosine_map(ae.enc.forward(xn), ae.enc.forward(xc));
    emit_pgm(sim.values, out_path);
    std::printf("similarity map %s -> %s\n", pair_path.c_str(), out_path.c_str());
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"S2LDM: similarity-guided latent diffusion for NCCT->CECT phantom translation"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a phantom dataset (train/ and val/ splits)");
    int64_t gen_n = 40, gen_size = 64;
    uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of pairs")->check(CLI::PositiveNumber);
    gen->add_option("--size", gen_size, "image size in pixels");
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    // train-ae
    auto* tae = app.add_subcommand("train-ae", "train the stage-1 syncretic autoencoder");
    std::string tae_data, tae_out, tae_config, tae_log;
    uint64_t tae_seed = 0;
    bool tae_seed_set = false;
    tae->add_option("--data", tae_data, "directory of .s2t1 sample files")->required();
    tae->add_option("--out", tae_out, "output checkpoint path")->required();
    tae->add_option("--config", tae_config, "config file");
    tae->add_option("--seed", tae_seed, "seed override")->each([&](const std::string&) { tae_seed_set = true; });
    tae->add_option("--log", tae_log, "per-step loss CSV path");

    // train-diff
    auto* tdf = app.add_subcommand("train-diff", "train the stage-2 latent diffusion model");
    std::string tdf_data, tdf_ae, tdf_out, tdf_config, tdf_log;
    uint64_t tdf_seed = 0;
    bool tdf_seed_set = false;
    tdf->add_option("--data", tdf_data, "directory of .s2t1 sample files")->required();
    tdf->add_option("--ae", tdf_ae, "stage-1 checkpoint")->required();
    tdf->add_option("--out", tdf_out, "output checkpoint path")->required();
    tdf->add_option("--config", tdf_config, "config file");
    tdf->add_option("--seed", tdf_seed, "seed override")->each([&](const std::string&) { tdf_seed_set = true; });
    tdf->add_option("--log", tdf_log, "per-epoch mask/loss CSV path");

    // translate
    auto* tr = app.add_subcommand("translate", "NCCT -> CECT translation from the ncct entry only");
    std::string tr_in, tr_ae, tr_diff, tr_out;
    uint64_t tr_seed = 0;
    int64_t tr_tstart = -1;
    double tr_ww = kWindowWidth, tr_wl = kWindowLevel;
    tr->add_option("--in", tr_in, "input .s2t1 with an 'ncct' entry")->required();
    tr->add_option("--ae", tr_ae, "stage-1 checkpoint")->required();
    tr->add_option("--diff", tr_diff, "stage-2 checkpoint")->required();
    tr->add_option("--out", tr_out, "output .s2t1 path")->required();
    tr->add_option("--seed", tr_seed, "sampler seed");
    tr->add_option("--t-start", tr_tstart, "diffusion start step (default: checkpoint value)");
    tr->add_option("--ww", tr_ww, "window width (HU)");
    tr->add_option("--wl", tr_wl, "window level (HU)");

    // eval
    auto* ev = app.add_subcommand("eval", "compute NMAE/NMSE/PSNR/SSIM report");
    std::string ev_pred, ev_target, ev_report, ev_pred_entry = "pred", ev_target_entry = "cect";
    double ev_ww = kWindowWidth, ev_wl = kWindowLevel;
    ev->add_option("--pred", ev_pred, "prediction file or directory")->required();
    ev->add_option("--target", ev_target, "target file or directory")->required();
    ev->add_option("--report", ev_report, "output JSON report path")->required();
    ev->add_option("--pred-entry", ev_pred_entry, "tensor entry name for predictions");
    ev->add_option("--target-entry", ev_target_entry, "tensor entry name for targets");
    ev->add_option("--ww", ev_ww, "window width (HU)");
    ev->add_option("--wl", ev_wl, "window level (HU)");

    // simmap
    auto* sm = app.add_subcommand("simmap", "emit the latent cosine similarity map as PGM");
    std::string sm_pair, sm_ae, sm_out;
    double sm_ww = kWindowWidth, sm_wl = kWindowLevel;
    sm->add_option("--pair", sm_pair, "paired .s2t1 sample")->required();
    sm->add_option("--ae", sm_ae, "stage-1 checkpoint")->required();
    sm->add_option("--out", sm_out, "output .pgm path")->required();
    sm->add_option("--ww", sm_ww, "window width (HU)");
    sm->add_option("--wl", sm_wl, "window level (HU)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, returns 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_n, gen_size, gen_seed, gen_out);
        if (tae->parsed())
            return cmd_train_ae(tae_data, tae_out, tae_config, tae_seed_set ? &tae_seed : nullptr, tae_log);
        if (tdf->parsed())
            return cmd_train_diff(tdf_data, tdf_ae, tdf_out, tdf_config,
                                  tdf_seed_set ? &tdf_seed : nullptr, tdf_log);
        if (tr->parsed())
            return cmd_translate(tr_in, tr_ae, tr_diff, tr_out, tr_seed, tr_tstart, tr_ww, tr_wl);
        if (ev->parsed())
            return cmd_eval(ev_pred, ev_target, ev_report, ev_pred_entry, ev_target_entry, ev_ww, ev_wl);
        if (sm->parsed()) return cmd_simmap(sm_pair, sm_ae, sm_out, sm_ww, sm_wl);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("s2ldm");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace s2ldm
