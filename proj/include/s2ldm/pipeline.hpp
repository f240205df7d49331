#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2ldm/autoencoder.hpp"
#include "s2ldm/diffusion.hpp"
#include "s2ldm/metrics.hpp"
#include "s2ldm/phantom.hpp"
#include "s2ldm/similarity.hpp"
#include "s2ldm/tensor.hpp"

namespace s2ldm {

// ---------------------------------------------------------------------------
// Run configuration: line-oriented `key = value` files with '#' comments.
// Unknown keys are hard errors; every key has a default.
// ---------------------------------------------------------------------------

struct RunConfig {
    uint64_t seed = 1;
    int64_t image_size = 64;
    int64_t patch_size = 64;
    int64_t n_pairs = 40;
    int64_t latent_channels = 8;
    int64_t base_width = 16;
    int64_t groups = 8;

    int64_t stage1_steps = 2000;
    int64_t stage1_batch_size = 2;
    double stage1_lr = 1e-4;
    double stage1_weight_decay = 1e-4;
    double lambda_r = 1.0;
    double lambda_q = 1.0;
    double lambda_s = 0.1;
    double lambda_adv = 0.0;
    double sim_gamma = 1.0;
    double sim_floor = 1e-7;
    int64_t codebook_size = 128;
    double beta_commit = 0.25;
    double hf_beta = 1.0;
    double hf_sigma = 1.0;

    int64_t stage2_epochs = 10;
    int64_t stage2_steps_per_epoch = 200;
    int64_t stage2_batch_size = 2;
    double stage2_lr = 2e-4;
    double stage2_weight_decay = 1e-4;
    int64_t diffusion_T = 1000;
    double beta_1 = 1e-4;
    double beta_T = 0.02;
    double mask_alpha = 2.0;
    int64_t temb_dim = 64;

    int64_t t_start = -1; // -1 resolves to T/2

    int64_t sampler_t_start() const { return t_start < 0 ? diffusion_T / 2 : t_start; }
    AeConfig ae_config() const;
    DenoiserConfig denoiser_config() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
void validate_config(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// S2T1 container: "S2T1" magic, u32 LE version, u32 entry count, then per
// entry u16 name length + name, u8 dtype (0=f32,1=f64,2=i64), u8 ndim,
// ndim x u64 LE dims, raw little-endian payload.
// ---------------------------------------------------------------------------

struct S2t1Entry {
    std::string name;
    uint8_t dtype = 1; // 0=f32, 1=f64, 2=i64
    std::vector<int64_t> dims;
    std::vector<double> f64;  // dtype 0 and 1 (f32 widened on load)
    std::vector<int64_t> i64; // dtype 2

    int64_t numel() const;
};

class S2t1File {
public:
    void put_tensor(const std::string& name, const Tensor& t); // dtype f64
    void put_tensor_f32(const std::string& name, const Tensor& t);
    void put_i64(const std::string& name, std::vector<int64_t> dims, std::vector<int64_t> values);
    void put_scalar(const std::string& name, double v);
    void put_scalar_i64(const std::string& name, int64_t v);

    bool has(const std::string& name) const;
    const S2t1Entry& entry(const std::string& name) const;
    Tensor tensor(const std::string& name) const;
    double scalar(const std::string& name) const;
    int64_t scalar_i64(const std::string& name) const;

    const std::vector<S2t1Entry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static S2t1File load(const std::string& path);

private:
    std::vector<S2t1Entry> entries_;
};

// Sample files carry "ncct"/"cect" (HU), "mask" (i64 0/1) and "seed".
void write_sample_file(const std::string& path, const PairedSample& sample);
PairedSample read_sample_file(const std::string& path);

// Checkpoints.
void save_ae_checkpoint(const std::string& path, Autoencoder& ae, bool diverged = false);
Autoencoder load_ae_checkpoint(const std::string& path);

struct DiffCheckpoint {
    Denoiser denoiser;
    NoiseSchedule sched;
    int64_t t_start_default = 0;
    double latent_scale = 1.0;
};

void save_diff_checkpoint(const std::string& path, Denoiser& denoiser, const NoiseSchedule& sched,
                          int64_t t_start_default, double latent_scale, bool diverged = false);
DiffCheckpoint load_diff_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct AeTrainResult {
    Autoencoder ae;
    std::vector<AeStepRecord> losses;
    bool diverged = false;
};

AeTrainResult train_stage1(const RunConfig& cfg, const std::vector<PairedSample>& train_pairs);

struct DiffTrainResult {
    Denoiser denoiser;
    NoiseSchedule sched;
    double latent_scale = 1.0;
    std::vector<double> loss_per_step;
    std::vector<double> mask_mean_per_epoch;
    bool diverged = false;
};

DiffTrainResult train_stage2(const RunConfig& cfg, const std::vector<PairedSample>& train_pairs,
                             const Autoencoder& ae);

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

// Translate every pair's NCCT and score against its normalized CECT.
MetricReport evaluate_translation(const std::vector<PairedSample>& pairs, const Autoencoder& ae,
                                  const Denoiser& denoiser, const NoiseSchedule& sched,
                                  int64_t t_start, uint64_t seed, double latent_scale);

// The copy-input baseline: the normalized NCCT scored as the prediction.
MetricReport evaluate_identity(const std::vector<PairedSample>& pairs);

// ---------------------------------------------------------------------------
// PGM emission: binary P5, maxval 255, -1 -> 0, +1 -> 255, round half up.
// ---------------------------------------------------------------------------

void emit_pgm(const Tensor& values, const std::string& path);

// ---------------------------------------------------------------------------
// CLI entry point: gen / train-ae / train-diff / translate / eval / simmap.
// Returns 0 on success, 1 on usage errors, 2 on runtime errors.
// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args); // without argv[0]

} // namespace s2ldm
