#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "s2ldm/errors.hpp"
#include "s2ldm/pipeline.hpp"
#include "test_util.hpp"

using namespace s2ldm;
using s2ldm::test::same_bits;

namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("s2ldm_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    REQUIRE(f.good());
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

RunConfig tiny_run_config() {
    RunConfig cfg = parse_config_text(
        "seed = 3\n"
        "image_size = 32\n"
        "patch_size = 32\n"
        "latent_channels = 2\n"
        "base_width = 4\n"
        "groups = 2\n"
        "stage1.steps = 12\n"
        "stage1.batch_size = 1\n"
        "stage1.codebook_size = 8\n"
        "stage2.epochs = 4\n"
        "stage2.steps_per_epoch = 3\n"
        "stage2.batch_size = 1\n"
        "stage2.T = 10\n"
        "stage2.temb_dim = 8\n");
    return cfg;
}

std::vector<PairedSample> tiny_dataset(int n, int64_t size = 32) {
    std::vector<PairedSample> pairs;
    for (int i = 0; i < n; ++i) pairs.push_back(gen_pair(static_cast<uint64_t>(1000 + i), size));
    return pairs;
}

} // namespace

TEST_CASE("config parsing: defaults, overrides, comments") {
    const RunConfig def = parse_config_text("");
    CHECK(def.seed == 1);
    CHECK(def.image_size == 64);
    CHECK(def.diffusion_T == 1000);
    CHECK(def.sampler_t_start() == 500);

    const RunConfig cfg = parse_config_text(
        "# a comment\n"
        "seed = 42\n"
        "stage1.lr = 0.001  # trailing comment\n"
        "stage2.T = 100\n"
        "sampler.t_start = 25\n");
    CHECK(cfg.seed == 42);
    CHECK(cfg.stage1_lr == 0.001);
    CHECK(cfg.diffusion_T == 100);
    CHECK(cfg.sampler_t_start() == 25);
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_config_text("stage1.learning_rate = 0.1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("seed = banana\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("seed 42\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("stage2.T = 0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("image_size = 30\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("sampler.t_start = 2000\n"), std::invalid_argument);
}

TEST_CASE("s2t1 round-trip is bit-exact") {
    const std::string dir = temp_dir("s2t1");
    RngStream rng(1, 0);
    const Tensor a = s2ldm::test::random_tensor({3, 4}, rng);
    const Tensor b = s2ldm::test::random_tensor({2, 2, 2}, rng);
    const Tensor c = s2ldm::test::random_tensor({7}, rng);

    S2t1File f;
    f.put_tensor("a", a);
    f.put_tensor("b", b);
    f.put_tensor("c", c);
    f.put_scalar("pi-ish", 3.14159);
    f.put_scalar_i64("count", -17);
    f.put_i64("mask", {2, 2}, {1, 0, 0, 1});
    f.save(dir + "/x.s2t1");

    const S2t1File g = S2t1File::load(dir + "/x.s2t1");
    CHECK(same_bits(g.tensor("a"), a));
    CHECK(same_bits(g.tensor("b"), b));
    CHECK(same_bits(g.tensor("c"), c));
    CHECK(g.scalar("pi-ish") == 3.14159);
    CHECK(g.scalar_i64("count") == -17);
    CHECK(g.tensor("mask").at(1, 1) == 1.0);
    CHECK_THROWS_AS(g.tensor("missing"), CorruptCheckpointError);
}

TEST_CASE("s2t1 f32 entries load as exactly-representable doubles") {
    const std::string dir = temp_dir("s2t1f32");
    Tensor t({3}, {1.5, -0.25, 1024.0});
    S2t1File f;
    f.put_tensor_f32("half", t);
    f.save(dir + "/f.s2t1");
    const S2t1File g = S2t1File::load(dir + "/f.s2t1");
    CHECK(g.entry("half").dtype == 0);
    CHECK(same_bits(g.tensor("half"), t));
}

TEST_CASE("s2t1 validation names the failing field") {
    const std::string dir = temp_dir("s2t1bad");
    S2t1File f;
    f.put_scalar("x", 1.0);
    f.save(dir + "/ok.s2t1");
    std::string bytes = read_file(dir + "/ok.s2t1");

    // Bad magic.
    std::string bad = bytes;
    bad[0] = 'X';
    write_file(dir + "/bad_magic.s2t1", bad);
    CHECK_THROWS_WITH_AS(S2t1File::load(dir + "/bad_magic.s2t1"),
                         doctest::Contains("bad magic"), CorruptCheckpointError);

    // Future version.
    std::string v2 = bytes;
    v2[4] = 2;
    write_file(dir + "/v2.s2t1", v2);
    CHECK_THROWS_WITH_AS(S2t1File::load(dir + "/v2.s2t1"),
                         doctest::Contains("unsupported version 2"), CorruptCheckpointError);

    // Truncated payload: no partial result, error names the entry.
    write_file(dir + "/trunc.s2t1", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_WITH_AS(S2t1File::load(dir + "/trunc.s2t1"),
                         doctest::Contains("payload for entry 'x'"), CorruptCheckpointError);

    // Trailing garbage is rejected too.
    write_file(dir + "/trail.s2t1", bytes + "zz");
    CHECK_THROWS_AS(S2t1File::load(dir + "/trail.s2t1"), CorruptCheckpointError);
}

TEST_CASE("sample files round-trip") {
    const std::string dir = temp_dir("samples");
    const PairedSample s = gen_pair(5, 32);
    write_sample_file(dir + "/p.s2t1", s);
    const PairedSample t = read_sample_file(dir + "/p.s2t1");
    CHECK(same_bits(s.ncct.pixels, t.ncct.pixels));
    CHECK(same_bits(s.cect.pixels, t.cect.pixels));
    CHECK(same_bits(s.contrast_mask, t.contrast_mask));
    CHECK(s.seed == t.seed);
}

TEST_CASE("checkpoint round-trips preserve parameters and evaluation") {
    const std::string dir = temp_dir("ckpt");
    AeConfig acfg;
    acfg.latent_channels = 2;
    acfg.base_width = 4;
    acfg.groups = 2;
    acfg.codebook_size = 8;
    Autoencoder ae(acfg, 21);
    save_ae_checkpoint(dir + "/ae.s2t1", ae);
    Autoencoder loaded = load_ae_checkpoint(dir + "/ae.s2t1");
    auto orig = ae.named_params();
    auto back = loaded.named_params();
    REQUIRE(orig.size() == back.size());
    for (size_t i = 0; i < orig.size(); ++i)
        CHECK(same_bits(orig[i].second->value, back[i].second->value));

    const PairedSample sample = gen_pair(6, 32);
    const NormalizedImage xn = window_normalize(sample.ncct);
    const NormalizedImage xc = window_normalize(sample.cect);
    const AutoLossComponents a = auto_loss(ae, xn, xc);
    const AutoLossComponents b = auto_loss(loaded, xn, xc);
    CHECK(a.total == b.total);

    DenoiserConfig dcfg;
    dcfg.latent_channels = 2;
    dcfg.base_width = 4;
    dcfg.temb_dim = 8;
    dcfg.groups = 2;
    Denoiser den(dcfg, 22);
    const NoiseSchedule sched = make_schedule(10, 1e-3, 0.05);
    save_diff_checkpoint(dir + "/diff.s2t1", den, sched, 5, 1.25);
    const DiffCheckpoint dc = load_diff_checkpoint(dir + "/diff.s2t1");
    CHECK(dc.t_start_default == 5);
    CHECK(dc.latent_scale == 1.25);
    CHECK(dc.sched.T == 10);
    RngStream rng(7, 7);
    const Tensor z = s2ldm::test::random_tensor({2, 8, 8}, rng);
    CHECK(same_bits(den.forward(z, 3), dc.denoiser.forward(z, 3)));

    // A diff checkpoint is not an ae checkpoint.
    CHECK_THROWS_AS(load_ae_checkpoint(dir + "/diff.s2t1"), std::invalid_argument);
}

TEST_CASE("train_stage1 is deterministic and needs eight pairs") {
    const RunConfig cfg = tiny_run_config();
    const std::vector<PairedSample> pairs = tiny_dataset(8);
    AeTrainResult r1 = train_stage1(cfg, pairs);
    AeTrainResult r2 = train_stage1(cfg, pairs);
    REQUIRE(r1.losses.size() == r2.losses.size());
    for (size_t i = 0; i < r1.losses.size(); ++i) {
        CHECK(r1.losses[i].total == r2.losses[i].total);
        CHECK(r1.losses[i].rec == r2.losses[i].rec);
        CHECK(r1.losses[i].quan == r2.losses[i].quan);
        CHECK(r1.losses[i].sim == r2.losses[i].sim);
    }
    CHECK_FALSE(r1.diverged);

    CHECK_THROWS_AS(train_stage1(cfg, tiny_dataset(7)), std::invalid_argument);
}

TEST_CASE("train_stage2 freezes the ae and logs a saturating mask schedule") {
    const RunConfig cfg = tiny_run_config();
    const std::vector<PairedSample> pairs = tiny_dataset(8);
    AeTrainResult ae_r = train_stage1(cfg, pairs);

    std::vector<Tensor> before;
    for (auto& [name, p] : ae_r.ae.named_params()) before.push_back(p->value);

    DiffTrainResult d1 = train_stage2(cfg, pairs, ae_r.ae);
    DiffTrainResult d2 = train_stage2(cfg, pairs, ae_r.ae);

    // Frozen stage-1 weights: bytes identical before and after.
    size_t i = 0;
    for (auto& [name, p] : ae_r.ae.named_params()) CHECK(same_bits(before[i++], p->value));

    REQUIRE(d1.mask_mean_per_epoch.size() == 4);
    for (size_t e = 1; e < 4; ++e)
        CHECK(d1.mask_mean_per_epoch[e] >= d1.mask_mean_per_epoch[e - 1]);
    // alpha = 2: epochs with tau/T >= 1/2 saturate exactly.
    CHECK(d1.mask_mean_per_epoch[2] == 1.0);
    CHECK(d1.mask_mean_per_epoch[3] == 1.0);

    // Deterministic loss curve.
    REQUIRE(d1.loss_per_step.size() == d2.loss_per_step.size());
    for (size_t k = 0; k < d1.loss_per_step.size(); ++k)
        CHECK(d1.loss_per_step[k] == d2.loss_per_step[k]);
}

TEST_CASE("emit_pgm format and mapping") {
    const std::string dir = temp_dir("pgm");

    Tensor zeros({2, 3});
    emit_pgm(zeros, dir + "/zeros.pgm");
    const std::string z = read_file(dir + "/zeros.pgm");
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(z.size() == header.size() + 6);
    CHECK(z.substr(0, header.size()) == header);
    for (size_t i = header.size(); i < z.size(); ++i)
        CHECK(static_cast<uint8_t>(z[i]) == 128);

    Tensor ones = Tensor::full({2, 2}, 1.0);
    emit_pgm(ones, dir + "/ones.pgm");
    const std::string o = read_file(dir + "/ones.pgm");
    for (size_t i = std::string("P5\n2 2\n255\n").size(); i < o.size(); ++i)
        CHECK(static_cast<uint8_t>(o[i]) == 255);

    Tensor neg = Tensor::full({2, 2}, -1.0);
    emit_pgm(neg, dir + "/neg.pgm");
    const std::string n = read_file(dir + "/neg.pgm");
    for (size_t i = std::string("P5\n2 2\n255\n").size(); i < n.size(); ++i)
        CHECK(static_cast<uint8_t>(n[i]) == 0);

    Tensor bad = Tensor::full({2, 2}, 1.5);
    CHECK_THROWS_AS(emit_pgm(bad, dir + "/bad.pgm"), std::invalid_argument);
}

TEST_CASE("cli gen writes the dataset and manifest") {
    const std::string dir = temp_dir("cli_gen");
    const int rc = run_cli({"gen", "--n", "10", "--size", "32", "--seed", "4", "--out", dir});
    CHECK(rc == 0);
    size_t total = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".s2t1") ++total;
    CHECK(total == 10);
    CHECK(fs::exists(dir + "/manifest.json"));
    size_t train_count = 0;
    for (const auto& e : fs::directory_iterator(dir + "/train")) (void)e, ++train_count;
    CHECK(train_count == 8);
}

TEST_CASE("cli rejects unknown flags with a usage error") {
    CHECK(run_cli({"gen", "--nope", "1"}) == 1);
    CHECK(run_cli({"bogus-subcommand"}) == 1);
    CHECK(run_cli({}) == 1);
}

TEST_CASE("cli runtime failures exit with code 2") {
    CHECK(run_cli({"train-ae", "--data", "/nonexistent-dir-xyz", "--out", "/tmp/x.s2t1"}) == 2);
}

TEST_CASE("cli end-to-end on a tiny budget is byte-deterministic") {
    const std::string dir = temp_dir("cli_e2e");
    const std::string cfg_path = dir + "/cfg";
    write_file(cfg_path,
               "seed = 5\n"
               "image_size = 32\n"
               "patch_size = 32\n"
               "latent_channels = 2\n"
               "base_width = 4\n"
               "groups = 2\n"
               "stage1.steps = 10\n"
               "stage1.batch_size = 1\n"
               "stage1.codebook_size = 8\n"
               "stage2.epochs = 2\n"
               "stage2.steps_per_epoch = 3\n"
               "stage2.batch_size = 1\n"
               "stage2.T = 10\n"
               "stage2.temb_dim = 8\n"
               "sampler.t_start = 5\n");

    REQUIRE(run_cli({"gen", "--n", "10", "--size", "32", "--seed", "5", "--out", dir + "/data"}) == 0);
    REQUIRE(run_cli({"train-ae", "--data", dir + "/data/train", "--out", dir + "/ae.s2t1",
                     "--config", cfg_path, "--log", dir + "/ae_log.csv"}) == 0);
    REQUIRE(run_cli({"train-diff", "--data", dir + "/data/train", "--ae", dir + "/ae.s2t1",
                     "--out", dir + "/diff.s2t1", "--config", cfg_path}) == 0);

    // Find one validation file.
    std::string val_file;
    for (const auto& e : fs::directory_iterator(dir + "/data/val")) {
        val_file = e.path().string();
        break;
    }
    REQUIRE(!val_file.empty());

    REQUIRE(run_cli({"translate", "--in", val_file, "--ae", dir + "/ae.s2t1", "--diff",
                     dir + "/diff.s2t1", "--seed", "9", "--out", dir + "/pred1.s2t1"}) == 0);
    REQUIRE(run_cli({"translate", "--in", val_file, "--ae", dir + "/ae.s2t1", "--diff",
                     dir + "/diff.s2t1", "--seed", "9", "--out", dir + "/pred2.s2t1"}) == 0);
    CHECK(read_file(dir + "/pred1.s2t1") == read_file(dir + "/pred2.s2t1"));

    // Evaluation emits the documented JSON keys.
    REQUIRE(run_cli({"eval", "--pred", dir + "/pred1.s2t1", "--target", val_file, "--report",
                     dir + "/report.json"}) == 0);
    const std::string report = read_file(dir + "/report.json");
    for (const char* key : {"\"nmae\"", "\"nmse\"", "\"psnr_db\"", "\"psnr_exact\"", "\"ssim\"",
                            "\"n_images\""})
        CHECK(report.find(key) != std::string::npos);

    // Identity baseline through the same eval interface.
    REQUIRE(run_cli({"eval", "--pred", val_file, "--pred-entry", "ncct", "--target", val_file,
                     "--report", dir + "/identity.json"}) == 0);

    // The similarity map lands as a valid PGM.
    REQUIRE(run_cli({"simmap", "--pair", val_file, "--ae", dir + "/ae.s2t1", "--out",
                     dir + "/sim.pgm"}) == 0);
    CHECK(read_file(dir + "/sim.pgm").substr(0, 3) == "P5\n");
}

TEST_CASE("translate consumes a file holding only the ncct entry") {
    const std::string dir = temp_dir("cli_ncct_only");
    const std::string cfg_path = dir + "/cfg";
    write_file(cfg_path,
               "seed = 6\nimage_size = 32\npatch_size = 32\nlatent_channels = 2\n"
               "base_width = 4\ngroups = 2\nstage1.steps = 8\nstage1.batch_size = 1\n"
               "stage1.codebook_size = 8\nstage2.epochs = 2\nstage2.steps_per_epoch = 2\n"
               "stage2.batch_size = 1\nstage2.T = 10\nstage2.temb_dim = 8\n");
    REQUIRE(run_cli({"gen", "--n", "10", "--size", "32", "--seed", "6", "--out", dir + "/data"}) == 0);
    REQUIRE(run_cli({"train-ae", "--data", dir + "/data/train", "--out", dir + "/ae.s2t1",
                     "--config", cfg_path}) == 0);
    REQUIRE(run_cli({"train-diff", "--data", dir + "/data/train", "--ae", dir + "/ae.s2t1",
                     "--out", dir + "/diff.s2t1", "--config", cfg_path}) == 0);

    const PairedSample s = gen_pair(123, 32);
    S2t1File only_ncct;
    only_ncct.put_tensor("ncct", s.ncct.pixels);
    only_ncct.save(dir + "/ncct_only.s2t1");
    CHECK(run_cli({"translate", "--in", dir + "/ncct_only.s2t1", "--ae", dir + "/ae.s2t1",
                   "--diff", dir + "/diff.s2t1", "--seed", "1", "--out", dir + "/out.s2t1"}) == 0);
    const S2t1File out = S2t1File::load(dir + "/out.s2t1");
    CHECK(out.has("pred"));
}
