// End-to-end checks of the command-line tool: exit codes, bitwise
// reproducibility, manifest feedback, and the tensor-file error paths. Each
// test shells out to the real binary in its own scratch directory.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "crush/checkpoint.hpp"
#include "crush/config.hpp"
#include "crush/net.hpp"
#include "crush/rng.hpp"
#include "crush/tensor_file.hpp"

namespace crush {
namespace {

namespace fs = std::filesystem;

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "crush_cli_test" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path so = dir / "stdout.txt", se = dir / "stderr.txt";
    const std::string cmd = std::string(CRUSH_CLI_PATH) + " " + args + " >" + so.string() +
                            " 2>" + se.string();
    const int st = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

void put_json(const fs::path& p, const Json& j) { write_text_atomic(p, j.dump(2) + "\n"); }

Json two_cluster() {
    return Json::array(
        {{{"weight", 0.5}, {"mean", {1.5, 1.5}}, {"var", {0.25, 0.25}}, {"label", 0}},
         {{"weight", 0.5}, {"mean", {-1.5, -1.5}}, {"var", {0.25, 0.25}}, {"label", 1}}});
}

TEST(ScheduleCmd, PassesForVpCosAndWritesCsv) {
    const fs::path d = scratch("sched_vp");
    put_json(d / "cfg.json", {{"curve", "cos"}, {"relation", "vp"}});
    const RunResult r =
        run_cli("schedule --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
    const std::string csv = slurp(d / "run" / "schedule.csv");
    EXPECT_EQ(csv.rfind("t,sigma,m,f,beta,g,snr,residual_a,residual_b,residual_c\n", 0), 0u);
    const Json manifest = Json::parse(slurp(d / "run" / "manifest.json"));
    EXPECT_TRUE(manifest.at("metrics").at("pass").get<bool>());
}

TEST(ScheduleCmd, VeHasIdenticallyZeroBetaColumn) {
    const fs::path d = scratch("sched_ve");
    put_json(d / "cfg.json", {{"relation", "ve"}});
    const RunResult r =
        run_cli("schedule --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    EXPECT_EQ(r.code, 0) << r.err;
    std::ifstream csv(d / "run" / "schedule.csv");
    std::string line;
    std::getline(csv, line);  // header
    int rows = 0;
    while (std::getline(csv, line)) {
        // beta is the 5th comma-separated field
        std::size_t pos = 0;
        for (int k = 0; k < 4; ++k) pos = line.find(',', pos) + 1;
        EXPECT_EQ(line.substr(pos, line.find(',', pos) - pos), "0");
        ++rows;
    }
    EXPECT_EQ(rows, 256);
}

TEST(ScheduleCmd, MalformedRelationNameExitsOneAndNamesTheKey) {
    const fs::path d = scratch("sched_bad");
    put_json(d / "cfg.json", {{"relation", "subvp2"}});
    const RunResult r =
        run_cli("schedule --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("subvp2"), std::string::npos);
    EXPECT_NE(r.err.find("relation"), std::string::npos);
}

TEST(ConfigErrors, UnknownKeyExitsOne) {
    const fs::path d = scratch("cfg_typo");
    put_json(d / "cfg.json", {{"relation", "vp"}, {"grd", 256}});
    const RunResult r =
        run_cli("schedule --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("grd"), std::string::npos);
}

TEST(SampleCmd, BitwiseReproducibleAndManifestFeedsBack) {
    const fs::path d = scratch("sample_repro");
    put_json(d / "cfg.json", {{"mixture", two_cluster()},
                              {"method", "ddim"},
                              {"steps", 50},
                              {"batch", 20},
                              {"seed", 7}});
    const std::string base = "sample --config " + (d / "cfg.json").string() + " --out ";
    ASSERT_EQ(run_cli(base + (d / "a").string(), d).code, 0);
    ASSERT_EQ(run_cli(base + (d / "b").string(), d).code, 0);
    EXPECT_EQ(slurp(d / "a" / "samples.crsh"), slurp(d / "b" / "samples.crsh"));

    // the echoed manifest is itself a valid config for the same run
    const std::string fed = "sample --config " + (d / "a" / "manifest.json").string() + " --out " +
                            (d / "c").string();
    ASSERT_EQ(run_cli(fed, d).code, 0);
    EXPECT_EQ(slurp(d / "a" / "samples.crsh"), slurp(d / "c" / "samples.crsh"));

    // a different seed changes the payload
    ASSERT_EQ(run_cli(base + (d / "e").string() + " --seed 8", d).code, 0);
    EXPECT_NE(slurp(d / "a" / "samples.crsh"), slurp(d / "e" / "samples.crsh"));
    const Json manifest = Json::parse(slurp(d / "e" / "manifest.json"));
    EXPECT_EQ(manifest.at("config").at("seed").get<int>(), 8);
    EXPECT_TRUE(manifest.at("metrics").contains("w2_to_truth"));
}

TEST(TrainCmd, ZeroStepsCheckpointEqualsInitialization) {
    const fs::path d = scratch("train_zero");
    put_json(d / "cfg.json", {{"data", "mixture2d"},
                              {"mixture", two_cluster()},
                              {"n", 16},
                              {"steps", 0},
                              {"hidden", 8},
                              {"depth", 2},
                              {"sigma_hidden", 8},
                              {"freqs", 4},
                              {"seed", 11}});
    const RunResult r =
        run_cli("train --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(d / "run" / "ckpt_raw.crsh"), slurp(d / "run" / "ckpt_ema.crsh"));
    EXPECT_EQ(slurp(d / "run" / "loss.csv"), "step,loss\n");

    // the raw checkpoint must hold the float32 image of a fresh net seeded the
    // same way the trainer seeds its init
    const FilmMlp loaded = load_net(d / "run" / "ckpt_raw");
    NetSpec spec = loaded.spec();
    Rng init_rng(derive_seed(11, 1));
    const FilmMlp fresh(spec, init_rng);
    ASSERT_EQ(loaded.params().size(), fresh.params().size());
    for (std::size_t i = 0; i < fresh.params().size(); ++i)
        EXPECT_EQ(loaded.params()[i], static_cast<double>(static_cast<float>(fresh.params()[i])));
}

TEST(TrainCmd, ShortRunWritesPositiveNonWorseningLossAndSamplesLoad) {
    const fs::path d = scratch("train_short");
    put_json(d / "cfg.json", {{"data", "drumlet"},
                              {"n", 48},
                              {"steps", 120},
                              {"batch", 8},
                              {"hidden", 16},
                              {"depth", 2},
                              {"sigma_hidden", 8},
                              {"freqs", 4},
                              {"log_every", 40},
                              {"seed", 3}});
    const RunResult r =
        run_cli("train --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json manifest = Json::parse(slurp(d / "run" / "manifest.json"));
    const double first = manifest.at("metrics").at("first_loss").get<double>();
    const double final_loss = manifest.at("metrics").at("final_loss").get<double>();
    EXPECT_GT(first, 0.0);
    EXPECT_GT(final_loss, 0.0);
    EXPECT_LE(final_loss, first);

    // reproducible checkpoints
    const RunResult r2 =
        run_cli("train --config " + (d / "cfg.json").string() + " --out " + (d / "run2").string(), d);
    ASSERT_EQ(r2.code, 0);
    EXPECT_EQ(slurp(d / "run" / "ckpt_ema.crsh"), slurp(d / "run2" / "ckpt_ema.crsh"));

    // the checkpoint drives the sampler
    put_json(d / "samp.json", {{"checkpoint", (d / "run" / "ckpt_ema").string()},
                               {"method", "ddim"},
                               {"steps", 25},
                               {"batch", 3},
                               {"seed", 1}});
    const RunResult rs =
        run_cli("sample --config " + (d / "samp.json").string() + " --out " + (d / "samp").string(), d);
    ASSERT_EQ(rs.code, 0) << rs.err;
    const Tensor t = read_tensor(d / "samp" / "samples.crsh");
    EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{3, 64}));
}

TEST(TrainClfCmd, WritesClassifierCheckpointWithClassCount) {
    const fs::path d = scratch("train_clf");
    put_json(d / "cfg.json", {{"data", "mixture2d"},
                              {"mixture", two_cluster()},
                              {"n", 32},
                              {"steps", 60},
                              {"batch", 8},
                              {"hidden", 8},
                              {"depth", 1},
                              {"sigma_hidden", 8},
                              {"freqs", 4},
                              {"seed", 2}});
    const RunResult r = run_cli(
        "train-clf --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    ASSERT_EQ(r.code, 0) << r.err;
    const FilmMlp net = load_net(d / "run" / "clf");
    EXPECT_EQ(net.spec().out, 2);
    EXPECT_EQ(net.spec().in, 2);
    const Json manifest = Json::parse(slurp(d / "run" / "manifest.json"));
    EXPECT_EQ(manifest.at("metrics").at("classes").get<int>(), 2);
}

TEST(EncodeCmd, OracleRoundTripErrorIsTiny) {
    const fs::path d = scratch("encode");
    write_tensor(d / "input.crsh",
                 tensor_from_rows({{1.4, 1.6}, {-1.5, -1.3}}));
    put_json(d / "cfg.json",
             {{"mixture", two_cluster()}, {"input", (d / "input.crsh").string()}});
    const RunResult r =
        run_cli("encode --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json manifest = Json::parse(slurp(d / "run" / "manifest.json"));
    EXPECT_LE(manifest.at("metrics").at("round_trip_error").get<double>(), 1e-3);
    const Tensor lat = read_tensor(d / "run" / "latent.crsh");
    EXPECT_EQ(lat.dims, (std::vector<std::uint32_t>{2, 2}));
}

TEST(InpaintCmd, AllOnesMaskEchoesInputAndBadMaskExitsOne) {
    const fs::path d = scratch("inpaint");
    const Tensor input = tensor_from_rows({{1.4, 1.6}, {-1.5, -1.3}});
    write_tensor(d / "input.crsh", input);
    Tensor ones;
    ones.dims = {2};
    ones.data = {1.0f, 1.0f};
    write_tensor(d / "mask.crsh", ones);
    put_json(d / "cfg.json", {{"mixture", two_cluster()},
                              {"input", (d / "input.crsh").string()},
                              {"mask", (d / "mask.crsh").string()},
                              {"steps", 40},
                              {"seed", 5}});
    const RunResult r =
        run_cli("inpaint --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    ASSERT_EQ(r.code, 0) << r.err;
    const Tensor got = read_tensor(d / "run" / "inpainted.crsh");
    EXPECT_EQ(got.data, input.data);  // every coordinate pinned

    Tensor wide;
    wide.dims = {3};
    wide.data = {1.0f, 1.0f, 1.0f};
    write_tensor(d / "mask3.crsh", wide);
    Json bad = Json::parse(slurp(d / "cfg.json"));
    bad["mask"] = (d / "mask3.crsh").string();
    put_json(d / "bad.json", bad);
    const RunResult rb =
        run_cli("inpaint --config " + (d / "bad.json").string() + " --out " + (d / "runb").string(), d);
    EXPECT_EQ(rb.code, 1);
    EXPECT_NE(rb.err.find("mask"), std::string::npos);
}

TEST(InpaintCmd, NaNInputHitsWriterGuardWithExitThree) {
    const fs::path d = scratch("inpaint_nan");
    // craft a tensor file with a NaN payload by hand; our writer refuses to
    std::string bytes = "CRSH";
    bytes.push_back(1);
    bytes.push_back(0);
    bytes.push_back(2);
    bytes.push_back(0);
    const auto put_u32 = [&](std::uint32_t v) {
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    };
    put_u32(1);
    put_u32(2);
    put_u32(0x7fc00000u);  // quiet NaN
    put_u32(0x3f800000u);  // 1.0f
    write_text_atomic(d / "nan.crsh", bytes);
    Tensor ones;
    ones.dims = {2};
    ones.data = {1.0f, 1.0f};
    write_tensor(d / "mask.crsh", ones);
    put_json(d / "cfg.json", {{"mixture", two_cluster()},
                              {"input", (d / "nan.crsh").string()},
                              {"mask", (d / "mask.crsh").string()},
                              {"steps", 10},
                              {"seed", 5}});
    const RunResult r =
        run_cli("inpaint --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("non-finite"), std::string::npos);
}

TEST(InterpCmd, OneRowPerLambdaAndTwoRowInputEnforced) {
    const fs::path d = scratch("interp");
    write_tensor(d / "pair.crsh", tensor_from_rows({{1.4, 1.6}, {-1.5, -1.3}}));
    put_json(d / "cfg.json", {{"mixture", two_cluster()},
                              {"input", (d / "pair.crsh").string()},
                              {"lambdas", {0.0, 0.5, 1.0}},
                              {"level", 0.5},
                              {"steps", 40},
                              {"seed", 5}});
    const RunResult r =
        run_cli("interp --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_tensor(d / "run" / "interp.crsh").dims,
              (std::vector<std::uint32_t>{3, 2}));

    write_tensor(d / "triple.crsh", tensor_from_rows({{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}}));
    Json bad = Json::parse(slurp(d / "cfg.json"));
    bad["input"] = (d / "triple.crsh").string();
    put_json(d / "bad.json", bad);
    EXPECT_EQ(run_cli("interp --config " + (d / "bad.json").string() + " --out " +
                          (d / "runb").string(),
                      d)
                  .code,
              1);
}

TEST(VariationsCmd, CountPerInputRow) {
    const fs::path d = scratch("variations");
    write_tensor(d / "input.crsh", tensor_from_rows({{1.4, 1.6}, {-1.5, -1.3}}));
    put_json(d / "cfg.json", {{"mixture", two_cluster()},
                              {"input", (d / "input.crsh").string()},
                              {"level", 0.3},
                              {"count", 3},
                              {"steps", 40},
                              {"seed", 5}});
    const RunResult r = run_cli(
        "variations --config " + (d / "cfg.json").string() + " --out " + (d / "run").string(), d);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_tensor(d / "run" / "variations.crsh").dims,
              (std::vector<std::uint32_t>{6, 2}));
}

TEST(GuideCmd, OneHotWeightsMatchSingleClassBitwise) {
    const fs::path d = scratch("guide");
    Json cfg = {{"mixture", two_cluster()}, {"labels", {0, 1}},   {"weights", {1.0, 0.0}},
                {"steps", 40},              {"batch", 6},          {"seed", 9}};
    put_json(d / "two.json", cfg);
    cfg["labels"] = {0};
    cfg["weights"] = {1.0};
    put_json(d / "one.json", cfg);
    ASSERT_EQ(
        run_cli("guide --config " + (d / "two.json").string() + " --out " + (d / "a").string(), d)
            .code,
        0);
    ASSERT_EQ(
        run_cli("guide --config " + (d / "one.json").string() + " --out " + (d / "b").string(), d)
            .code,
        0);
    EXPECT_EQ(slurp(d / "a" / "samples.crsh"), slurp(d / "b" / "samples.crsh"));

    Json bad = Json::parse(slurp(d / "two.json"));
    bad["labels"] = {0, 9};
    put_json(d / "bad.json", bad);
    const RunResult rb =
        run_cli("guide --config " + (d / "bad.json").string() + " --out " + (d / "c").string(), d);
    EXPECT_EQ(rb.code, 1);
    EXPECT_NE(rb.err.find("label"), std::string::npos);
}

}  // namespace
}  // namespace crush
