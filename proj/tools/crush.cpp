// Command-line front end. Every command reads one flat JSON config, writes
// its artifacts into --out, and finishes with a manifest.json echoing the
// fully resolved config; feeding that manifest back as --config reproduces
// the outputs bit for bit. Batch elements get independent RNG streams derived
// from the master seed by a counter scheme.
//
// Exit codes: 0 success, 1 config or usage error, 2 schedule validation
// failure, 3 non-finite values at a tensor writer.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crush/checkpoint.hpp"
#include "crush/classifier.hpp"
#include "crush/config.hpp"
#include "crush/dataset.hpp"
#include "crush/eval.hpp"
#include "crush/kernel.hpp"
#include "crush/mixture.hpp"
#include "crush/net.hpp"
#include "crush/rng.hpp"
#include "crush/samplers.hpp"
#include "crush/scorenet.hpp"
#include "crush/schedule.hpp"
#include "crush/tensor_file.hpp"

namespace fs = std::filesystem;
using namespace crush;

namespace {

std::uint64_t read_seed(ConfigView& cfg, const std::optional<std::uint64_t>& cli_seed) {
    std::uint64_t s = static_cast<std::uint64_t>(cfg.integer("seed", 0));
    if (cli_seed) s = *cli_seed;
    cfg.put("seed", s);
    return s;
}

Weighting weighting_from_name(const std::string& name) {
    if (name == "sigma2") return Weighting::Sigma2;
    if (name == "g2") return Weighting::G2;
    if (name == "unit") return Weighting::Unit;
    throw std::runtime_error("config: unknown weighting \"" + name +
                             "\" (want sigma2, g2, unit)");
}

struct Model {
    EpsFn eps;
    int dim = 0;
    std::optional<GaussianMixture> gm;  // set for oracle sources
};

// Exactly one of "mixture" (inline spec, exact score) or "checkpoint" (path
// base of a trained net, without the .crsh/.json suffix).
Model resolve_model(ConfigView& cfg, const Schedule& sched) {
    const bool has_mix = cfg.has("mixture");
    const bool has_ckpt = cfg.has("checkpoint");
    if (has_mix == has_ckpt)
        throw std::runtime_error(
            "config: give exactly one model source (\"mixture\" or \"checkpoint\")");
    Model m;
    if (has_mix) {
        m.gm = mixture_from_json(cfg.raw("mixture"));
        m.dim = static_cast<int>(m.gm->dim());
        m.eps = oracle_eps_fn(*m.gm, sched.relation);
    } else {
        FilmMlp net = load_net(cfg.str("checkpoint"));
        m.dim = net.spec().in;
        m.eps = net_eps_fn(std::move(net));
    }
    return m;
}

SamplerConfig sampler_from_config(ConfigView& cfg, const Schedule& sched, int dim,
                                  const std::string& default_method = "sde") {
    SamplerConfig sc;
    sc.dim = dim;
    sc.schedule = sched;
    sc.method = method_from_string(cfg.str("method", default_method));
    sc.steps = static_cast<int>(cfg.integer("steps", 400));
    sc.rtol = cfg.num("rtol", 1e-5);
    sc.atol = cfg.num("atol", 1e-5);
    sc.check();
    return sc;
}

std::vector<Vec> read_rows(const std::string& path, int dim) {
    const auto rows = rows_from_tensor(read_tensor(path));
    for (const auto& r : rows)
        if (r.size() != static_cast<std::size_t>(dim))
            throw std::runtime_error("input tensor width " + std::to_string(r.size()) +
                                     " does not match model dimension " + std::to_string(dim));
    return rows;
}

void write_manifest(const fs::path& out, const ConfigView& cfg, const Json& metrics) {
    const Json manifest = {{"config", cfg.resolved()}, {"metrics", metrics}};
    write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
}

Json moment_metrics(const std::vector<Vec>& rows, const std::optional<GaussianMixture>& gm) {
    Json metrics = Json::object();
    if (rows.size() < 2) return metrics;
    const Moments mo = empirical_moments(rows);
    metrics["mean"] = mo.mean;
    metrics["var"] = mo.var;
    if (gm) {
        const auto [tm, tv] = mixture_moments(*gm);
        metrics["w2_to_truth"] = w2_gaussian(mo.mean, mo.var, tm, tv);
    }
    return metrics;
}

std::string loss_csv(const std::vector<double>& curve, int log_every) {
    std::string csv = "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", (i + 1) * static_cast<std::size_t>(log_every),
                      curve[i]);
        csv += buf;
    }
    return csv;
}

int cmd_schedule(ConfigView& cfg, const fs::path& out) {
    const Schedule sched = schedule_from_config(cfg);
    const int grid = static_cast<int>(cfg.integer("grid", 256));
    cfg.done();
    const ValidationReport rep = validate(sched, grid);
    std::ostringstream csv;
    write_validation_csv(rep, csv);
    write_text_atomic(out / "schedule.csv", csv.str());
    std::printf("residual_a (mass ODE)      max %.3e  tol 1e-3\n", rep.max_res_a);
    std::printf("residual_b (variance ODE)  max %.3e  tol 1e-3\n", rep.max_res_b);
    std::printf("residual_c (g/m identity)  max %.3e  tol 1e-3\n", rep.max_res_c);
    std::printf("g two-route algebra        max %.3e  tol 1e-9\n", rep.max_res_algebraic);
    std::printf("%s\n", rep.pass ? "PASS" : "FAIL");
    write_manifest(out, cfg,
                   {{"max_residual_a", rep.max_res_a},
                    {"max_residual_b", rep.max_res_b},
                    {"max_residual_c", rep.max_res_c},
                    {"max_residual_algebraic", rep.max_res_algebraic},
                    {"pass", rep.pass}});
    return rep.pass ? 0 : 2;
}

int cmd_sample(ConfigView& cfg, const fs::path& out,
               const std::optional<std::uint64_t>& cli_seed) {
    const Schedule sched = schedule_from_config(cfg);
    const Model model = resolve_model(cfg, sched);
    const SamplerConfig sc = sampler_from_config(cfg, sched, model.dim);
    const long batch = cfg.integer("batch", 100);
    if (batch < 1) throw std::runtime_error("config: batch must be >= 1");
    const std::uint64_t seed = read_seed(cfg, cli_seed);
    cfg.done();

    std::vector<Vec> rows;
    rows.reserve(static_cast<std::size_t>(batch));
    for (long i = 0; i < batch; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        rows.push_back(sample(model.eps, sc, rng));
    }
    write_tensor(out / "samples.crsh", tensor_from_rows(rows));
    write_manifest(out, cfg, moment_metrics(rows, model.gm));
    std::printf("wrote %s (%ld x %d)\n", (out / "samples.crsh").c_str(), batch, model.dim);
    return 0;
}

int cmd_train(ConfigView& cfg, const fs::path& out, const std::optional<std::uint64_t>& cli_seed,
              bool classifier) {
    const Schedule sched = schedule_from_config(cfg);
    const std::uint64_t seed = read_seed(cfg, cli_seed);
    const std::string data_kind = cfg.str("data", "drumlet");
    const long n = cfg.integer("n", 512);
    if (n < 1) throw std::runtime_error("config: n must be >= 1");

    NetSpec arch;
    arch.hidden = static_cast<int>(cfg.integer("hidden", 128));
    arch.depth = static_cast<int>(cfg.integer("depth", 3));
    arch.sigma_hidden = static_cast<int>(cfg.integer("sigma_hidden", 64));
    arch.freqs = static_cast<int>(cfg.integer("freqs", 32));
    const int steps = static_cast<int>(cfg.integer("steps", 2000));
    const int batch = static_cast<int>(cfg.integer("batch", 32));
    const double lr = cfg.num("lr", 2e-4);
    // clamp so short runs still produce at least one loss-curve point
    int log_every = static_cast<int>(cfg.integer("log_every", 100));
    if (steps > 0 && log_every > steps) {
        log_every = steps;
        cfg.put("log_every", log_every);
    }

    std::vector<Vec> xs;
    std::vector<int> ys;
    Rng drng(derive_seed(seed, 0));
    if (data_kind == "drumlet") {
        LabeledData d = make_drumlets(static_cast<std::size_t>(n), drng);
        xs = std::move(d.x);
        ys = std::move(d.y);
    } else if (data_kind == "mixture2d") {
        const GaussianMixture gm = mixture_from_json(cfg.raw("mixture"));
        std::tie(xs, ys) = sample_labeled(gm, static_cast<std::size_t>(n), drng);
    } else {
        throw std::runtime_error("config: unknown data kind \"" + data_kind +
                                 "\" (want drumlet or mixture2d)");
    }

    const Json prov = {{"seed", static_cast<long>(seed)},
                       {"steps", steps},
                       {"data", data_kind}};
    if (classifier) {
        ClfTrainConfig tc;
        tc.arch = arch;
        tc.steps = steps;
        tc.batch = batch;
        tc.lr = lr;
        tc.log_every = log_every;
        tc.seed = derive_seed(seed, 1);
        cfg.done();
        ClfTrainResult res = train_classifier(xs, ys, sched, tc);
        Json side = prov;
        side["kind"] = "classifier";
        save_net(out / "clf", res.clf.net(), side);
        write_text_atomic(out / "loss.csv", loss_csv(res.loss_curve, log_every));
        Json metrics = {{"steps", steps}, {"classes", res.clf.num_classes()}};
        if (!res.loss_curve.empty()) {
            metrics["first_loss"] = res.loss_curve.front();
            metrics["final_loss"] = res.loss_curve.back();
        }
        write_manifest(out, cfg, metrics);
        return 0;
    }

    TrainConfig tc;
    tc.arch = arch;
    tc.steps = steps;
    tc.batch = batch;
    tc.lr = lr;
    tc.log_every = log_every;
    tc.ema_rate = cfg.num("ema", 0.999);
    tc.weighting = weighting_from_name(cfg.str("weighting", "sigma2"));
    tc.seed = derive_seed(seed, 1);
    cfg.done();
    TrainResult res = train_scorenet(xs, sched, tc);
    Json raw_side = prov;
    raw_side["kind"] = "scorenet";
    raw_side["ema"] = false;
    save_net(out / "ckpt_raw", res.net, raw_side);
    Json ema_side = raw_side;
    ema_side["ema"] = true;
    save_net(out / "ckpt_ema", res.ema_net(), ema_side);
    write_text_atomic(out / "loss.csv", loss_csv(res.loss_curve, log_every));
    Json metrics = {{"steps", steps}};
    if (!res.loss_curve.empty()) {
        metrics["first_loss"] = res.loss_curve.front();
        metrics["final_loss"] = res.loss_curve.back();
    }
    write_manifest(out, cfg, metrics);
    return 0;
}

int cmd_encode(ConfigView& cfg, const fs::path& out) {
    const Schedule sched = schedule_from_config(cfg);
    const Model model = resolve_model(cfg, sched);
    const std::string input = cfg.str("input");
    const double rtol = cfg.num("rtol", 1e-5);
    const double atol = cfg.num("atol", 1e-5);
    cfg.done();

    const auto rows = read_rows(input, model.dim);
    std::vector<Vec> latents, recons;
    double worst = 0.0;
    for (const auto& row : rows) {
        Vec lat = encode(model.eps, sched, row, rtol, atol);
        Vec rec = decode(model.eps, sched, lat, rtol, atol);
        worst = std::max(worst, rel_l2(rec, row));
        latents.push_back(std::move(lat));
        recons.push_back(std::move(rec));
    }
    write_tensor(out / "latent.crsh", tensor_from_rows(latents));
    write_tensor(out / "recon.crsh", tensor_from_rows(recons));
    write_manifest(out, cfg, {{"round_trip_error", worst}});
    std::printf("round_trip_error %.3e over %zu rows\n", worst, rows.size());
    return 0;
}

int cmd_inpaint(ConfigView& cfg, const fs::path& out,
                const std::optional<std::uint64_t>& cli_seed) {
    const Schedule sched = schedule_from_config(cfg);
    const Model model = resolve_model(cfg, sched);
    const SamplerConfig sc = sampler_from_config(cfg, sched, model.dim);
    const std::string input = cfg.str("input");
    const std::string mask_path = cfg.str("mask");
    const std::uint64_t seed = read_seed(cfg, cli_seed);
    cfg.done();

    const auto rows = read_rows(input, model.dim);
    const Tensor mask_t = read_tensor(mask_path);
    const bool per_row = mask_t.dims.size() == 2;
    if (per_row) {
        if (mask_t.dims[0] != rows.size() || mask_t.dims[1] != static_cast<std::uint32_t>(model.dim))
            throw std::runtime_error("mask shape does not match the input tensor");
    } else if (mask_t.dims.size() != 1 || mask_t.dims[0] != static_cast<std::uint32_t>(model.dim)) {
        throw std::runtime_error("mask must be [dim] or [rows, dim]");
    }
    const auto mask_row = [&](std::size_t i) {
        std::vector<int> m(static_cast<std::size_t>(model.dim));
        for (std::size_t j = 0; j < m.size(); ++j) {
            const float v = mask_t.data[(per_row ? i * m.size() : 0) + j];
            if (v != 0.0f && v != 1.0f)
                throw std::runtime_error("mask entries must be exactly 0 or 1");
            m[j] = v == 1.0f ? 1 : 0;
        }
        return m;
    };

    std::vector<Vec> outputs;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        InpaintSpec spec{mask_row(i), rows[i]};
        Rng rng(derive_seed(seed, i));
        outputs.push_back(inpaint(model.eps, sc, spec, rng));
    }
    write_tensor(out / "inpainted.crsh", tensor_from_rows(outputs));
    write_manifest(out, cfg, Json::object());
    return 0;
}

int cmd_interp(ConfigView& cfg, const fs::path& out,
               const std::optional<std::uint64_t>& cli_seed) {
    const Schedule sched = schedule_from_config(cfg);
    const Model model = resolve_model(cfg, sched);
    const SamplerConfig sc = sampler_from_config(cfg, sched, model.dim);
    const std::string input = cfg.str("input");
    const Vec lambdas = cfg.nums("lambdas", {0.0, 0.25, 0.5, 0.75, 1.0});
    const double level = cfg.num("level", 0.8);
    InterpOptions opts;
    opts.shared_noise = cfg.flag("shared_noise", true);
    opts.linear = cfg.flag("linear", false);
    const std::uint64_t seed = read_seed(cfg, cli_seed);
    cfg.done();

    const auto rows = read_rows(input, model.dim);
    if (rows.size() != 2)
        throw std::runtime_error("interp input must hold exactly 2 rows, got " +
                                 std::to_string(rows.size()));
    std::vector<Vec> outputs;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        outputs.push_back(
            t_indexed_interpolate(model.eps, sc, rows[0], rows[1], lambdas[i], level, rng, opts));
    }
    write_tensor(out / "interp.crsh", tensor_from_rows(outputs));
    write_manifest(out, cfg, {{"lambdas", lambdas}});
    return 0;
}

int cmd_variations(ConfigView& cfg, const fs::path& out,
                   const std::optional<std::uint64_t>& cli_seed) {
    const Schedule sched = schedule_from_config(cfg);
    const Model model = resolve_model(cfg, sched);
    const SamplerConfig sc = sampler_from_config(cfg, sched, model.dim);
    const std::string input = cfg.str("input");
    const double level = cfg.num("level", 0.5);
    const long count = cfg.integer("count", 4);
    if (count < 1) throw std::runtime_error("config: count must be >= 1");
    const std::uint64_t seed = read_seed(cfg, cli_seed);
    cfg.done();

    const auto rows = read_rows(input, model.dim);
    std::vector<Vec> outputs;  // input-major: count variations per row
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (long j = 0; j < count; ++j) {
            Rng rng(derive_seed(seed, r * static_cast<std::size_t>(count) +
                                          static_cast<std::size_t>(j)));
            outputs.push_back(variations(model.eps, sc, rows[r], level, rng));
        }
    write_tensor(out / "variations.crsh", tensor_from_rows(outputs));
    write_manifest(out, cfg, {{"count", count}, {"inputs", rows.size()}});
    return 0;
}

int cmd_guide(ConfigView& cfg, const fs::path& out,
              const std::optional<std::uint64_t>& cli_seed) {
    const Schedule sched = schedule_from_config(cfg);
    const Model model = resolve_model(cfg, sched);
    const SamplerConfig sc = sampler_from_config(cfg, sched, model.dim);
    GuidanceSpec gspec;
    gspec.labels = cfg.ints("labels");
    gspec.weights = cfg.nums("weights");
    int num_classes = 0;
    if (cfg.has("clf_checkpoint")) {
        TrainedClassifier clf(load_net(cfg.str("clf_checkpoint")));
        num_classes = clf.num_classes();
        gspec.grad_log_prob = clf_grad_fn(std::move(clf));
    } else if (model.gm) {
        num_classes = model.gm->num_classes();
        gspec.grad_log_prob = oracle_grad_fn(*model.gm, sched.relation);
    } else {
        throw std::runtime_error(
            "config: guidance needs \"clf_checkpoint\" or a \"mixture\" model source");
    }
    for (int label : gspec.labels)
        if (label < 0 || label >= num_classes)
            throw std::runtime_error("config: unknown class label " + std::to_string(label));
    gspec.check();
    const long batch = cfg.integer("batch", 100);
    if (batch < 1) throw std::runtime_error("config: batch must be >= 1");
    const std::uint64_t seed = read_seed(cfg, cli_seed);
    cfg.done();

    const EpsFn guided = guided_eps(model.eps, gspec);
    std::vector<Vec> rows;
    for (long i = 0; i < batch; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        rows.push_back(sample(guided, sc, rng));
    }
    write_tensor(out / "samples.crsh", tensor_from_rows(rows));
    write_manifest(out, cfg, moment_metrics(rows, std::nullopt));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continuous-time diffusion sampler toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed_val = 0;
    CLI::Option* seed_opt = nullptr;

    const auto add = [&](const std::string& name, const std::string& desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        CLI::Option* s = sub->add_option("--seed", seed_val, "override the config seed");
        return std::pair{sub, s};
    };

    auto [sub_schedule, s0] = add("schedule", "validate a schedule, write its coefficient CSV");
    auto [sub_sample, s1] = add("sample", "draw unconditional samples");
    auto [sub_train, s2] = add("train", "fit a noise-prediction net, write checkpoints");
    auto [sub_train_clf, s3] = add("train-clf", "fit a noise-conditional classifier");
    auto [sub_encode, s4] = add("encode", "run data to latents and back, report round trip");
    auto [sub_inpaint, s5] = add("inpaint", "resample unmasked coordinates");
    auto [sub_interp, s6] = add("interp", "latent-blend two inputs across lambdas");
    auto [sub_variations, s7] = add("variations", "perturb-and-denoise variations of inputs");
    auto [sub_guide, s8] = add("guide", "classifier-guided sampling with label mixing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const auto picked = [&]() -> std::pair<CLI::App*, CLI::Option*> {
        if (sub_schedule->parsed()) return {sub_schedule, s0};
        if (sub_sample->parsed()) return {sub_sample, s1};
        if (sub_train->parsed()) return {sub_train, s2};
        if (sub_train_clf->parsed()) return {sub_train_clf, s3};
        if (sub_encode->parsed()) return {sub_encode, s4};
        if (sub_inpaint->parsed()) return {sub_inpaint, s5};
        if (sub_interp->parsed()) return {sub_interp, s6};
        if (sub_variations->parsed()) return {sub_variations, s7};
        return {sub_guide, s8};
    }();
    seed_opt = picked.second;
    const std::optional<std::uint64_t> cli_seed =
        seed_opt->count() > 0 ? std::optional<std::uint64_t>(seed_val) : std::nullopt;

    try {
        fs::create_directories(out_dir);
        ConfigView cfg(load_json(config_path));
        const fs::path out(out_dir);
        if (picked.first == sub_schedule) return cmd_schedule(cfg, out);
        if (picked.first == sub_sample) return cmd_sample(cfg, out, cli_seed);
        if (picked.first == sub_train) return cmd_train(cfg, out, cli_seed, false);
        if (picked.first == sub_train_clf) return cmd_train(cfg, out, cli_seed, true);
        if (picked.first == sub_encode) return cmd_encode(cfg, out);
        if (picked.first == sub_inpaint) return cmd_inpaint(cfg, out, cli_seed);
        if (picked.first == sub_interp) return cmd_interp(cfg, out, cli_seed);
        if (picked.first == sub_variations) return cmd_variations(cfg, out, cli_seed);
        return cmd_guide(cfg, out, cli_seed);
    } catch (const NonFiniteError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
