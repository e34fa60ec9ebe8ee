#pragma once
// Generation, encoding, editing and guidance. Every procedure takes a
// pluggable eps-function eps(x, sigma) so the same code runs against analytic
// oracles and trained networks.
//
// Discrete chains walk the uniform grid t_i = T i/N from i = N down to 0,
// evaluating schedule coefficients at index i+1. RNG order is a contract:
// one d-dimensional draw for the initial latent, then one per noisy step in
// step order; inpainting draws its mask noise after the step noise. Several
// tests compare outputs bitwise across procedures and rely on this order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crush/common.hpp"
#include "crush/rng.hpp"
#include "crush/schedule.hpp"

namespace crush {

using EpsFn = std::function<Vec(const Vec&, double)>;

enum class Method { Sde, Ode, Ddim, ReparamSde, Rk45 };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::Sde: return "sde";
        case Method::Ode: return "ode";
        case Method::Ddim: return "ddim";
        case Method::ReparamSde: return "reparam_sde";
        case Method::Rk45: return "rk45";
    }
    throw std::logic_error("to_string: bad Method value");
}

inline Method method_from_string(const std::string& s) {
    if (s == "sde") return Method::Sde;
    if (s == "ode") return Method::Ode;
    if (s == "ddim") return Method::Ddim;
    if (s == "reparam_sde") return Method::ReparamSde;
    if (s == "rk45") return Method::Rk45;
    throw std::invalid_argument("unknown sampler method: " + s);
}

struct SamplerConfig {
    int dim = 1;
    int steps = 400;
    Method method = Method::Sde;
    Schedule schedule;
    double rtol = 1e-5;  // rk45 only
    double atol = 1e-5;

    void check() const {
        if (dim < 1) throw std::invalid_argument("SamplerConfig: dim must be >= 1");
        if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
        if (!(rtol > 0.0) || !(atol > 0.0))
            throw std::invalid_argument("SamplerConfig: tolerances must be positive");
    }
};

struct InpaintSpec {
    std::vector<int> mask;  // 1 = keep fixed to x_fixed, 0 = free
    Vec x_fixed;

    void check(std::size_t dim) const {
        if (mask.size() != dim || x_fixed.size() != dim)
            throw std::invalid_argument("InpaintSpec: mask or reference dimension mismatch");
        for (int u : mask)
            if (u != 0 && u != 1)
                throw std::invalid_argument("InpaintSpec: mask entries must be 0 or 1");
    }
};

struct GuidanceSpec {
    std::function<Vec(const Vec&, double, int)> grad_log_prob;  // (x, sigma, label)
    std::vector<int> labels;
    Vec weights;

    void check() const {
        if (!grad_log_prob) throw std::invalid_argument("GuidanceSpec: missing gradient provider");
        if (labels.empty() || labels.size() != weights.size())
            throw std::invalid_argument("GuidanceSpec: labels and weights must align and be nonempty");
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("GuidanceSpec: weights must be >= 0");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw std::invalid_argument("GuidanceSpec: weights must sum to 1");
    }
};

namespace detail {

// sqrt((sigma_hi ratio)^2 - sigma_lo^2) with the roundoff clamp; the radicand
// is nonnegative whenever sigma/m is increasing, so anything below -1e-12 is a
// real inconsistency, not float cancellation.
inline double reparam_noise_scale(double sigma_lo, double sigma_hi, double ratio) {
    const double lifted = sigma_hi * ratio;
    double rad = lifted * lifted - sigma_lo * sigma_lo;
    if (rad < 0.0) {
        if (rad < -1e-12)
            throw std::runtime_error("reparam_sde: noise variance went negative: " +
                                     std::to_string(rad));
        rad = 0.0;
    }
    return std::sqrt(rad);
}

// One reverse step, grid index i+1 -> i. Draws step noise internally (never
// at i == 0; the last step of the stochastic chains is deterministic).
inline void discrete_step(const EpsFn& eps, const SamplerConfig& cfg, int i, Vec& x, Rng& rng) {
    const Schedule& s = cfg.schedule;
    const double dt = s.T / cfg.steps;
    const Coeffs c = coeffs(s, s.T * (i + 1) / cfg.steps);
    const Vec e = eps(x, c.sigma);
    if (e.size() != x.size()) throw std::runtime_error("eps function changed the dimension");
    switch (cfg.method) {
        case Method::Sde:
        case Method::Ode: {
            const double drift = 1.0 - c.f * dt;
            const double half = cfg.method == Method::Ode ? 0.5 : 1.0;
            const double pull = half * c.g * c.g * dt / c.sigma;
            for (std::size_t j = 0; j < x.size(); ++j) x[j] = drift * x[j] - pull * e[j];
            if (cfg.method == Method::Sde && i > 0) {
                const double amp = c.g * std::sqrt(dt);
                for (auto& v : x) v += amp * rng.gaussian();
            }
            return;
        }
        case Method::Ddim:
        case Method::ReparamSde: {
            const double t_lo = s.T * i / cfg.steps;
            const double sigma_lo = s.sigma(t_lo);
            const double ratio = s.m(t_lo) / c.m;
            double pull = sigma_lo - c.sigma * ratio;
            if (cfg.method == Method::ReparamSde) pull *= 2.0;
            for (std::size_t j = 0; j < x.size(); ++j) x[j] = ratio * x[j] + pull * e[j];
            if (cfg.method == Method::ReparamSde && i > 0) {
                const double amp = reparam_noise_scale(sigma_lo, c.sigma, ratio);
                for (auto& v : x) v += amp * rng.gaussian();
            }
            return;
        }
        case Method::Rk45:
            throw std::invalid_argument("discrete_step: rk45 is not a discrete chain");
    }
}

}  // namespace detail

// Adaptive Dormand-Prince 5(4) for the deterministic flow, in the variable
// u = x/m with du/dt = d(sigma/m)/dt * eps(x, sigma). Runs in either time
// direction; forward (t_min -> T) encodes, backward decodes.
inline Vec integrate_rk45(const EpsFn& eps, const Schedule& sched, Vec x_start, double t_start,
                          double t_end, double rtol = 1e-5, double atol = 1e-5) {
    if (!(rtol > 0.0) || !(atol > 0.0))
        throw std::invalid_argument("integrate_rk45: tolerances must be positive");
    if (t_start < sched.t_min || t_start > sched.T || t_end < sched.t_min || t_end > sched.T)
        throw std::domain_error("integrate_rk45: endpoints outside [t_min, T]");
    if (t_start == t_end) return x_start;

    static constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static constexpr double kA[7][6] = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    };
    // 5th-minus-4th order error weights; the last A row doubles as the 5th
    // order solution, so stage 7 is the FSAL derivative.
    static constexpr double kE[7] = {71.0 / 57600,      0.0,        -71.0 / 16695, 71.0 / 1920,
                                     -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

    const std::size_t d = x_start.size();
    const auto deriv = [&](double t, const Vec& u) {
        const Coeffs c = coeffs(sched, t);
        Vec x(d);
        for (std::size_t j = 0; j < d; ++j) x[j] = c.m * u[j];
        Vec e = eps(x, c.sigma);
        if (e.size() != d) throw std::runtime_error("eps function changed the dimension");
        const double slope = (c.dsigma_dt - c.f * c.sigma) / c.m;
        for (auto& v : e) v *= slope;
        return e;
    };

    const double dir = t_end > t_start ? 1.0 : -1.0;
    Vec u = std::move(x_start);
    const double m_start = sched.m(t_start);
    for (auto& v : u) v /= m_start;

    double t = t_start;
    double h = (t_end - t_start) / 100.0;
    Vec k[7];
    k[0] = deriv(t, u);
    Vec stage(d);
    while (true) {
        bool last = false;
        if ((t + h - t_end) * dir >= 0.0) {
            h = t_end - t;
            last = true;
        }
        for (int s = 1; s < 7; ++s) {
            stage = u;
            for (int q = 0; q < s; ++q) {
                const double a = kA[s][q];
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < d; ++j) stage[j] += h * a * k[q][j];
            }
            k[s] = deriv(t + kC[s] * h, stage);
        }
        // stage now holds the 5th order solution at t + h
        double err_norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double ej = 0.0;
            for (int q = 0; q < 7; ++q) ej += kE[q] * k[q][j];
            const double scale = atol + rtol * std::max(std::abs(u[j]), std::abs(stage[j]));
            const double r = std::abs(h * ej) / scale;
            // a non-finite estimate is a failed step, not a small one
            err_norm = std::max(err_norm,
                                std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
        }
        if (err_norm <= 1.0) {
            t = last ? t_end : t + h;
            std::swap(u, stage);
            k[0] = k[6];
            if (last) break;
            h *= err_norm == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(err_norm, -0.2));
        } else {
            h *= std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
            if (std::abs(h) < 1e-12)
                throw std::runtime_error("integrate_rk45: step size underflow at t = " +
                                         std::to_string(t));
        }
    }
    const double m_end = sched.m(t_end);
    for (auto& v : u) v *= m_end;
    return u;
}

// Continue a partially noised state from grid index `start` down to 0.
// Discrete methods only; noiseless methods never touch the rng, so two runs
// from the same state are bitwise identical.
inline Vec denoise_from(const EpsFn& eps, const SamplerConfig& cfg, Vec x, int start, Rng& rng) {
    cfg.check();
    if (cfg.method == Method::Rk45)
        throw std::invalid_argument("denoise_from: needs a discrete method");
    if (start < 0 || start > cfg.steps)
        throw std::invalid_argument("denoise_from: start index outside the grid");
    if (x.size() != static_cast<std::size_t>(cfg.dim))
        throw std::invalid_argument("denoise_from: state dimension mismatch");
    for (int i = start - 1; i >= 0; --i) detail::discrete_step(eps, cfg, i, x, rng);
    return x;
}

// Unconditional generation: x_N ~ N(0, sigma^2(T) I), then the configured
// method down to t = 0 (t_min for rk45).
inline Vec sample(const EpsFn& eps, const SamplerConfig& cfg, Rng& rng) {
    cfg.check();
    Vec x = rng.gaussian_vec(static_cast<std::size_t>(cfg.dim));
    const double sigma_top = cfg.schedule.sigma(cfg.schedule.T);
    for (auto& v : x) v *= sigma_top;
    if (cfg.method == Method::Rk45)
        return integrate_rk45(eps, cfg.schedule, std::move(x), cfg.schedule.T,
                              cfg.schedule.t_min, cfg.rtol, cfg.atol);
    return denoise_from(eps, cfg, std::move(x), cfg.steps, rng);
}

inline Vec encode(const EpsFn& eps, const Schedule& sched, Vec x0, double rtol = 1e-5,
                  double atol = 1e-5) {
    // x0 is treated as the state at t_min, where sigma = 1e-4 is negligible
    return integrate_rk45(eps, sched, std::move(x0), sched.t_min, sched.T, rtol, atol);
}

inline Vec decode(const EpsFn& eps, const Schedule& sched, Vec latent, double rtol = 1e-5,
                  double atol = 1e-5) {
    return integrate_rk45(eps, sched, std::move(latent), sched.T, sched.t_min, rtol, atol);
}

// Replacement-style inpainting: after every sampler step the masked
// coordinates are overwritten with a fresh draw from the kernel at the new
// time, which at i = 0 fixes them to x_fixed exactly. Mask noise is drawn per
// masked coordinate after the step noise, so an all-zeros mask consumes the
// same RNG stream as the plain sampler.
inline Vec inpaint(const EpsFn& eps, const SamplerConfig& cfg, const InpaintSpec& spec,
                   Rng& rng) {
    cfg.check();
    if (cfg.method != Method::Sde && cfg.method != Method::Ode)
        throw std::invalid_argument("inpaint: method must be sde or ode");
    spec.check(static_cast<std::size_t>(cfg.dim));
    const Schedule& s = cfg.schedule;
    Vec x = rng.gaussian_vec(static_cast<std::size_t>(cfg.dim));
    const double sigma_top = s.sigma(s.T);
    for (auto& v : x) v *= sigma_top;
    for (int i = cfg.steps - 1; i >= 0; --i) {
        detail::discrete_step(eps, cfg, i, x, rng);
        if (i == 0) {
            for (std::size_t j = 0; j < x.size(); ++j)
                if (spec.mask[j] == 1) x[j] = spec.x_fixed[j];
        } else {
            const double t_lo = s.T * i / cfg.steps;
            const double m_lo = s.m(t_lo), sigma_lo = s.sigma(t_lo);
            for (std::size_t j = 0; j < x.size(); ++j)
                if (spec.mask[j] == 1)
                    x[j] = m_lo * spec.x_fixed[j] + sigma_lo * rng.gaussian();
        }
    }
    return x;
}

// Spherical combination of latents; preserves the norm of unit Gaussians.
inline Vec slerp_latent(const Vec& eps1, const Vec& eps2, double lambda) {
    if (eps1.size() != eps2.size())
        throw std::invalid_argument("slerp_latent: dimension mismatch");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("slerp_latent: lambda must be in [0, 1]");
    const double w2 = std::sqrt(1.0 - lambda * lambda);
    Vec out(eps1.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = lambda * eps1[j] + w2 * eps2[j];
    return out;
}

// Continuous t levels snap to the discrete grid, never below index 1.
inline int snap_index(const SamplerConfig& cfg, double t_level) {
    const long idx = std::lround(cfg.steps * t_level / cfg.schedule.T);
    return static_cast<int>(std::min<long>(cfg.steps, std::max<long>(1, idx)));
}

struct InterpOptions {
    bool shared_noise = true;  // one corruption draw reused for both endpoints
    bool linear = false;       // combine with (lambda, 1-lambda) instead of spherical weights
};

// Interpolation in the partially noised space: corrupt both endpoints to the
// snapped mid level, combine, then denoise the blend to t = 0.
inline Vec t_indexed_interpolate(const EpsFn& eps, const SamplerConfig& cfg, const Vec& x1,
                                 const Vec& x2, double lambda, double t_mid, Rng& rng,
                                 const InterpOptions& opts = {}) {
    cfg.check();
    if (cfg.method != Method::Sde && cfg.method != Method::Ode)
        throw std::invalid_argument("t_indexed_interpolate: method must be sde or ode");
    const auto d = static_cast<std::size_t>(cfg.dim);
    if (x1.size() != d || x2.size() != d)
        throw std::invalid_argument("t_indexed_interpolate: endpoint dimension mismatch");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("t_indexed_interpolate: lambda must be in [0, 1]");
    if (!(t_mid > cfg.schedule.t_min && t_mid <= cfg.schedule.T))
        throw std::domain_error("t_indexed_interpolate: t_mid outside (t_min, T]");
    const int start = snap_index(cfg, t_mid);
    const double t_snap = cfg.schedule.T * start / cfg.steps;
    const double m = cfg.schedule.m(t_snap), sg = cfg.schedule.sigma(t_snap);
    const Vec z1 = rng.gaussian_vec(d);
    const Vec z2 = opts.shared_noise ? z1 : rng.gaussian_vec(d);
    const double w1 = lambda;
    const double w2 = opts.linear ? 1.0 - lambda : std::sqrt(1.0 - lambda * lambda);
    Vec x(d);
    for (std::size_t j = 0; j < d; ++j)
        x[j] = w1 * (m * x1[j] + sg * z1[j]) + w2 * (m * x2[j] + sg * z2[j]);
    return denoise_from(eps, cfg, std::move(x), start, rng);
}

// Resample the tail of the noising process: corrupt x0 to the snapped level,
// then run the stochastic chain back down. Small levels make near copies,
// level 1 forgets x0 entirely.
inline Vec variations(const EpsFn& eps, const SamplerConfig& cfg, const Vec& x0, double t_level,
                      Rng& rng) {
    cfg.check();
    if (cfg.method != Method::Sde)
        throw std::invalid_argument("variations: method must be sde");
    if (x0.size() != static_cast<std::size_t>(cfg.dim))
        throw std::invalid_argument("variations: input dimension mismatch");
    if (!(t_level > cfg.schedule.t_min && t_level <= cfg.schedule.T))
        throw std::domain_error("variations: t_level outside (t_min, T]");
    const int start = snap_index(cfg, t_level);
    const double t_snap = cfg.schedule.T * start / cfg.steps;
    const double m = cfg.schedule.m(t_snap), sg = cfg.schedule.sigma(t_snap);
    const Vec z = rng.gaussian_vec(x0.size());
    Vec x(x0.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = m * x0[j] + sg * z[j];
    return denoise_from(eps, cfg, std::move(x), start, rng);
}

// Classifier-guided eps-function: eps(x, sigma) - sigma * sum_i w_i *
// grad_x log p(y_i | x). The sigma factor converts the score-space guidance
// sum into the eps convention the samplers consume. Zero-weight classes are
// skipped entirely, so a one-hot mixture is bitwise identical to single-class
// guidance.
inline EpsFn guided_eps(EpsFn base, GuidanceSpec spec) {
    spec.check();
    return [base = std::move(base), spec = std::move(spec)](const Vec& x, double sigma) {
        Vec e = base(x, sigma);
        for (std::size_t i = 0; i < spec.labels.size(); ++i) {
            if (spec.weights[i] == 0.0) continue;
            const Vec grad = spec.grad_log_prob(x, sigma, spec.labels[i]);
            if (grad.size() != e.size())
                throw std::runtime_error("guided_eps: gradient dimension mismatch");
            for (std::size_t j = 0; j < e.size(); ++j)
                e[j] -= sigma * spec.weights[i] * grad[j];
        }
        return e;
    };
}

}  // namespace crush
