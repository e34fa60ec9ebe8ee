#pragma once
// Noise schedules for continuous-time diffusion on t in [0, T], T = 1.
//
// A schedule couples a sigma curve (noise level over time) with an m-sigma
// relation (signal attenuation at a given noise level):
//
//     x_t = m(t) x_0 + sigma(t) eps,      m = (1 - sigma^gamma)^eta
//
// and yields the coefficients of the matching linear SDE
//
//     dx = f(t) x dt + g(t) dw
//
// in closed form from (sigma, sigma', m):
//
//     beta = 2 eta gamma sigma' sigma^(gamma-1) / (1 - sigma^gamma)
//     f    = -beta / 2
//     g    = sqrt(2 sigma' sigma (gamma eta sigma^gamma / (1 - sigma^gamma) + 1))
//
// VE is the special case m == 1, f == 0, beta == 0, g = sqrt(2 sigma sigma').

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace crush {

enum class CurveKind { Cos, Exp };
enum class RelationKind { VP, SubVP, SubVP11, SubVP12, VE, Custom };

struct SigmaCurve {
    CurveKind kind = CurveKind::Cos;
    double s = 0.006;  // cos edge offset; keeps sigma(1) < 1
    double a = 0.1;    // exp linear coefficient
    double b = 9.95;   // exp quadratic coefficient

    void check() const {
        if (kind == CurveKind::Cos) {
            if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("SigmaCurve: cos offset s must be in (0,1)");
        } else {
            if (!(a > 0.0) || !(b >= 0.0)) throw std::invalid_argument("SigmaCurve: exp curve needs a > 0, b >= 0");
        }
    }

    double value(double t) const {
        if (kind == CurveKind::Cos) return 0.5 * (1.0 - std::cos((1.0 - s) * M_PI * t));
        const double e = std::exp(-a * t - b * t * t);
        return std::sqrt(std::max(0.0, 1.0 - e));
    }

    // d sigma / dt. For the exp curve this diverges at t = 0 (sigma ~ sqrt(a t)).
    double deriv(double t) const {
        if (kind == CurveKind::Cos) {
            const double w = (1.0 - s) * M_PI;
            return 0.5 * w * std::sin(w * t);
        }
        const double sg = value(t);
        if (sg == 0.0) return std::numeric_limits<double>::infinity();
        return sigma_sq_deriv(t) / (2.0 * sg);
    }

    // d sigma^2 / dt; finite on all of [0, 1] for both curves.
    double sigma_sq_deriv(double t) const {
        if (kind == CurveKind::Cos) return 2.0 * value(t) * deriv(t);
        return (a + 2.0 * b * t) * std::exp(-a * t - b * t * t);
    }
};

struct Relation {
    RelationKind kind = RelationKind::VP;
    double gamma = 2.0;
    double eta = 0.5;

    static Relation vp() { return {RelationKind::VP, 2.0, 0.5}; }
    static Relation sub_vp() { return {RelationKind::SubVP, 1.0, 0.5}; }
    static Relation sub_vp11() { return {RelationKind::SubVP11, 1.0, 1.0}; }
    static Relation sub_vp12() { return {RelationKind::SubVP12, 1.0, 2.0}; }
    static Relation ve() { return {RelationKind::VE, 0.0, 0.0}; }
    static Relation custom(double gamma, double eta) { return {RelationKind::Custom, gamma, eta}; }

    bool is_ve() const { return kind == RelationKind::VE; }

    void check() const {
        if (is_ve()) return;
        if (!(gamma > 0.0) || !(eta > 0.0)) throw std::invalid_argument("Relation: gamma and eta must be positive");
    }

    double m_of(double sigma) const {
        if (is_ve()) return 1.0;
        const double sp = std::pow(sigma, gamma);
        if (sp >= 1.0) throw std::domain_error("Relation: sigma^gamma >= 1, relation is singular");
        return std::pow(1.0 - sp, eta);
    }
};

// All coefficients at one time point. snr is +inf at sigma == 0.
struct Coeffs {
    double t = 0.0;
    double sigma = 0.0;
    double dsigma_dt = 0.0;
    double m = 1.0;
    double f = 0.0;
    double beta = 0.0;
    double g = 0.0;
    double snr = std::numeric_limits<double>::infinity();
};

namespace detail {

inline Coeffs coeffs_impl(const Relation& rel, double t, double sigma, double dsigma_dt, double sigma_sq_deriv) {
    Coeffs c;
    c.t = t;
    c.sigma = sigma;
    c.dsigma_dt = dsigma_dt;
    if (rel.is_ve()) {
        c.m = 1.0;
        c.f = 0.0;
        c.beta = 0.0;
        c.g = std::sqrt(std::max(0.0, sigma_sq_deriv));
        c.snr = sigma == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / (sigma * sigma);
        return c;
    }
    const double gamma = rel.gamma, eta = rel.eta;
    if (sigma == 0.0) {
        // Boundary limits. sigma*sigma' -> sigma_sq_deriv/2, which is finite for
        // both curves even where sigma' itself diverges.
        c.m = 1.0;
        c.snr = std::numeric_limits<double>::infinity();
        if (gamma == 2.0) c.beta = 2.0 * eta * sigma_sq_deriv;
        else if (gamma == 1.0) c.beta = 2.0 * eta * dsigma_dt;  // 0 or +inf
        else c.beta = sigma_sq_deriv == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        c.f = -0.5 * c.beta;
        c.g = std::sqrt(std::max(0.0, sigma_sq_deriv));
        return c;
    }
    const double sp = std::pow(sigma, gamma);
    if (sp >= 1.0) throw std::domain_error("coeffs: sigma^gamma >= 1, relation is singular");
    const double one_m = 1.0 - sp;
    c.m = std::pow(one_m, eta);
    c.beta = 2.0 * eta * gamma * dsigma_dt * std::pow(sigma, gamma - 1.0) / one_m;
    c.f = -0.5 * c.beta;
    c.g = std::sqrt(std::max(0.0, sigma_sq_deriv * (gamma * eta * sp / one_m + 1.0)));
    c.snr = (c.m / sigma) * (c.m / sigma);
    return c;
}

}  // namespace detail

struct Schedule {
    SigmaCurve curve;
    Relation relation;
    double T = 1.0;
    double t_min = 0.0;  // solved so that sigma(t_min) == kSigmaMin

    double sigma(double t) const { return curve.value(t); }
    double m(double t) const { return relation.m_of(curve.value(t)); }
};

inline constexpr double kSigmaMin = 1e-4;

// Bisection on the (strictly increasing) sigma curve. target must lie in [0, sigma(T)].
inline double solve_time_for_sigma(const Schedule& sched, double target) {
    const double hi_sigma = sched.curve.value(sched.T);
    if (!(target >= 0.0) || target > hi_sigma)
        throw std::domain_error("solve_time_for_sigma: target outside [0, sigma(T)]");
    if (target == 0.0) return 0.0;
    double lo = 0.0, hi = sched.T;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sched.curve.value(mid) < target) lo = mid;
        else hi = mid;
        if (hi - lo < 1e-16) break;
    }
    return 0.5 * (lo + hi);
}

inline Schedule make_schedule(const SigmaCurve& curve, const Relation& relation) {
    curve.check();
    relation.check();
    Schedule sched{curve, relation, 1.0, 0.0};
    if (!(curve.value(1.0) < 1.0)) throw std::invalid_argument("make_schedule: sigma(T) must be < 1");
    sched.t_min = solve_time_for_sigma(sched, kSigmaMin);
    if (std::abs(curve.value(sched.t_min) - kSigmaMin) > 1e-10)
        throw std::runtime_error("make_schedule: t_min bisection failed to converge");
    return sched;
}

inline Coeffs coeffs(const Schedule& sched, double t) {
    if (!(t >= 0.0 && t <= sched.T)) throw std::domain_error("coeffs: t outside [0, T]");
    return detail::coeffs_impl(sched.relation, t, sched.curve.value(t), sched.curve.deriv(t),
                               sched.curve.sigma_sq_deriv(t));
}

// Coefficients at a raw (sigma, sigma') point with no curve attached; used by
// synthetic checks (e.g. affine log-SNR schedules) and unit tests.
inline Coeffs coeffs_from_sigma(const Relation& rel, double sigma, double dsigma_dt) {
    return detail::coeffs_impl(rel, std::numeric_limits<double>::quiet_NaN(), sigma, dsigma_dt,
                               2.0 * sigma * dsigma_dt);
}

struct ValidationRow {
    double t, sigma, m, f, beta, g, snr;
    double res_a, res_b, res_c;
};

struct ValidationReport {
    std::vector<ValidationRow> rows;
    double max_res_a = 0.0;        // |d m/dt - f m|, absolute
    double max_res_b = 0.0;        // |d sigma^2/dt - (2 f sigma^2 + g^2)|, absolute
    double max_res_c = 0.0;        // |g/m - sqrt(d/dt (sigma^2/m^2))| / max(1, g/m)
    double max_res_algebraic = 0.0;  // two closed forms of g, absolute
    bool pass = false;
};

namespace detail {

// g via the (beta, integral of beta) route: int_0^t beta = -2 log m, then
//   g^2 = beta [ (1-E)^(2/gamma) + E (1-E)^(2/gamma - 1) / (gamma eta) ],
// E = exp(-I / (2 eta)). Exercises logs/exps/powers against the rational form.
inline double g_from_beta_route(const Relation& rel, const Coeffs& c) {
    if (rel.is_ve()) return c.g;
    const double I = -2.0 * std::log(c.m);
    const double E = std::exp(-I / (2.0 * rel.eta));
    const double base = 1.0 - E;
    const double g2 = c.beta * (std::pow(base, 2.0 / rel.gamma) +
                                E * std::pow(base, 2.0 / rel.gamma - 1.0) / (rel.gamma * rel.eta));
    return std::sqrt(std::max(0.0, g2));
}

}  // namespace detail

// Cross-checks analytic coefficients against finite differences of sigma/m
// (step 1e-5) plus the algebraic two-route g comparison. The grid stays
// 1/grid_size away from both endpoints: t = 0 because the exp curve's t_min
// sits at ~1e-7 where the stencil would leave the domain, t = T because the
// relations degenerate as sigma -> sigma(T).
inline ValidationReport validate(const Schedule& sched, int grid_size = 256) {
    if (grid_size < 8) throw std::invalid_argument("validate: grid_size too small");
    ValidationReport rep;
    rep.rows.reserve(static_cast<std::size_t>(grid_size));
    const double h = 1e-5;
    const double lo = std::max(sched.t_min, 1.0 / grid_size);
    const double hi = sched.T - 1.0 / grid_size;
    auto m_at = [&](double t) { return sched.relation.m_of(sched.curve.value(t)); };
    auto s2_at = [&](double t) { const double s = sched.curve.value(t); return s * s; };
    auto r2_at = [&](double t) {
        const double s = sched.curve.value(t), mm = m_at(t);
        return s * s / (mm * mm);
    };
    for (int j = 0; j < grid_size; ++j) {
        const double t = lo + (hi - lo) * j / (grid_size - 1);
        const Coeffs c = coeffs(sched, t);
        ValidationRow row{t, c.sigma, c.m, c.f, c.beta, c.g, c.snr, 0, 0, 0};
        row.res_a = std::abs((m_at(t + h) - m_at(t - h)) / (2.0 * h) - c.f * c.m);
        row.res_b = std::abs((s2_at(t + h) - s2_at(t - h)) / (2.0 * h) -
                             (2.0 * c.f * c.sigma * c.sigma + c.g * c.g));
        const double gm = c.g / c.m;
        const double fd = (r2_at(t + h) - r2_at(t - h)) / (2.0 * h);
        row.res_c = std::abs(gm - std::sqrt(std::max(0.0, fd))) / std::max(1.0, gm);
        const double alg = std::abs(c.g - detail::g_from_beta_route(sched.relation, c));
        rep.max_res_a = std::max(rep.max_res_a, row.res_a);
        rep.max_res_b = std::max(rep.max_res_b, row.res_b);
        rep.max_res_c = std::max(rep.max_res_c, row.res_c);
        rep.max_res_algebraic = std::max(rep.max_res_algebraic, alg);
        rep.rows.push_back(row);
    }
    rep.pass = rep.max_res_a < 1e-3 && rep.max_res_b < 1e-3 && rep.max_res_c < 1e-3 &&
               rep.max_res_algebraic < 1e-9;
    return rep;
}

inline void write_validation_csv(const ValidationReport& rep, std::ostream& out) {
    out << "t,sigma,m,f,beta,g,snr,residual_a,residual_b,residual_c\n";
    char buf[512];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf,
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.t, r.sigma, r.m, r.f, r.beta, r.g, r.snr, r.res_a, r.res_b, r.res_c);
        out << buf;
    }
}

}  // namespace crush
