#pragma once
// Small conditioned MLP with hand-written reverse-mode gradients.
//
// The noise level sigma enters through fixed random Fourier features, passes a
// two-layer MLP, and conditions every hidden trunk layer through a FiLM head:
// h = gamma(sigma) * z + beta(sigma) applied to the affine output z, then the
// smooth silu nonlinearity. Parameters live in one flat vector described by a
// layout table, which keeps the optimizer, EMA, checkpointing and gradient
// checks generic. The Fourier frequencies are not parameters and receive no
// gradient.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crush/common.hpp"
#include "crush/rng.hpp"

namespace crush {

struct NetSpec {
    int in = 2;
    int out = 2;
    int hidden = 128;
    int depth = 3;  // hidden trunk layers
    int sigma_hidden = 64;
    int freqs = 32;

    void check() const {
        for (int v : {in, out, hidden, depth, sigma_hidden, freqs})
            if (v < 1) throw std::invalid_argument("NetSpec: all sizes must be >= 1");
    }
};

struct TensorSpec {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;  // 1 for biases

    std::size_t size() const { return rows * cols; }
};

namespace detail {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double dsilu(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

inline void affine(const double* w, const double* b, const Vec& x, Vec& y, std::size_t rows,
                   std::size_t cols) {
    y.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* row = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

}  // namespace detail

class FilmMlp {
  public:
    struct Cache {
        Vec x, e;
        Vec zs1, s1, zs2, s2;              // sigma pathway
        std::vector<Vec> z, gamma, beta, h, a;  // per trunk layer
    };

    FilmMlp(const NetSpec& spec, Rng& rng) : spec_(spec) {
        spec_.check();
        freqs_.resize(static_cast<std::size_t>(spec_.freqs));
        for (auto& f : freqs_) f = 4.0 * rng.gaussian();  // std 4, fixed for good

        const auto F2 = static_cast<std::size_t>(2 * spec_.freqs);
        const auto E = static_cast<std::size_t>(spec_.sigma_hidden);
        const auto H = static_cast<std::size_t>(spec_.hidden);
        add_uniform(rng, "sigma1.w", E, F2);
        add_uniform(rng, "sigma1.b", E, 1, F2);
        add_uniform(rng, "sigma2.w", E, E);
        add_uniform(rng, "sigma2.b", E, 1, E);
        for (int l = 0; l < spec_.depth; ++l) {
            const std::size_t prev = l == 0 ? static_cast<std::size_t>(spec_.in) : H;
            const std::string tag = std::to_string(l);
            add_uniform(rng, "trunk" + tag + ".w", H, prev);
            add_uniform(rng, "trunk" + tag + ".b", H, 1, prev);
            add_uniform(rng, "film" + tag + ".w", 2 * H, E);
            // gamma half starts at one so conditioning begins near identity
            const std::size_t off = add_zeros("film" + tag + ".b", 2 * H, 1);
            for (std::size_t j = 0; j < H; ++j) params_[off + j] = 1.0;
        }
        // zero output layer: the net estimates zero noise until trained
        add_zeros("out.w", static_cast<std::size_t>(spec_.out), H);
        add_zeros("out.b", static_cast<std::size_t>(spec_.out), 1);
    }

    Vec forward(const Vec& x, double sigma) const {
        Cache c;
        return forward(x, sigma, c);
    }

    Vec forward(const Vec& x, double sigma, Cache& c) const {
        if (x.size() != static_cast<std::size_t>(spec_.in))
            throw std::invalid_argument("FilmMlp: input dimension mismatch");
        if (!(sigma >= 0.0)) throw std::domain_error("FilmMlp: sigma must be >= 0");
        c.x = x;
        c.e.resize(freqs_.size() * 2);
        for (std::size_t i = 0; i < freqs_.size(); ++i) {
            const double arg = 2.0 * kPi * freqs_[i] * sigma;
            c.e[i] = std::cos(arg);
            c.e[freqs_.size() + i] = std::sin(arg);
        }
        run_affine("sigma1", c.e, c.zs1);
        activate(c.zs1, c.s1);
        run_affine("sigma2", c.s1, c.zs2);
        activate(c.zs2, c.s2);

        const int L = spec_.depth;
        c.z.assign(L, {});
        c.gamma.assign(L, {});
        c.beta.assign(L, {});
        c.h.assign(L, {});
        c.a.assign(L, {});
        const Vec* prev = &c.x;
        Vec film;
        for (int l = 0; l < L; ++l) {
            const std::string tag = std::to_string(l);
            run_affine("trunk" + tag, *prev, c.z[l]);
            run_affine("film" + tag, c.s2, film);
            const std::size_t H = c.z[l].size();
            c.gamma[l].assign(film.begin(), film.begin() + static_cast<long>(H));
            c.beta[l].assign(film.begin() + static_cast<long>(H), film.end());
            c.h[l].resize(H);
            for (std::size_t j = 0; j < H; ++j)
                c.h[l][j] = c.gamma[l][j] * c.z[l][j] + c.beta[l][j];
            activate(c.h[l], c.a[l]);
            prev = &c.a[l];
        }
        Vec y;
        run_affine("out", *prev, y);
        return y;
    }

    // Reverse mode from an output-side gradient dy. param_grad (same length as
    // params) is accumulated into when given; input_grad is overwritten.
    void backward(const Cache& c, const Vec& dy, Vec* param_grad, Vec* input_grad) const {
        if (dy.size() != static_cast<std::size_t>(spec_.out))
            throw std::invalid_argument("FilmMlp: output gradient dimension mismatch");
        if (param_grad && param_grad->size() != params_.size())
            throw std::invalid_argument("FilmMlp: parameter gradient size mismatch");
        const int L = spec_.depth;
        Vec da;
        backprop_affine("out", c.a[static_cast<std::size_t>(L - 1)], dy, param_grad, &da);
        Vec ds2(c.s2.size(), 0.0);
        Vec dh, dz, dfilm;
        for (int l = L - 1; l >= 0; --l) {
            const auto lu = static_cast<std::size_t>(l);
            const std::size_t H = c.h[lu].size();
            dh.resize(H);
            for (std::size_t j = 0; j < H; ++j) dh[j] = da[j] * detail::dsilu(c.h[lu][j]);
            dz.resize(H);
            for (std::size_t j = 0; j < H; ++j) dz[j] = dh[j] * c.gamma[lu][j];
            if (param_grad) {
                dfilm.resize(2 * H);
                for (std::size_t j = 0; j < H; ++j) {
                    dfilm[j] = dh[j] * c.z[lu][j];  // gamma side
                    dfilm[H + j] = dh[j];           // beta side
                }
                Vec ds2_l;
                backprop_affine("film" + std::to_string(l), c.s2, dfilm, param_grad, &ds2_l);
                for (std::size_t j = 0; j < ds2.size(); ++j) ds2[j] += ds2_l[j];
            }
            const Vec& below = l == 0 ? c.x : c.a[lu - 1];
            Vec da_below;
            backprop_affine("trunk" + std::to_string(l), below, dz, param_grad, &da_below);
            da = std::move(da_below);
        }
        if (input_grad) *input_grad = da;
        if (!param_grad) return;  // sigma pathway feeds parameters only
        Vec dzs2(c.zs2.size());
        for (std::size_t j = 0; j < dzs2.size(); ++j) dzs2[j] = ds2[j] * detail::dsilu(c.zs2[j]);
        Vec ds1;
        backprop_affine("sigma2", c.s1, dzs2, param_grad, &ds1);
        Vec dzs1(c.zs1.size());
        for (std::size_t j = 0; j < dzs1.size(); ++j) dzs1[j] = ds1[j] * detail::dsilu(c.zs1[j]);
        backprop_affine("sigma1", c.e, dzs1, param_grad, nullptr);
    }

    Vec& params() { return params_; }
    const Vec& params() const { return params_; }

    void set_params(Vec p) {
        if (p.size() != params_.size()) throw std::invalid_argument("FilmMlp: wrong params size");
        params_ = std::move(p);
    }

    const Vec& frequencies() const { return freqs_; }

    void set_frequencies(Vec f) {
        if (f.size() != freqs_.size())
            throw std::invalid_argument("FilmMlp: wrong frequency count");
        freqs_ = std::move(f);
    }

    const NetSpec& spec() const { return spec_; }
    const std::vector<TensorSpec>& layout() const { return layout_; }

    const TensorSpec& tensor(const std::string& name) const {
        for (const auto& t : layout_)
            if (t.name == name) return t;
        throw std::invalid_argument("FilmMlp: no tensor named " + name);
    }

  private:
    static constexpr double kPi = 3.14159265358979323846;

    std::size_t add_tensor(const std::string& name, std::size_t rows, std::size_t cols) {
        const std::size_t off = params_.size();
        layout_.push_back({name, off, rows, cols});
        params_.resize(off + rows * cols, 0.0);
        return off;
    }

    // fan_in defaults to cols (weights); biases pass their layer's fan-in
    void add_uniform(Rng& rng, const std::string& name, std::size_t rows, std::size_t cols,
                     std::size_t fan_in = 0) {
        const std::size_t off = add_tensor(name, rows, cols);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in ? fan_in : cols));
        for (std::size_t i = off; i < params_.size(); ++i) params_[i] = rng.uniform(-bound, bound);
    }

    std::size_t add_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
        return add_tensor(name, rows, cols);
    }

    void run_affine(const std::string& name, const Vec& x, Vec& y) const {
        const TensorSpec& w = tensor(name + ".w");
        const TensorSpec& b = tensor(name + ".b");
        detail::affine(params_.data() + w.offset, params_.data() + b.offset, x, y, w.rows, w.cols);
    }

    // dW += dy (x) x, db += dy, dx = W^T dy
    void backprop_affine(const std::string& name, const Vec& x, const Vec& dy, Vec* param_grad,
                         Vec* dx) const {
        const TensorSpec& w = tensor(name + ".w");
        const TensorSpec& b = tensor(name + ".b");
        if (param_grad) {
            double* dW = param_grad->data() + w.offset;
            double* db = param_grad->data() + b.offset;
            for (std::size_t r = 0; r < w.rows; ++r) {
                const double g = dy[r];
                db[r] += g;
                double* row = dW + r * w.cols;
                for (std::size_t c = 0; c < w.cols; ++c) row[c] += g * x[c];
            }
        }
        if (dx) {
            dx->assign(w.cols, 0.0);
            const double* W = params_.data() + w.offset;
            for (std::size_t r = 0; r < w.rows; ++r) {
                const double g = dy[r];
                const double* row = W + r * w.cols;
                for (std::size_t c = 0; c < w.cols; ++c) (*dx)[c] += row[c] * g;
            }
        }
    }

    static void activate(const Vec& z, Vec& a) {
        a.resize(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) a[j] = detail::silu(z[j]);
    }

    NetSpec spec_;
    Vec freqs_;
    Vec params_;
    std::vector<TensorSpec> layout_;
};

struct AdamState {
    Vec m, v;
    long steps = 0;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_size(std::size_t n, double lr = 2e-4) {
        AdamState st;
        st.m.assign(n, 0.0);
        st.v.assign(n, 0.0);
        st.lr = lr;
        return st;
    }
};

inline void adam_step(Vec& params, AdamState& st, const Vec& grad) {
    if (grad.size() != params.size() || st.m.size() != params.size())
        throw std::invalid_argument("adam_step: size mismatch");
    st.steps += 1;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.steps));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.steps));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        params[i] -= st.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
    }
}

struct EmaState {
    Vec shadow;
    double rate = 0.999;
};

inline void ema_step(EmaState& st, const Vec& params) {
    if (st.shadow.size() != params.size()) throw std::invalid_argument("ema_step: size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        st.shadow[i] = st.rate * st.shadow[i] + (1.0 - st.rate) * params[i];
}

}  // namespace crush
