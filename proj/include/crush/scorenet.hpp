#pragma once
// Denoising score matching on the FilmMlp. The network predicts the noise
// vector eps that produced a perturbed sample; the loss is the batch mean of
// |weight * (eps_hat - eps)|^2. Training keeps an EMA copy of the parameters,
// which is what sampling should use.

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crush/common.hpp"
#include "crush/kernel.hpp"
#include "crush/net.hpp"
#include "crush/rng.hpp"
#include "crush/samplers.hpp"
#include "crush/schedule.hpp"

namespace crush {

// Mean squared weighted residual over the batch; accumulates parameter
// gradients of that mean into *grad when given.
inline double dsm_loss(const FilmMlp& net, const std::vector<TrainingTuple>& batch, Vec* grad) {
    if (batch.empty()) throw std::invalid_argument("dsm_loss: empty batch");
    if (grad && grad->size() != net.params().size())
        throw std::invalid_argument("dsm_loss: gradient size mismatch");
    double loss = 0.0;
    FilmMlp::Cache cache;
    Vec dy;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& tup : batch) {
        const Vec y = net.forward(tup.x_t, tup.sigma, cache);
        const double w2 = tup.weight * tup.weight;
        dy.resize(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double r = y[i] - tup.eps[i];
            loss += w2 * r * r * inv_b;
            dy[i] = 2.0 * w2 * r * inv_b;
        }
        if (grad) net.backward(cache, dy, grad, nullptr);
    }
    return loss;
}

// One optimizer step on a batch. Returns the pre-step loss.
inline double train_step(FilmMlp& net, AdamState& adam, EmaState& ema,
                         const std::vector<TrainingTuple>& batch) {
    Vec grad(net.params().size(), 0.0);
    const double loss = dsm_loss(net, batch, &grad);
    adam_step(net.params(), adam, grad);
    ema_step(ema, net.params());
    return loss;
}

struct TrainConfig {
    NetSpec arch;          // in/out are overwritten with the data dimension
    int steps = 20000;
    int batch = 32;
    Weighting weighting = Weighting::Sigma2;
    double lr = 2e-4;
    double ema_rate = 0.999;
    std::uint64_t seed = 0;
    int log_every = 100;

    void check() const {
        if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
        if (batch < 1 || log_every < 1)
            throw std::invalid_argument("TrainConfig: batch, log_every must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
        if (!(ema_rate >= 0.0 && ema_rate < 1.0))
            throw std::invalid_argument("TrainConfig: ema_rate must lie in [0, 1)");
    }
};

struct TrainResult {
    FilmMlp net;       // raw final parameters
    Vec ema_params;    // EMA shadow, the weights to sample with
    std::vector<double> loss_curve;  // mean loss per log_every window

    FilmMlp ema_net() const {
        FilmMlp out = net;
        out.set_params(ema_params);
        return out;
    }
};

// Data points are visited round-robin; each tuple draws its own time and
// noise. All randomness comes from the single seed.
inline TrainResult train_scorenet(const std::vector<Vec>& data, const Schedule& sched,
                                  TrainConfig cfg) {
    if (data.empty()) throw std::invalid_argument("train_scorenet: empty dataset");
    cfg.check();
    const auto dim = data.front().size();
    for (const auto& x : data)
        if (x.size() != dim) throw std::invalid_argument("train_scorenet: ragged dataset");
    cfg.arch.in = static_cast<int>(dim);
    cfg.arch.out = static_cast<int>(dim);

    Rng rng(cfg.seed);
    FilmMlp net(cfg.arch, rng);
    AdamState adam = AdamState::for_size(net.params().size(), cfg.lr);
    EmaState ema{net.params(), cfg.ema_rate};

    TrainResult res{std::move(net), {}, {}};
    std::vector<TrainingTuple> batch(static_cast<std::size_t>(cfg.batch));
    double window = 0.0;
    for (int s = 0; s < cfg.steps; ++s) {
        for (int k = 0; k < cfg.batch; ++k) {
            const std::size_t idx =
                (static_cast<std::size_t>(s) * static_cast<std::size_t>(cfg.batch) +
                 static_cast<std::size_t>(k)) %
                data.size();
            batch[static_cast<std::size_t>(k)] =
                sample_training_tuple(data[idx], sched, cfg.weighting, rng);
        }
        window += train_step(res.net, adam, ema, batch);
        if ((s + 1) % cfg.log_every == 0) {
            res.loss_curve.push_back(window / cfg.log_every);
            window = 0.0;
        }
    }
    res.ema_params = std::move(ema.shadow);
    return res;
}

inline EpsFn net_eps_fn(FilmMlp net) {
    return [net = std::move(net)](const Vec& x, double sigma) { return net.forward(x, sigma); };
}

}  // namespace crush
