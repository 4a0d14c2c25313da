// SPDX-License-Identifier: Apache-2.0
#include "dni/diffusion.hpp"

#include <cmath>

namespace dni {

double NoiseSchedule::abar(int t) const {
    if (t == 0) return 1.0;
    if (t < 0 || t > T) throw Error(ErrorKind::invalid_argument, "timestep " + std::to_string(t) + " outside [0," + std::to_string(T) + "]");
    return alphabar[t - 1];
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
    if (T < 2) throw Error(ErrorKind::invalid_argument, "make_schedule: T must be at least 2");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
        throw Error(ErrorKind::invalid_argument, "make_schedule: need 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alphabar.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.beta[i] = beta_min + (beta_max - beta_min) * double(i) / double(T - 1);
        prod *= 1.0 - s.beta[i];
        s.alphabar[i] = prod;
    }
    return s;
}

LatentTensor q_sample(const LatentTensor& x0, int t, const LatentTensor& eps, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw Error(ErrorKind::invalid_argument, "q_sample: t must lie in [1," + std::to_string(s.T) + "]");
    require_same_dims(x0.dims(), eps.dims(), "q_sample");
    const double a = s.abar(t), ra = std::sqrt(a), rs = std::sqrt(1.0 - a);
    LatentTensor out(x0.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = float(ra * x0.data()[i] + rs * eps.data()[i]);
    return out;
}

std::vector<int> ddim_timesteps(const NoiseSchedule& s, int steps) {
    if (steps < 1) throw Error(ErrorKind::invalid_argument, "ddim: steps must be positive");
    if (steps > s.T) throw Error(ErrorKind::invalid_argument, "ddim: steps " + std::to_string(steps) + " exceed T = " + std::to_string(s.T));
    if (s.T % steps) throw Error(ErrorKind::invalid_argument, "ddim: steps must divide T = " + std::to_string(s.T));
    std::vector<int> ts(steps + 1);
    for (int i = 0; i <= steps; ++i) ts[i] = i * (s.T / steps);
    return ts;
}

namespace {

// Deterministic DDIM move from alphabar a to alphabar b given a noise estimate.
void ddim_move(LatentTensor& x, const LatentTensor& eps, double a, double b) {
    const double ra = std::sqrt(a), rb = std::sqrt(b);
    const double k = std::sqrt(1.0 / b - 1.0) - std::sqrt(1.0 / a - 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = float(rb * (x.data()[i] / ra + k * eps.data()[i]));
}

void accumulate(AttentionCapture& sum, const AttentionCapture& c) {
    if (sum.down.empty()) {
        sum = c;
        return;
    }
    for (std::size_t i = 0; i < c.down.size(); ++i) sum.down[i] += c.down[i];
    for (std::size_t i = 0; i < c.mid.size(); ++i) sum.mid[i] += c.mid[i];
}

} // namespace

LatentTensor ddim_sample(const LatentTensor& zT, const ToyPrompt& cond, const Denoiser& model, const NoiseSchedule& s, int steps) {
    const auto ts = ddim_timesteps(s, steps);
    LatentTensor x = zT;
    for (int i = steps; i > 0; --i) {
        const LatentTensor eps = model.predict_eps(x, ts[i], cond);
        ddim_move(x, eps, s.abar(ts[i]), s.abar(ts[i - 1]));
    }
    if (!x.all_finite()) throw Error(ErrorKind::non_finite, "ddim_sample diverged");
    return x;
}

LatentTensor ddim_invert(const LatentTensor& x0, const ToyPrompt& cond, const Denoiser& model, const NoiseSchedule& s, int steps,
                         AttentionCapture* capture_sum, int* captured_steps) {
    const auto ts = ddim_timesteps(s, steps);
    LatentTensor x = x0;
    AttentionCapture cap;
    if (capture_sum) *capture_sum = AttentionCapture{};
    for (int i = 0; i < steps; ++i) {
        // The estimate is taken at the destination label, as the forward step targets that noise level.
        const LatentTensor eps = model.predict_eps(x, ts[i + 1], cond, capture_sum ? &cap : nullptr);
        if (capture_sum) accumulate(*capture_sum, cap);
        ddim_move(x, eps, s.abar(ts[i]), s.abar(ts[i + 1]));
    }
    if (captured_steps) *captured_steps = steps;
    if (!x.all_finite()) throw Error(ErrorKind::non_finite, "ddim_invert diverged");
    return x;
}

} // namespace dni
