// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dni/scene.hpp"
#include "dni/tensor.hpp"

namespace dni {

// Linear beta schedule. alphabar(0) is 1 by convention; alphabar(t) for t in [1, T].
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;     // beta[t - 1]
    std::vector<double> alphabar; // alphabar[t - 1]

    double abar(int t) const;
};

NoiseSchedule make_schedule(int T = 1000, double beta_min = 1e-4, double beta_max = 0.02);

LatentTensor q_sample(const LatentTensor& x0, int t, const LatentTensor& eps, const NoiseSchedule& s);

// Head-mean cross-attention captured from one forward pass.
// down: (L, H/4, W/4, K) and mid: (L, H/8, W/8, K), K = prompt slots.
struct AttentionCapture {
    std::uint32_t w_down = 0, h_down = 0, w_mid = 0, h_mid = 0, l = 0;
    std::vector<float> down, mid;
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    // Noise estimate for x at timestep label t (1..T).
    virtual LatentTensor predict_eps(const LatentTensor& x, int t, const ToyPrompt& p, AttentionCapture* capture = nullptr) const = 0;
};

inline constexpr int kDefaultDdimSteps = 50;

// Timestep grid 0, T/steps, ..., T.
std::vector<int> ddim_timesteps(const NoiseSchedule& s, int steps);

LatentTensor ddim_sample(const LatentTensor& zT, const ToyPrompt& cond, const Denoiser& model, const NoiseSchedule& s,
                         int steps = kDefaultDdimSteps);

// When capture_sum is given, attention from every step is accumulated into it (summed, not averaged).
LatentTensor ddim_invert(const LatentTensor& x0, const ToyPrompt& cond, const Denoiser& model, const NoiseSchedule& s,
                         int steps = kDefaultDdimSteps, AttentionCapture* capture_sum = nullptr, int* captured_steps = nullptr);

} // namespace dni
