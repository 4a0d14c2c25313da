// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dni/diffusion.hpp"
#include "dni/scene.hpp"

namespace dni {

struct ModelConfig {
    Dims dims{32, 32, 8, 3};
    int f1 = 12;   // full-resolution width
    int f2 = 32;   // width at 1/4 and 1/8 resolution
    int emb = 16;  // token embedding
    int temb = 16; // sinusoidal time embedding
    int heads = 2;
    int dk = 8;
    int head_temporal = 1; // temporal taps of the full-res head conv (1 or 3)

    void validate() const;
};

struct Param {
    std::string name;
    int rows = 0, cols = 0;
    std::vector<float> w;
};

// Small conditional denoiser. Full-res 3x3x3 conv stem, a 1/4-res conv stage with
// cross-attention (block D), a 1/8-res cross-attention (block M), and a full-res 1x3x3 head.
// Time and pooled prompt enter every stage as additive biases. The head predicts v;
// predict_eps returns sqrt(abar) * net + sqrt(1 - abar) * x.
class ToyDenoiser : public Denoiser {
public:
    ToyDenoiser(const ModelConfig& cfg, const NoiseSchedule& s, std::uint64_t init_seed);

    LatentTensor predict_eps(const LatentTensor& x, int t, const ToyPrompt& p, AttentionCapture* capture = nullptr) const override;

    const ModelConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    std::size_t parameter_count() const;

    // Mean over the batch of abar-weighted eps MSE; gradients accumulate into grads (same layout as params).
    double loss_and_grad(const std::vector<const LatentTensor*>& x0, const std::vector<ToyPrompt>& prompts, const std::vector<int>& t,
                         const std::vector<const LatentTensor*>& eps, std::vector<std::vector<float>>& grads) const;

    // Checkpoint: a directory with manifest.json plus one DNIT file per parameter.
    void save(const std::string& dir) const;
    static ToyDenoiser load(const std::string& dir);

    struct Impl;

private:
    ToyDenoiser() = default;
    void index_params();

    ModelConfig cfg_;
    NoiseSchedule sched_;
    std::vector<Param> params_;
    std::vector<int> slot_; // parameter index per named slot, see denoiser.cpp
};

struct TrainConfig {
    std::uint64_t seed = 0;
    int steps = 2000;
    int batch = 8;
    double lr = 3e-3;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
};

struct TrainResult {
    std::vector<double> losses;
    double initial_loss = 0.0; // mean of the first min(20, steps) losses
    double final_loss = 0.0;   // mean of the last min(50, steps) losses
};

TrainResult train(ToyDenoiser& model, const std::vector<Example>& data, const TrainConfig& cfg,
                  const std::function<void(int, double)>& on_step = nullptr);

} // namespace dni
