// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dni/guidance.hpp"
#include "dni/tensor.hpp"

namespace dni {

// Zero mean, unit variance over the whole tensor.
LatentTensor standardize(const LatentTensor& t);

// 10 log10(peak^2 / MSE). Default peak is the dynamic range of b. +inf when MSE is 0.
double psnr(const LatentTensor& a, const LatentTensor& b, std::optional<double> peak = std::nullopt);

struct Frame {
    std::uint32_t w = 0, h = 0;
    std::vector<double> px; // row-major (H, W)
};

Frame frame_of(const LatentTensor& t, std::uint32_t l, std::uint32_t c);

inline constexpr std::uint32_t kSsimWindow = 8;
// Single-scale SSIM with 8x8 uniform windows at stride 1. Default peak is b's dynamic range (1 if flat).
double ssim_frame(const Frame& a, const Frame& b, std::optional<double> peak = std::nullopt);
// Mean of ssim_frame over frames and channels.
double ssim_video(const LatentTensor& a, const LatentTensor& b);

struct SpectralProfile {
    std::vector<double> radial;          // mean |2D DFT| per integer radius
    std::vector<double> temporal;        // mean |1D DFT along L| per temporal index
    std::vector<double> radial_energy;   // sum |2D DFT|^2 per radius
    std::vector<double> temporal_energy; // sum |1D DFT|^2 per temporal index
};

SpectralProfile spectral_profile(const LatentTensor& t);

// Pearson correlation of |dft3(x)| and |dft3(ref)| over bins whose index is < band * axis length on every axis.
double band_correlation(const LatentTensor& x, const LatentTensor& ref, double band);
// Mean ASF-style gain over that same band.
double band_mean(const LatentTensor& gains, double band);

enum class Region { inside, outside };
inline constexpr float kMaskThreshold = 0.5f;

double masked_mse(const LatentTensor& a, const LatentTensor& b, const GuidanceMask& m, Region region);

double mse(const LatentTensor& a, const LatentTensor& b);

} // namespace dni
