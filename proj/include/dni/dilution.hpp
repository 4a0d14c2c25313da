// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dni/guidance.hpp"
#include "dni/spectral.hpp"
#include "dni/tensor.hpp"

namespace dni {

struct DilutionConfig {
    double alpha = 0.5;
    double beta = 0.0;
    double gamma = 1.0; // weight on the Gaussian branch; 2 - gamma goes to the diluted visual branch
    std::uint64_t seed = 0;
    AsfNorm norm = AsfNorm::per_channel;

    void validate() const;
};

// z* = gamma * z_g + (2 - gamma) * (m * eps + (1 - m) * z_v), mask broadcast over channels.
LatentTensor dilute(const LatentTensor& z_v, const LatentTensor& z_g, const GuidanceMask& m, const LatentTensor& eps, double gamma);

struct DilutionResult {
    LatentTensor z_star;
    LatentTensor z_v, z_g;
    GuidanceMask mask;
};

// ASF from z0, disentangle z, guidance mask from maps, eps from cfg.seed, dilute.
DilutionResult make_dilutional_noise(const LatentTensor& z, const LatentTensor& z0, const std::vector<AttentionMap>& maps,
                                     const DilutionConfig& cfg);

} // namespace dni
