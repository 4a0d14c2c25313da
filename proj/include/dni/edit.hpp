// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dni/diffusion.hpp"
#include "dni/dilution.hpp"
#include "dni/guidance.hpp"

namespace dni {

// Prompt slots whose token differs between source and target.
std::vector<int> reference_slots(const ToyPrompt& source, const ToyPrompt& target);

// Maps for the given slots of `prompt` from an attention sum over `steps` forward passes.
// Rigid words read block D (1/4 res), the verb reads block M (1/8 res). Each map is the
// step mean, min-max normalised; constant maps come back flagged degenerate.
std::vector<AttentionMap> collect_attention(const AttentionCapture& sum, int steps, const ToyPrompt& prompt, const std::vector<int>& slots);

struct EditResult {
    LatentTensor z;      // inverted source latent
    LatentTensor z_star; // diluted noise actually denoised
    std::vector<AttentionMap> maps;
    GuidanceMask mask;
    LatentTensor video;
};

// Invert under the source prompt, dilute with reference-word attention, denoise under the target.
EditResult edit_video_traced(const LatentTensor& x0, const ToyPrompt& source, const ToyPrompt& target, const Denoiser& model,
                             const DilutionConfig& cfg, const NoiseSchedule& s, int steps = kDefaultDdimSteps);

LatentTensor edit_video(const LatentTensor& x0, const ToyPrompt& source, const ToyPrompt& target, const Denoiser& model,
                        const DilutionConfig& cfg, const NoiseSchedule& s, int steps = kDefaultDdimSteps);

// Same as edit_video but reuses an inversion already computed for x0.
EditResult edit_from_inversion(const LatentTensor& x0, const LatentTensor& z, const std::vector<AttentionMap>& maps, const ToyPrompt& target,
                               const Denoiser& model, const DilutionConfig& cfg, const NoiseSchedule& s, int steps = kDefaultDdimSteps);

} // namespace dni
