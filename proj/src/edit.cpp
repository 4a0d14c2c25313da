// SPDX-License-Identifier: Apache-2.0
#include "dni/edit.hpp"

namespace dni {

std::vector<int> reference_slots(const ToyPrompt& source, const ToyPrompt& target) {
    const auto a = source.tokens(), b = target.tokens();
    std::vector<int> out;
    for (int k = 0; k < kPromptSlots; ++k)
        if (a[k] != b[k]) out.push_back(k);
    return out;
}

std::vector<AttentionMap> collect_attention(const AttentionCapture& sum, int steps, const ToyPrompt& prompt, const std::vector<int>& slots) {
    if (steps < 1) throw Error(ErrorKind::invalid_argument, "collect_attention: no captured steps");
    if (sum.down.empty() || sum.mid.empty()) throw Error(ErrorKind::invalid_argument, "collect_attention: empty capture");
    const auto toks = prompt.tokens();
    std::vector<AttentionMap> out;
    for (int slot : slots) {
        if (slot < 0 || slot >= kPromptSlots) throw Error(ErrorKind::invalid_argument, "collect_attention: slot out of range");
        const WordCategory cat = token_category(toks[slot]);
        const bool rigid = cat == WordCategory::rigid;
        const std::uint32_t w = rigid ? sum.w_down : sum.w_mid, h = rigid ? sum.h_down : sum.h_mid;
        const auto& src = rigid ? sum.down : sum.mid;
        AttentionMap m{w, h, sum.l, std::vector<float>(std::size_t(w) * h * sum.l), token_word(toks[slot]), cat, rigid ? "down" : "mid", false};
        for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = src[i * kPromptSlots + slot] / float(steps);
        normalize_map(m);
        out.push_back(std::move(m));
    }
    return out;
}

EditResult edit_from_inversion(const LatentTensor& x0, const LatentTensor& z, const std::vector<AttentionMap>& maps, const ToyPrompt& target,
                               const Denoiser& model, const DilutionConfig& cfg, const NoiseSchedule& s, int steps) {
    cfg.validate();
    EditResult r;
    r.z = z;
    r.maps = maps;
    if (cfg.alpha == 0.0 && cfg.beta == 0.0 && cfg.gamma == 1.0) {
        // Zero mask and unit gamma reduce the dilution to z itself; skip the FFT round trip so the
        // result is bit-identical to plain denoising.
        r.z_star = z;
        r.mask = uniform_mask(z.dims().w, z.dims().h, z.dims().l, 0.0f);
    } else {
        DilutionResult d = make_dilutional_noise(z, x0, maps, cfg);
        r.z_star = std::move(d.z_star);
        r.mask = std::move(d.mask);
    }
    r.video = ddim_sample(r.z_star, target, model, s, steps);
    return r;
}

EditResult edit_video_traced(const LatentTensor& x0, const ToyPrompt& source, const ToyPrompt& target, const Denoiser& model,
                             const DilutionConfig& cfg, const NoiseSchedule& s, int steps) {
    const auto slots = reference_slots(source, target);
    if (slots.empty()) throw Error(ErrorKind::invalid_argument, "nothing to edit: source and target prompts are identical");
    cfg.validate();
    AttentionCapture cap;
    int n = 0;
    const LatentTensor z = ddim_invert(x0, source, model, s, steps, &cap, &n);
    return edit_from_inversion(x0, z, collect_attention(cap, n, source, slots), target, model, cfg, s, steps);
}

LatentTensor edit_video(const LatentTensor& x0, const ToyPrompt& source, const ToyPrompt& target, const Denoiser& model,
                        const DilutionConfig& cfg, const NoiseSchedule& s, int steps) {
    return edit_video_traced(x0, source, target, model, cfg, s, steps).video;
}

} // namespace dni
