// SPDX-License-Identifier: Apache-2.0
#include "dni/dilution.hpp"

#include <cmath>

namespace dni {

void DilutionConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::invalid_argument, "alpha must lie in [0,1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::invalid_argument, "beta must lie in [0,1]");
    if (!(gamma > 0.0 && gamma < 2.0)) throw Error(ErrorKind::invalid_argument, "gamma must lie in (0,2)");
}

LatentTensor dilute(const LatentTensor& z_v, const LatentTensor& z_g, const GuidanceMask& m, const LatentTensor& eps, double gamma) {
    require_same_dims(z_v.dims(), z_g.dims(), "dilute z_v/z_g");
    require_same_dims(z_v.dims(), eps.dims(), "dilute z_v/eps");
    const Dims& d = z_v.dims();
    if (m.w != d.w || m.h != d.h || m.l != d.l || m.values.size() != std::size_t(d.w) * d.h * d.l)
        throw Error(ErrorKind::dims_mismatch, "dilute: mask (" + std::to_string(m.w) + "," + std::to_string(m.h) + "," +
                                                  std::to_string(m.l) + ") does not match latent " + d.str());
    if (!(gamma > 0.0 && gamma < 2.0)) throw Error(ErrorKind::invalid_argument, "dilute: gamma must lie in (0,2)");

    LatentTensor out(d);
    const float g = float(gamma), v = float(2.0 - gamma);
    for (std::size_t cell = 0; cell < m.values.size(); ++cell) {
        const float mk = m.values[cell];
        for (std::uint32_t c = 0; c < d.c; ++c) {
            const std::size_t i = cell * d.c + c;
            out.data()[i] = g * z_g.data()[i] + v * (mk * eps.data()[i] + (1.0f - mk) * z_v.data()[i]);
        }
    }
    return out;
}

DilutionResult make_dilutional_noise(const LatentTensor& z, const LatentTensor& z0, const std::vector<AttentionMap>& maps,
                                     const DilutionConfig& cfg) {
    cfg.validate();
    require_same_dims(z.dims(), z0.dims(), "make_dilutional_noise");
    const Dims& d = z.dims();
    auto [z_v, z_g] = disentangle(z, build_asf(z0, cfg.norm));
    GuidanceMask mask = maps.empty() ? uniform_mask(d.w, d.h, d.l, 0.0f) : build_guidance(maps, d.w, d.h, cfg.alpha, cfg.beta);
    if (mask.l != d.l) throw Error(ErrorKind::dims_mismatch, "attention maps have " + std::to_string(mask.l) + " frames, latent has " + std::to_string(d.l));
    const LatentTensor eps = random_gaussian(d, cfg.seed);
    LatentTensor z_star = dilute(z_v, z_g, mask, eps, cfg.gamma);
    return {std::move(z_star), std::move(z_v), std::move(z_g), std::move(mask)};
}

} // namespace dni
