// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dni/dilution.hpp"

using namespace dni;

namespace {

LatentTensor structured(Dims d, std::uint64_t seed) {
    LatentTensor t = random_gaussian(d, seed);
    for (std::uint32_t l = 0; l < d.l; ++l)
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t x = 0; x < d.w; ++x)
                for (std::uint32_t c = 0; c < d.c; ++c) t.at(x, y, l, c) += float(std::cos(0.4 * x - 0.2 * y + c));
    return t;
}

GuidanceMask random_mask(const Dims& d, std::uint64_t seed) {
    GuidanceMask m = uniform_mask(d.w, d.h, d.l, 0.0f);
    Rng r(seed);
    for (auto& v : m.values) v = float(r.uniform());
    return m;
}

} // namespace

TEST_CASE("zero mask and gamma 1 give back z") {
    const Dims d{12, 10, 4, 3};
    const LatentTensor z = random_gaussian(d, 1), z0 = structured(d, 2);
    const auto [v, g] = disentangle(z, build_asf(z0));
    const LatentTensor eps = random_gaussian(d, 3);
    const LatentTensor out = dilute(v, g, uniform_mask(d.w, d.h, d.l, 0.0f), eps, 1.0);
    double worst = 0;
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, double(std::abs(out.data()[i] - z.data()[i])));
    CHECK(worst <= 1e-6);
    CHECK(rel_l2(out, z) <= 1e-5);

    // Same endpoint through the full pipeline with no maps.
    DilutionConfig cfg;
    cfg.seed = 9;
    const DilutionResult r = make_dilutional_noise(z, z0, {}, cfg);
    CHECK(rel_l2(r.z_star, z) <= 1e-5);
}

TEST_CASE("full mask and gamma 1 give z_g + eps exactly") {
    const Dims d{8, 8, 3, 2};
    const LatentTensor z = random_gaussian(d, 4), z0 = structured(d, 5);
    const auto [v, g] = disentangle(z, build_asf(z0));
    const LatentTensor eps = random_gaussian(d, 6);
    const LatentTensor out = dilute(v, g, uniform_mask(d.w, d.h, d.l, 1.0f), eps, 1.0);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == g.data()[i] + eps.data()[i]);
}

TEST_CASE("dilute matches the scalar formula in double precision") {
    const Dims d{6, 5, 3, 3};
    const LatentTensor v = random_gaussian(d, 7), g = random_gaussian(d, 8), eps = random_gaussian(d, 9);
    const GuidanceMask m = random_mask(d, 10);
    for (double gamma : {0.3, 1.0, 1.7}) {
        const LatentTensor out = dilute(v, g, m, eps, gamma);
        for (std::uint32_t l = 0; l < d.l; ++l)
            for (std::uint32_t y = 0; y < d.h; ++y)
                for (std::uint32_t x = 0; x < d.w; ++x)
                    for (std::uint32_t c = 0; c < d.c; ++c) {
                        const double mk = m.at(x, y, l);
                        const double want = gamma * g.at(x, y, l, c) + (2 - gamma) * (mk * eps.at(x, y, l, c) + (1 - mk) * v.at(x, y, l, c));
                        CHECK(out.at(x, y, l, c) == doctest::Approx(want).epsilon(1e-5));
                    }
    }
}

TEST_CASE("mask size and gamma are validated") {
    const Dims d{4, 4, 2, 1};
    const LatentTensor a = random_gaussian(d, 1);
    CHECK_THROWS_AS(dilute(a, a, uniform_mask(4, 4, 3, 0.0f), a, 1.0), Error);
    CHECK_THROWS_AS(dilute(a, a, uniform_mask(4, 4, 2, 0.0f), a, 2.0), Error);
    CHECK_THROWS_AS(dilute(a, a, uniform_mask(4, 4, 2, 0.0f), random_gaussian(Dims{4, 4, 2, 2}, 1), 1.0), Error);
    DilutionConfig cfg;
    cfg.alpha = -0.1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.alpha = 0.5, cfg.gamma = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("make_dilutional_noise is deterministic and uses the seeded eps") {
    const Dims d{16, 16, 4, 3};
    const LatentTensor z = random_gaussian(d, 11), z0 = structured(d, 12);
    SceneSpec s;
    s.dims = d;
    s.prompt = ToyPrompt{Shape::square, Color::red, Verb::slide, Style::plain};
    s.cx = s.cy = 8.0;
    s.radius = 3.0;
    const std::vector<AttentionMap> maps = {synth_attention(s, "red"), synth_attention(s, "slide")};
    DilutionConfig cfg;
    cfg.alpha = 0.6, cfg.beta = 0.7, cfg.seed = 3;
    const DilutionResult a = make_dilutional_noise(z, z0, maps, cfg);
    const DilutionResult b = make_dilutional_noise(z, z0, maps, cfg);
    CHECK(a.z_star.values() == b.z_star.values());
    // Recompose with the documented formula.
    const LatentTensor eps = random_gaussian(d, 3);
    const LatentTensor want = dilute(a.z_v, a.z_g, a.mask, eps, cfg.gamma);
    CHECK(want.values() == a.z_star.values());
    cfg.seed = 4;
    CHECK(make_dilutional_noise(z, z0, maps, cfg).z_star.values() != a.z_star.values());
    // Maps must share the latent's frame count.
    s.dims.l = 3;
    CHECK_THROWS_AS(make_dilutional_noise(z, z0, {synth_attention(s, "red")}, cfg), Error);
}
