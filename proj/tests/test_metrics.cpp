// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dni/metrics.hpp"
#include "dni/scene.hpp"

using namespace dni;

namespace {

double energy(const LatentTensor& t) {
    double s = 0;
    for (float v : t.values()) s += double(v) * v;
    return s;
}

} // namespace

TEST_CASE("psnr and mse") {
    LatentTensor a(Dims{4, 1, 1, 1}, std::vector<float>{0, 1, 2, 3});
    LatentTensor b(Dims{4, 1, 1, 1}, std::vector<float>{0, 1, 2, 4});
    CHECK(mse(a, b) == doctest::Approx(0.25));
    // peak = range of b = 4
    CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(16 / 0.25)));
    CHECK(psnr(a, b, 2.0) == doctest::Approx(10 * std::log10(4 / 0.25)));
    CHECK(std::isinf(psnr(b, b)));
    CHECK_THROWS_AS(psnr(a, b, 0.0), Error);
}

TEST_CASE("standardize") {
    const LatentTensor s = standardize(random_gaussian(Dims{5, 4, 3, 2}, 1));
    double m = 0;
    for (float v : s.values()) m += v;
    CHECK(m / s.size() == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
    CHECK(energy(s) / s.size() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK_THROWS_AS(standardize(LatentTensor(Dims{2, 2, 1, 1})), Error);
}

TEST_CASE("ssim of a single 8x8 window against a direct evaluation") {
    const LatentTensor t = random_gaussian(Dims{8, 8, 1, 2}, 2);
    const Frame a = frame_of(t, 0, 0), b = frame_of(t, 0, 1);
    CHECK(ssim_frame(a, a) == doctest::Approx(1.0));
    double ma = 0, mb = 0;
    for (int i = 0; i < 64; ++i) ma += a.px[i] / 64, mb += b.px[i] / 64;
    double va = 0, vb = 0, cv = 0;
    for (int i = 0; i < 64; ++i) {
        va += (a.px[i] - ma) * (a.px[i] - ma) / 64;
        vb += (b.px[i] - mb) * (b.px[i] - mb) / 64;
        cv += (a.px[i] - ma) * (b.px[i] - mb) / 64;
    }
    const double p = *std::max_element(b.px.begin(), b.px.end()) - *std::min_element(b.px.begin(), b.px.end());
    const double c1 = std::pow(0.01 * p, 2), c2 = std::pow(0.03 * p, 2);
    const double want = (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    CHECK(ssim_frame(a, b) == doctest::Approx(want));
    CHECK_THROWS_AS(ssim_frame(frame_of(random_gaussian(Dims{7, 8, 1, 1}, 1), 0, 0), a), Error);
}

TEST_CASE("ssim_video averages frames and degrades with noise") {
    SceneSpec s;
    s.prompt.verb = Verb::slide;
    const LatentTensor v = render(s);
    CHECK(ssim_video(v, v) == doctest::Approx(1.0));
    LatentTensor n = v;
    Rng r(3);
    for (auto& x : n.values()) x += float(0.3 * r.gaussian());
    CHECK(ssim_video(n, v) < 0.9);
}

TEST_CASE("spectral profile keeps the energy") {
    const LatentTensor t = random_gaussian(Dims{8, 6, 4, 2}, 4);
    const SpectralProfile p = spectral_profile(t);
    const double e = energy(t);
    CHECK(std::accumulate(p.radial_energy.begin(), p.radial_energy.end(), 0.0) == doctest::Approx(e));
    CHECK(std::accumulate(p.temporal_energy.begin(), p.temporal_energy.end(), 0.0) == doctest::Approx(e));
    CHECK(p.temporal.size() == 4);
    // Constant video: all energy at radius 0 and temporal index 0.
    LatentTensor c(Dims{8, 8, 4, 1}, std::vector<float>(256, 2.0f));
    const SpectralProfile q = spectral_profile(c);
    CHECK(q.radial_energy[0] == doctest::Approx(energy(c)));
    CHECK(q.radial_energy[1] == doctest::Approx(0.0).scale(1.0));
    CHECK(q.temporal_energy[0] == doctest::Approx(energy(c)));
}

TEST_CASE("band correlation and band mean") {
    SceneSpec s;
    const LatentTensor v = render(s);
    CHECK(band_correlation(v, v, 0.125) == doctest::Approx(1.0));
    LatentTensor scaled = v;
    for (auto& x : scaled.values()) x *= 3.0f;
    CHECK(band_correlation(scaled, v, 0.5) == doctest::Approx(1.0));
    CHECK_THROWS_AS(band_correlation(v, v, 0.0), Error);
    LatentTensor g(Dims{8, 8, 8, 1}, std::vector<float>(512, 0.0f));
    g.at(0, 0, 0, 0) = 1.0f;
    // band 1/8 of 8 keeps only index 0 on each axis
    CHECK(band_mean(g, 0.125) == doctest::Approx(1.0));
    CHECK(band_mean(g, 0.25) == doctest::Approx(1.0 / 8));
}

TEST_CASE("masked mse splits by threshold and rejects empty partitions") {
    const Dims d{2, 2, 1, 2};
    LatentTensor a(d, std::vector<float>(8, 0.0f));
    LatentTensor b(d, std::vector<float>{1, 1, 2, 2, 0, 0, 0, 0});
    GuidanceMask m = uniform_mask(2, 2, 1, 0.0f);
    m.values[0] = 1.0f;
    m.values[1] = 0.5f; // threshold is inclusive
    CHECK(masked_mse(a, b, m, Region::inside) == doctest::Approx((1 + 1 + 4 + 4) / 4.0));
    CHECK(masked_mse(a, b, m, Region::outside) == doctest::Approx(0.0));
    CHECK_THROWS_AS(masked_mse(a, b, uniform_mask(2, 2, 1, 0.0f), Region::inside), Error);
    CHECK_THROWS_AS(masked_mse(a, b, uniform_mask(2, 2, 1, 1.0f), Region::outside), Error);
    CHECK_THROWS_AS(masked_mse(a, b, uniform_mask(2, 1, 1, 1.0f), Region::outside), Error);
}
