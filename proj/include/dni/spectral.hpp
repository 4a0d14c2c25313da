// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "dni/tensor.hpp"

namespace dni {

// Complex spectrum in the same (L, H, W, C) layout as LatentTensor, DC at index 0, unshifted.
struct Spectrum {
    Dims dims;
    std::vector<std::complex<float>> bins;
};

enum class FilterKind { asf, glpf, ones, custom };
enum class AsfNorm { per_channel, global };

struct SpectralFilter {
    FilterKind kind = FilterKind::custom;
    double sigma = 0.0; // glpf only
    LatentTensor gains;

    const Dims& dims() const { return gains.dims(); }
};

// Orthonormal 3D DFT over (W, H, L), independently per channel.
Spectrum dft3(const LatentTensor& t);
// Inverse of dft3. Imaginary residuals above kImagTolerance raise "complex residual".
LatentTensor idft3(const Spectrum& s);
inline constexpr double kImagTolerance = 1e-4;

SpectralFilter build_asf(const LatentTensor& z0, AsfNorm norm = AsfNorm::per_channel);
SpectralFilter build_glpf(Dims d, double sigma);
SpectralFilter filter_ones(Dims d);
SpectralFilter complement(const SpectralFilter& f);

LatentTensor apply_filter(const LatentTensor& z, const SpectralFilter& f);
// Visual branch (F) and Gaussian branch (1 - F) of z.
std::pair<LatentTensor, LatentTensor> disentangle(const LatentTensor& z, const SpectralFilter& f);

// Signed frequency of unshifted index i on an axis of length n, in [-n/2, n/2).
inline int signed_freq(std::uint32_t i, std::uint32_t n) { return 2 * i < n ? int(i) : int(i) - int(n); }

// Magnitudes |dft3(t)| in double precision, same layout as t.
std::vector<double> magnitude_spectrum(const LatentTensor& t);

// Orthonormal DFT over a subset of axes: spatial = (W, H) per frame, temporal = L per pixel.
std::vector<std::complex<double>> dft_axes(const LatentTensor& t, bool spatial, bool temporal);

} // namespace dni
