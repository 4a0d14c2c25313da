// SPDX-License-Identifier: Apache-2.0
#include "dni/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace dni {

namespace {

using cd = std::complex<double>;

// The FFTW planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// In-place 3D transform over (L, H, W) for each of the C interleaved channels, scaled by 1/sqrt(N).
void fft3_inplace(std::vector<cd>& buf, const Dims& d, int sign) {
    const int n[3] = {int(d.l), int(d.h), int(d.w)};
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        // FFTW_UNALIGNED keeps codelet choice independent of where the buffer lands, so results are bit-stable.
        plan = fftw_plan_many_dft(3, n, int(d.c), p, nullptr, int(d.c), 1, p, nullptr, int(d.c), 1, sign,
                                  FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    if (!plan) throw Error(ErrorKind::numeric, "fftw plan creation failed for dims " + d.str());
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    const double scale = 1.0 / std::sqrt(double(d.w) * d.h * d.l);
    for (auto& v : buf) v *= scale;
}

// Guru-interface transform over the selected axes, remaining axes looped.
void fft_axes_inplace(std::vector<cd>& buf, const Dims& d, bool spatial, bool temporal, int sign) {
    const int sw = int(d.c), sh = int(d.w * d.c), sl = int(d.h * d.w * d.c);
    std::vector<fftw_iodim> tr, loop;
    (temporal ? tr : loop).push_back({int(d.l), sl, sl});
    (spatial ? tr : loop).push_back({int(d.h), sh, sh});
    (spatial ? tr : loop).push_back({int(d.w), sw, sw});
    loop.push_back({int(d.c), 1, 1});
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_guru_dft(int(tr.size()), tr.data(), int(loop.size()), loop.data(), p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    if (!plan) throw Error(ErrorKind::numeric, "fftw guru plan creation failed for dims " + d.str());
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    double n = 1.0;
    if (spatial) n *= double(d.w) * d.h;
    if (temporal) n *= d.l;
    const double scale = 1.0 / std::sqrt(n);
    for (auto& v : buf) v *= scale;
}

std::vector<cd> forward(const LatentTensor& t) {
    if (!t.dims().positive()) throw Error(ErrorKind::invalid_argument, "dft3: empty dims " + t.dims().str());
    std::vector<cd> buf(t.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = t.data()[i];
    fft3_inplace(buf, t.dims(), FFTW_FORWARD);
    return buf;
}

LatentTensor inverse_real(std::vector<cd> buf, const Dims& d) {
    fft3_inplace(buf, d, FFTW_BACKWARD);
    double worst = 0.0;
    LatentTensor out(d);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        worst = std::max(worst, std::abs(buf[i].imag()));
        out.data()[i] = float(buf[i].real());
    }
    if (!(worst <= kImagTolerance))
        throw Error(ErrorKind::numeric, "complex residual: max |imag| = " + std::to_string(worst));
    return out;
}

std::size_t mirror_index(const Dims& d, std::uint32_t x, std::uint32_t y, std::uint32_t l, std::uint32_t c) {
    const std::uint32_t mx = (d.w - x) % d.w, my = (d.h - y) % d.h, ml = (d.l - l) % d.l;
    return ((std::size_t(ml) * d.h + my) * d.w + mx) * d.c + c;
}

} // namespace

Spectrum dft3(const LatentTensor& t) {
    if (!t.all_finite()) throw Error(ErrorKind::non_finite, "dft3: non-finite input");
    const auto buf = forward(t);
    Spectrum s{t.dims(), std::vector<std::complex<float>>(buf.size())};
    for (std::size_t i = 0; i < buf.size(); ++i) s.bins[i] = std::complex<float>(buf[i]);
    return s;
}

LatentTensor idft3(const Spectrum& s) {
    if (s.bins.size() != s.dims.count() || !s.dims.positive())
        throw Error(ErrorKind::dims_mismatch, "idft3: spectrum size does not match dims " + s.dims.str());
    std::vector<cd> buf(s.bins.begin(), s.bins.end());
    return inverse_real(std::move(buf), s.dims);
}

std::vector<double> magnitude_spectrum(const LatentTensor& t) {
    const auto buf = forward(t);
    std::vector<double> mag(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) mag[i] = std::abs(buf[i]);
    return mag;
}

std::vector<std::complex<double>> dft_axes(const LatentTensor& t, bool spatial, bool temporal) {
    if (!t.dims().positive()) throw Error(ErrorKind::invalid_argument, "dft_axes: empty dims " + t.dims().str());
    std::vector<cd> buf(t.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = t.data()[i];
    if (spatial || temporal) fft_axes_inplace(buf, t.dims(), spatial, temporal, FFTW_FORWARD);
    return buf;
}

SpectralFilter build_asf(const LatentTensor& z0, AsfNorm norm) {
    const Dims& d = z0.dims();
    if (!z0.all_finite()) throw Error(ErrorKind::non_finite, "build_asf: non-finite z0");
    for (std::uint32_t c = 0; c < d.c; ++c) {
        const float first = z0.data()[c];
        bool constant = true;
        for (std::size_t i = c; i < z0.size() && constant; i += d.c) constant = z0.data()[i] == first;
        if (constant) throw Error(ErrorKind::degenerate, "degenerate spectrum: channel " + std::to_string(c) + " is constant");
    }
    const auto mag = magnitude_spectrum(z0);

    // Mirror-average first so the min-max endpoints survive symmetrization exactly.
    std::vector<double> sym(mag.size());
    for (std::uint32_t l = 0; l < d.l; ++l)
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t x = 0; x < d.w; ++x)
                for (std::uint32_t c = 0; c < d.c; ++c) {
                    const std::size_t i = z0.index(x, y, l, c);
                    sym[i] = 0.5 * (mag[i] + mag[mirror_index(d, x, y, l, c)]);
                }

    std::vector<double> lo(d.c, INFINITY), hi(d.c, -INFINITY);
    for (std::size_t i = 0; i < sym.size(); ++i) {
        const std::size_t c = norm == AsfNorm::per_channel ? i % d.c : 0;
        lo[c] = std::min(lo[c], sym[i]);
        hi[c] = std::max(hi[c], sym[i]);
    }
    SpectralFilter f{FilterKind::asf, 0.0, LatentTensor(d)};
    for (std::size_t i = 0; i < sym.size(); ++i) {
        const std::size_t c = norm == AsfNorm::per_channel ? i % d.c : 0;
        const double range = hi[c] - lo[c];
        if (!(range > 0.0)) throw Error(ErrorKind::degenerate, "degenerate spectrum: flat magnitude in channel " + std::to_string(c));
        f.gains.data()[i] = float((sym[i] - lo[c]) / range);
    }
    return f;
}

SpectralFilter build_glpf(Dims d, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::invalid_argument, "build_glpf: sigma must be positive");
    if (!d.positive()) throw Error(ErrorKind::invalid_argument, "build_glpf: empty dims " + d.str());
    SpectralFilter f{FilterKind::glpf, sigma, LatentTensor(d)};
    for (std::uint32_t l = 0; l < d.l; ++l)
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t x = 0; x < d.w; ++x) {
                const double fx = signed_freq(x, d.w), fy = signed_freq(y, d.h);
                const float g = float(std::exp(-(fx * fx + fy * fy) / (2.0 * sigma * sigma)));
                for (std::uint32_t c = 0; c < d.c; ++c) f.gains.at(x, y, l, c) = g;
            }
    return f;
}

SpectralFilter filter_ones(Dims d) { return SpectralFilter{FilterKind::ones, 0.0, LatentTensor(d, 1.0f)}; }

SpectralFilter complement(const SpectralFilter& f) {
    SpectralFilter out{FilterKind::custom, 0.0, f.gains};
    for (auto& g : out.gains.values()) g = 1.0f - g;
    return out;
}

LatentTensor apply_filter(const LatentTensor& z, const SpectralFilter& f) {
    require_same_dims(z.dims(), f.dims(), "apply_filter");
    if (!z.all_finite()) throw Error(ErrorKind::non_finite, "apply_filter: non-finite input");
    auto buf = forward(z);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= double(f.gains.data()[i]);
    return inverse_real(std::move(buf), z.dims());
}

std::pair<LatentTensor, LatentTensor> disentangle(const LatentTensor& z, const SpectralFilter& f) {
    require_same_dims(z.dims(), f.dims(), "disentangle");
    if (!z.all_finite()) throw Error(ErrorKind::non_finite, "disentangle: non-finite input");
    const auto spec = forward(z);
    auto v = spec, g = spec;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double gain = f.gains.data()[i];
        v[i] *= gain;
        g[i] *= 1.0 - gain;
    }
    return {inverse_real(std::move(v), z.dims()), inverse_real(std::move(g), z.dims())};
}

} // namespace dni
