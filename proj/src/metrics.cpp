// SPDX-License-Identifier: Apache-2.0
#include "dni/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dni/spectral.hpp"

namespace dni {

LatentTensor standardize(const LatentTensor& t) {
    double s = 0.0, ss = 0.0;
    for (float v : t.values()) s += v;
    const double mean = s / double(t.size());
    for (float v : t.values()) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(t.size()));
    if (!(sd > 0.0)) throw Error(ErrorKind::degenerate, "standardize: zero variance");
    LatentTensor out(t.dims());
    for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = float((t.data()[i] - mean) / sd);
    return out;
}

double mse(const LatentTensor& a, const LatentTensor& b) {
    require_same_dims(a.dims(), b.dims(), "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a.data()[i]) - b.data()[i];
        s += d * d;
    }
    return s / double(a.size());
}

double psnr(const LatentTensor& a, const LatentTensor& b, std::optional<double> peak) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    double p;
    if (peak) {
        p = *peak;
    } else {
        const auto [lo, hi] = std::minmax_element(b.values().begin(), b.values().end());
        p = double(*hi) - *lo;
    }
    if (!(p > 0.0)) throw Error(ErrorKind::invalid_argument, "psnr: peak must be positive");
    return 10.0 * std::log10(p * p / m);
}

Frame frame_of(const LatentTensor& t, std::uint32_t l, std::uint32_t c) {
    const Dims& d = t.dims();
    if (l >= d.l || c >= d.c) throw Error(ErrorKind::invalid_argument, "frame_of: index out of range");
    Frame f{d.w, d.h, std::vector<double>(d.frame())};
    for (std::uint32_t y = 0; y < d.h; ++y)
        for (std::uint32_t x = 0; x < d.w; ++x) f.px[std::size_t(y) * d.w + x] = t.at(x, y, l, c);
    return f;
}

double ssim_frame(const Frame& a, const Frame& b, std::optional<double> peak) {
    if (a.w != b.w || a.h != b.h) throw Error(ErrorKind::dims_mismatch, "ssim_frame: frame sizes differ");
    if (a.w < kSsimWindow || a.h < kSsimWindow)
        throw Error(ErrorKind::invalid_argument, "ssim_frame: frame smaller than the 8x8 window");
    double p;
    if (peak) {
        p = *peak;
    } else {
        const auto [lo, hi] = std::minmax_element(b.px.begin(), b.px.end());
        p = *hi - *lo;
        if (!(p > 0.0)) p = 1.0;
    }
    const double c1 = (0.01 * p) * (0.01 * p), c2 = (0.03 * p) * (0.03 * p);
    const double n = double(kSsimWindow * kSsimWindow);
    double total = 0.0;
    std::size_t windows = 0;
    for (std::uint32_t y0 = 0; y0 + kSsimWindow <= a.h; ++y0)
        for (std::uint32_t x0 = 0; x0 + kSsimWindow <= a.w; ++x0) {
            double sa = 0, sb = 0;
            for (std::uint32_t y = y0; y < y0 + kSsimWindow; ++y)
                for (std::uint32_t x = x0; x < x0 + kSsimWindow; ++x) {
                    sa += a.px[std::size_t(y) * a.w + x];
                    sb += b.px[std::size_t(y) * a.w + x];
                }
            const double ma = sa / n, mb = sb / n;
            double va = 0, vb = 0, cov = 0;
            for (std::uint32_t y = y0; y < y0 + kSsimWindow; ++y)
                for (std::uint32_t x = x0; x < x0 + kSsimWindow; ++x) {
                    const double da = a.px[std::size_t(y) * a.w + x] - ma, db = b.px[std::size_t(y) * a.w + x] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    return total / double(windows);
}

double ssim_video(const LatentTensor& a, const LatentTensor& b) {
    require_same_dims(a.dims(), b.dims(), "ssim_video");
    double s = 0.0;
    for (std::uint32_t l = 0; l < a.dims().l; ++l)
        for (std::uint32_t c = 0; c < a.dims().c; ++c) s += ssim_frame(frame_of(a, l, c), frame_of(b, l, c));
    return s / double(a.dims().l * a.dims().c);
}

SpectralProfile spectral_profile(const LatentTensor& t) {
    const Dims& d = t.dims();
    SpectralProfile p;
    const auto s2 = dft_axes(t, true, false);
    const auto s1 = dft_axes(t, false, true);

    const double rmax = std::sqrt(std::pow(d.w / 2.0, 2) + std::pow(d.h / 2.0, 2));
    const std::size_t nr = std::size_t(std::lround(rmax)) + 1;
    p.radial.assign(nr, 0.0);
    p.radial_energy.assign(nr, 0.0);
    std::vector<std::size_t> counts(nr, 0);
    for (std::uint32_t l = 0; l < d.l; ++l)
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t x = 0; x < d.w; ++x) {
                const double fx = signed_freq(x, d.w), fy = signed_freq(y, d.h);
                const std::size_t r = std::size_t(std::lround(std::sqrt(fx * fx + fy * fy)));
                for (std::uint32_t c = 0; c < d.c; ++c) {
                    const auto v = s2[t.index(x, y, l, c)];
                    p.radial[r] += std::abs(v);
                    p.radial_energy[r] += std::norm(v);
                    ++counts[r];
                }
            }
    for (std::size_t r = 0; r < nr; ++r)
        if (counts[r]) p.radial[r] /= double(counts[r]);

    p.temporal.assign(d.l, 0.0);
    p.temporal_energy.assign(d.l, 0.0);
    for (std::size_t i = 0; i < s1.size(); ++i) {
        const std::size_t l = i / (std::size_t(d.h) * d.w * d.c);
        p.temporal[l] += std::abs(s1[i]);
        p.temporal_energy[l] += std::norm(s1[i]);
    }
    for (auto& v : p.temporal) v /= double(d.w) * d.h * d.c;
    return p;
}

namespace {

bool in_band(const Dims& d, std::uint32_t x, std::uint32_t y, std::uint32_t l, double band) {
    return x < band * d.w && y < band * d.h && l < band * d.l;
}

} // namespace

double band_correlation(const LatentTensor& x, const LatentTensor& ref, double band) {
    require_same_dims(x.dims(), ref.dims(), "band_correlation");
    if (!(band > 0.0 && band <= 1.0)) throw Error(ErrorKind::invalid_argument, "band_correlation: band must lie in (0,1]");
    const Dims& d = x.dims();
    const auto mx = magnitude_spectrum(x), mr = magnitude_spectrum(ref);
    std::vector<double> a, b;
    for (std::uint32_t l = 0; l < d.l; ++l)
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t xx = 0; xx < d.w; ++xx) {
                if (!in_band(d, xx, y, l, band)) continue;
                for (std::uint32_t c = 0; c < d.c; ++c) {
                    a.push_back(mx[x.index(xx, y, l, c)]);
                    b.push_back(mr[x.index(xx, y, l, c)]);
                }
            }
    const double n = double(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(ErrorKind::degenerate, "band_correlation: zero variance in band");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double band_mean(const LatentTensor& gains, double band) {
    if (!(band > 0.0 && band <= 1.0)) throw Error(ErrorKind::invalid_argument, "band_mean: band must lie in (0,1]");
    const Dims& d = gains.dims();
    double s = 0.0;
    std::size_t n = 0;
    for (std::uint32_t l = 0; l < d.l; ++l)
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t x = 0; x < d.w; ++x)
                if (in_band(d, x, y, l, band))
                    for (std::uint32_t c = 0; c < d.c; ++c, ++n) s += gains.at(x, y, l, c);
    return s / double(n);
}

double masked_mse(const LatentTensor& a, const LatentTensor& b, const GuidanceMask& m, Region region) {
    require_same_dims(a.dims(), b.dims(), "masked_mse");
    const Dims& d = a.dims();
    if (m.w != d.w || m.h != d.h || m.l != d.l) throw Error(ErrorKind::dims_mismatch, "masked_mse: mask does not match " + d.str());
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t cell = 0; cell < m.values.size(); ++cell) {
        const bool inside = m.values[cell] >= kMaskThreshold;
        if (inside != (region == Region::inside)) continue;
        for (std::uint32_t c = 0; c < d.c; ++c, ++n) {
            const double e = double(a.data()[cell * d.c + c]) - b.data()[cell * d.c + c];
            s += e * e;
        }
    }
    if (n == 0) throw Error(ErrorKind::invalid_argument, "empty partition");
    return s / double(n);
}

} // namespace dni
