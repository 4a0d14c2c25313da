// SPDX-License-Identifier: Apache-2.0
#include "dni/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dni {

std::string Dims::str() const {
    std::ostringstream os;
    os << "(" << w << "," << h << "," << l << "," << c << ")";
    return os.str();
}

LatentTensor::LatentTensor(Dims d, float fill) : dims_(d), data_(d.count(), fill) {}

LatentTensor::LatentTensor(Dims d, std::vector<float> data) : dims_(d), data_(std::move(data)) {
    if (data_.size() != d.count())
        throw Error(ErrorKind::dims_mismatch, "data length " + std::to_string(data_.size()) + " does not match dims " + d.str());
}

bool LatentTensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!(a == b)) throw Error(ErrorKind::dims_mismatch, std::string(what) + ": dims " + a.str() + " vs " + b.str());
}

double l2_norm(const LatentTensor& t) {
    double s = 0.0;
    for (float v : t.values()) s += double(v) * v;
    return std::sqrt(s);
}

double rel_l2(const LatentTensor& a, const LatentTensor& b) {
    require_same_dims(a.dims(), b.dims(), "rel_l2");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a.data()[i]) - b.data()[i];
        num += d * d;
        den += double(b.data()[i]) * b.data()[i];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
    return std::sqrt(num / den);
}

namespace {

std::uint8_t* put_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) *p++ = std::uint8_t(v >> (8 * i));
    return p;
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

} // namespace

std::vector<std::uint8_t> encode_tensor(const LatentTensor& t) {
    if (!t.dims().positive()) throw Error(ErrorKind::invalid_argument, "cannot encode tensor with dims " + t.dims().str());
    if (!t.all_finite()) throw Error(ErrorKind::non_finite, "non-finite value in tensor");
    std::vector<std::uint8_t> out(kDnitHeaderBytes + 4 * t.size());
    std::uint8_t* p = out.data();
    std::memcpy(p, "DNIT", 4);
    p[4] = 1; // version
    p[5] = 0; // dtype f32
    p = put_u32(p + 6, t.dims().w);
    p = put_u32(p, t.dims().h);
    p = put_u32(p, t.dims().l);
    p = put_u32(p, t.dims().c);
    for (float v : t.values()) p = put_u32(p, std::bit_cast<std::uint32_t>(v));
    return out;
}

LatentTensor decode_tensor(const std::uint8_t* p, std::size_t n, const std::string& origin) {
    if (n < 4 || std::memcmp(p, "DNIT", 4) != 0) throw Error(ErrorKind::bad_magic, origin + ": bad magic");
    if (n < kDnitHeaderBytes) throw Error(ErrorKind::truncated, origin + ": truncated header");
    if (p[4] != 1) throw Error(ErrorKind::unsupported, origin + ": unsupported version " + std::to_string(p[4]));
    if (p[5] != 0) throw Error(ErrorKind::unsupported, origin + ": unsupported dtype " + std::to_string(p[5]));
    Dims d{get_u32(p + 6), get_u32(p + 10), get_u32(p + 14), get_u32(p + 18)};
    if (!d.positive()) throw Error(ErrorKind::dims_mismatch, origin + ": zero dimension in " + d.str());
    const std::size_t payload = n - kDnitHeaderBytes;
    // Guard the product against overflow before comparing byte counts.
    const long double expect = (long double)d.w * d.h * d.l * d.c * 4.0L;
    if ((long double)payload < expect) throw Error(ErrorKind::truncated, origin + ": truncated payload for dims " + d.str());
    if ((long double)payload > expect)
        throw Error(ErrorKind::dims_mismatch, origin + ": payload of " + std::to_string(payload) + " bytes does not match dims " + d.str());
    std::vector<float> data(d.count());
    const std::uint8_t* q = p + kDnitHeaderBytes;
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(get_u32(q + 4 * i));
    LatentTensor t(d, std::move(data));
    if (!t.all_finite()) throw Error(ErrorKind::non_finite, origin + ": non-finite value in payload");
    return t;
}

void write_tensor(const LatentTensor& t, const std::string& path) {
    const auto bytes = encode_tensor(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::io, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw Error(ErrorKind::io, "write failed: " + path);
}

LatentTensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw Error(ErrorKind::io, "read failed: " + path);
    return decode_tensor(bytes.data(), bytes.size(), path);
}

std::uint64_t Rng::next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform_open0() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

double Rng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

std::uint32_t Rng::below(std::uint32_t n) {
    if (n == 0) throw Error(ErrorKind::invalid_argument, "Rng::below(0)");
    const std::uint64_t limit = (~std::uint64_t(0) / n) * n;
    std::uint64_t v;
    do v = next_u64();
    while (v >= limit);
    return std::uint32_t(v % n);
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open0();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
}

LatentTensor random_gaussian(Dims d, Rng& rng) {
    if (!d.positive()) throw Error(ErrorKind::invalid_argument, "random_gaussian: zero dimension in " + d.str());
    LatentTensor t(d);
    for (auto& v : t.values()) v = float(rng.gaussian());
    return t;
}

LatentTensor random_gaussian(Dims d, std::uint64_t seed) {
    Rng rng(seed);
    return random_gaussian(d, rng);
}

} // namespace dni
