// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dni {

enum class ErrorKind {
    invalid_argument,
    dims_mismatch,
    non_finite,
    io,
    bad_magic,
    truncated,
    unsupported,
    degenerate,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Extents of a latent video. Storage order is frame-major (L, H, W, C).
struct Dims {
    std::uint32_t w = 0, h = 0, l = 0, c = 0;

    std::size_t count() const { return std::size_t(w) * h * l * c; }
    std::size_t frame() const { return std::size_t(w) * h; }
    bool positive() const { return w && h && l && c; }
    std::string str() const;
    friend bool operator==(const Dims&, const Dims&) = default;
};

class LatentTensor {
public:
    LatentTensor() = default;
    explicit LatentTensor(Dims d, float fill = 0.0f);
    LatentTensor(Dims d, std::vector<float> data);

    const Dims& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t l, std::uint32_t c) const {
        return ((std::size_t(l) * dims_.h + y) * dims_.w + x) * dims_.c + c;
    }
    float& at(std::uint32_t x, std::uint32_t y, std::uint32_t l, std::uint32_t c) { return data_[index(x, y, l, c)]; }
    float at(std::uint32_t x, std::uint32_t y, std::uint32_t l, std::uint32_t c) const { return data_[index(x, y, l, c)]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    bool all_finite() const;

private:
    Dims dims_;
    std::vector<float> data_;
};

// Relative L2 distance ||a - b|| / ||b||, accumulated in double.
double rel_l2(const LatentTensor& a, const LatentTensor& b);
double l2_norm(const LatentTensor& t);
void require_same_dims(const Dims& a, const Dims& b, const char* what);

// DNIT v1: "DNIT", version byte, dtype byte (0 = f32-LE), 4 x u32-LE dims (W,H,L,C), payload.
inline constexpr std::size_t kDnitHeaderBytes = 4 + 1 + 1 + 16;

void write_tensor(const LatentTensor& t, const std::string& path);
LatentTensor read_tensor(const std::string& path);
std::vector<std::uint8_t> encode_tensor(const LatentTensor& t);
LatentTensor decode_tensor(const std::uint8_t* bytes, std::size_t n, const std::string& origin);

// SplitMix64 stream. Gaussians come from pairwise Box-Muller, cached second draw.
class Rng {
public:
    static constexpr int kVersion = 1;

    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in (0, 1], 53 bits.
    double uniform_open0();
    // Uniform in [0, 1), 53 bits.
    double uniform();
    double gaussian();
    std::uint32_t below(std::uint32_t n);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

LatentTensor random_gaussian(Dims d, Rng& rng);
LatentTensor random_gaussian(Dims d, std::uint64_t seed);

} // namespace dni
