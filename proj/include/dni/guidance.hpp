// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dni/scene.hpp"
#include "dni/tensor.hpp"

namespace dni {

struct AttentionMap {
    std::uint32_t w = 0, h = 0, l = 0;
    std::vector<float> values; // (L, H, W)
    std::string word;
    WordCategory category = WordCategory::rigid;
    std::string block;      // "down" or "mid" for maps captured from the denoiser
    bool degenerate = false; // raw map was constant

    float at(std::uint32_t x, std::uint32_t y, std::uint32_t f) const { return values[(std::size_t(f) * h + y) * w + x]; }
    float& at(std::uint32_t x, std::uint32_t y, std::uint32_t f) { return values[(std::size_t(f) * h + y) * w + x]; }
};

struct GuidanceMask {
    std::uint32_t w = 0, h = 0, l = 0;
    std::vector<float> values; // (L, H, W), in [0, 1]

    float at(std::uint32_t x, std::uint32_t y, std::uint32_t f) const { return values[(std::size_t(f) * h + y) * w + x]; }
};

GuidanceMask uniform_mask(std::uint32_t w, std::uint32_t h, std::uint32_t l, float v);

// Per-map min-max to [0, 1]; a constant map becomes zeros and is flagged degenerate.
void normalize_map(AttentionMap& m);

AttentionMap pool_maps(const std::vector<AttentionMap>& maps, WordCategory category);
AttentionMap resize_map(const AttentionMap& m, std::uint32_t w, std::uint32_t h);
GuidanceMask combine_masks(const AttentionMap* m_rgd, const AttentionMap* m_nonrgd, double alpha, double beta);

// Pool each category, resize to (w, h) and combine. Empty categories are absent.
GuidanceMask build_guidance(const std::vector<AttentionMap>& maps, std::uint32_t w, std::uint32_t h, double alpha, double beta);

// Gaussian blob on the scene's object: 16x16 for rigid words, 8x8 and wider for non-rigid ones.
AttentionMap synth_attention(const SceneSpec& scene, const std::string& word);
inline constexpr double kSynthRigidSigma = 0.35;    // times object radius, in latent pixels
inline constexpr double kSynthNonRigidSigma = 1.0;

// Sidecar manifest: one map per line, whitespace separated key=value pairs
// (file, word, category, block). '#' starts a comment. Relative files resolve against the manifest.
std::vector<AttentionMap> read_maps_manifest(const std::string& path);
void write_maps_manifest(const std::vector<AttentionMap>& maps, const std::string& path, const std::string& stem);

AttentionMap map_from_tensor(const LatentTensor& t, const std::string& word, WordCategory cat, const std::string& block);
LatentTensor map_to_tensor(const AttentionMap& m);

std::string category_name(WordCategory c);
WordCategory parse_category(const std::string& s);

} // namespace dni
