// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dni/tensor.hpp"

namespace dni {

enum class Shape : std::uint8_t { square, circle, diamond };
enum class Color : std::uint8_t { red, green, blue, yellow };
enum class Verb : std::uint8_t { static_, slide, bounce, jump };
enum class Style : std::uint8_t { plain, dusk };

enum class WordCategory : std::uint8_t { rigid, non_rigid };

// Four fixed slots: shape noun, color adjective, motion verb, style noun.
inline constexpr int kPromptSlots = 4;
inline constexpr int kVocabSize = 3 + 4 + 4 + 2;
inline constexpr int kVerbSlot = 2;

struct ToyPrompt {
    Shape shape = Shape::square;
    Color color = Color::red;
    Verb verb = Verb::static_;
    Style style = Style::plain;

    std::array<int, kPromptSlots> tokens() const;
    std::string text() const;
    friend bool operator==(const ToyPrompt&, const ToyPrompt&) = default;
};

const std::string& token_word(int token);
int token_from_word(const std::string& word);
WordCategory token_category(int token);

// Words in any order, separated by spaces or commas, one per slot.
ToyPrompt parse_prompt(const std::string& text);

struct SceneSpec {
    ToyPrompt prompt;
    Dims dims{32, 32, 8, 3};
    double cx = 16.0, cy = 16.0; // path anchor, pixel units (pixel centres at i + 0.5)
    double radius = 5.2;
    double texture = 0.1; // std of the static background texture
    std::uint64_t texture_seed = 0;

    std::vector<std::pair<double, double>> trajectory() const;
};

// Canonical centre path of a verb anchored at (cx, cy). Motion amplitudes scale with w / 16.
std::vector<std::pair<double, double>> verb_trajectory(Verb v, double cx, double cy, std::uint32_t w, std::uint32_t frames);

std::array<float, 3> color_rgb(Color c);

LatentTensor render(const SceneSpec& s);

struct DatasetConfig {
    Dims dims{32, 32, 8, 3};
    double jitter = 1.0;  // anchor offset range, in units of w / 16 pixels
    double texture = 0.1;
};

struct Example {
    SceneSpec scene;
    LatentTensor video;
};

SceneSpec random_scene(Rng& rng, const DatasetConfig& cfg);
std::vector<Example> gen_dataset(std::uint64_t seed, std::size_t n, const DatasetConfig& cfg);

// Cells within the object's box plus a margin (scaled by w / 16), per frame. 1 inside, 0 outside.
struct GuidanceMask;
GuidanceMask object_mask(const SceneSpec& s, double margin = 1.0);

// Per-frame centroid of pixels close to the object colour.
std::vector<std::pair<double, double>> centroid_trajectory(const LatentTensor& video, Color c);
inline constexpr double kCentroidColorRadius = 0.8;
double trajectory_distance(const std::vector<std::pair<double, double>>& a, const std::vector<std::pair<double, double>>& b);

} // namespace dni
