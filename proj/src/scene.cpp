// SPDX-License-Identifier: Apache-2.0
#include "dni/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dni/guidance.hpp"

namespace dni {

namespace {

const std::array<std::string, kVocabSize> kWords = {"square", "circle", "diamond", "red",  "green", "blue", "yellow",
                                                     "static", "slide",  "bounce",  "jump", "plain", "dusk"};
constexpr int kShapeBase = 0, kColorBase = 3, kVerbBase = 7, kStyleBase = 11;

int slot_of(int token) {
    if (token < kColorBase) return 0;
    if (token < kVerbBase) return 1;
    if (token < kStyleBase) return 2;
    return 3;
}

} // namespace

std::array<int, kPromptSlots> ToyPrompt::tokens() const {
    return {kShapeBase + int(shape), kColorBase + int(color), kVerbBase + int(verb), kStyleBase + int(style)};
}

std::string ToyPrompt::text() const {
    const auto t = tokens();
    return kWords[t[1]] + " " + kWords[t[0]] + " " + kWords[t[2]] + " " + kWords[t[3]];
}

const std::string& token_word(int token) {
    if (token < 0 || token >= kVocabSize) throw Error(ErrorKind::invalid_argument, "token id out of range: " + std::to_string(token));
    return kWords[token];
}

int token_from_word(const std::string& word) {
    for (int i = 0; i < kVocabSize; ++i)
        if (kWords[i] == word) return i;
    throw Error(ErrorKind::invalid_argument, "unknown word '" + word + "'");
}

WordCategory token_category(int token) { return slot_of(token) == kVerbSlot ? WordCategory::non_rigid : WordCategory::rigid; }

ToyPrompt parse_prompt(const std::string& text) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    std::array<int, kPromptSlots> slots{-1, -1, -1, -1};
    std::string w;
    while (is >> w) {
        const int t = token_from_word(w);
        int& slot = slots[slot_of(t)];
        if (slot >= 0) throw Error(ErrorKind::invalid_argument, "prompt '" + text + "' fills a slot twice");
        slot = t;
    }
    for (int v : slots)
        if (v < 0) throw Error(ErrorKind::invalid_argument, "prompt '" + text + "' needs a shape, color, verb and style");
    return ToyPrompt{Shape(slots[0] - kShapeBase), Color(slots[1] - kColorBase), Verb(slots[2] - kVerbBase), Style(slots[3] - kStyleBase)};
}

std::vector<std::pair<double, double>> verb_trajectory(Verb v, double cx, double cy, std::uint32_t w, std::uint32_t frames) {
    const double sc = w / 16.0;
    std::vector<std::pair<double, double>> out;
    for (std::uint32_t l = 0; l < frames; ++l) {
        const double u = frames > 1 ? double(l) / (frames - 1) : 0.0;
        switch (v) {
        case Verb::static_: out.emplace_back(cx, cy); break;
        case Verb::slide: out.emplace_back(cx + sc * (8 * u - 4), cy); break;
        case Verb::bounce: out.emplace_back(cx, cy - sc * 3.5 * std::abs(std::sin(2 * std::numbers::pi * u))); break;
        // A forward hop: same horizontal sweep as slide, parabolic lift peaking mid-clip.
        case Verb::jump: out.emplace_back(cx + sc * (8 * u - 4), cy + sc * (2 - 24 * u * (1 - u))); break;
        }
    }
    return out;
}

std::vector<std::pair<double, double>> SceneSpec::trajectory() const { return verb_trajectory(prompt.verb, cx, cy, dims.w, dims.l); }

std::array<float, 3> color_rgb(Color c) {
    switch (c) {
    case Color::red: return {0.9f, -0.7f, -0.7f};
    case Color::green: return {-0.7f, 0.9f, -0.7f};
    case Color::blue: return {-0.7f, -0.7f, 0.9f};
    case Color::yellow: return {0.9f, 0.9f, -0.7f};
    }
    return {0, 0, 0};
}

LatentTensor render(const SceneSpec& s) {
    const Dims& d = s.dims;
    if (d.c != 3 || !d.positive()) throw Error(ErrorKind::invalid_argument, "render: scenes need 3 channels, got " + d.str());
    LatentTensor v(d);
    // Static zero-mean texture shared by every frame.
    std::vector<float> tex(std::size_t(d.h) * d.w * 3);
    Rng rng(s.texture_seed);
    for (auto& t : tex) t = float(s.texture * rng.gaussian());
    const auto fg = color_rgb(s.prompt.color);
    const auto path = s.trajectory();
    for (std::uint32_t l = 0; l < d.l; ++l) {
        const auto [px, py] = path[l];
        for (std::uint32_t y = 0; y < d.h; ++y) {
            const double yy = ((y + 0.5) / d.h - 0.5) * 2.0;
            const std::array<double, 3> bg =
                s.prompt.style == Style::plain ? std::array<double, 3>{0, 0, 0} : std::array<double, 3>{0.4 * yy, 0.0, -0.4 * yy};
            for (std::uint32_t x = 0; x < d.w; ++x) {
                const double dx = x + 0.5 - px, dy = y + 0.5 - py;
                double dist;
                switch (s.prompt.shape) {
                case Shape::square: dist = std::max(std::abs(dx), std::abs(dy)); break;
                case Shape::circle: dist = std::hypot(dx, dy); break;
                default: dist = (std::abs(dx) + std::abs(dy)) / 1.3; break;
                }
                const double cov = std::clamp(s.radius - dist + 0.5, 0.0, 1.0);
                for (int c = 0; c < 3; ++c) {
                    const double b = bg[c] + tex[(std::size_t(y) * d.w + x) * 3 + c];
                    v.at(x, y, l, c) = float(b * (1 - cov) + fg[c] * cov);
                }
            }
        }
    }
    return v;
}

SceneSpec random_scene(Rng& rng, const DatasetConfig& cfg) {
    SceneSpec s;
    s.dims = cfg.dims;
    s.texture = cfg.texture;
    const double sc = cfg.dims.w / 16.0;
    s.prompt.shape = Shape(rng.below(3));
    s.prompt.color = Color(rng.below(4));
    s.prompt.verb = Verb(rng.below(4));
    s.prompt.style = Style(rng.below(2));
    s.cx = cfg.dims.w / 2.0 + sc * cfg.jitter * (2 * rng.uniform() - 1);
    s.cy = cfg.dims.h / 2.0 + sc * cfg.jitter * (2 * rng.uniform() - 1);
    s.radius = sc * (2.2 + 0.8 * rng.uniform());
    s.texture_seed = rng.next_u64();
    return s;
}

std::vector<Example> gen_dataset(std::uint64_t seed, std::size_t n, const DatasetConfig& cfg) {
    if (n == 0) throw Error(ErrorKind::invalid_argument, "gen_dataset: n must be at least 1");
    if (cfg.dims.c != 3) throw Error(ErrorKind::invalid_argument, "gen_dataset: toy videos have 3 channels");
    if (cfg.dims.w % 8 || cfg.dims.h % 8) throw Error(ErrorKind::invalid_argument, "gen_dataset: width and height must be multiples of 8");
    Rng rng(seed);
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SceneSpec s = random_scene(rng, cfg);
        out.push_back({s, render(s)});
    }
    return out;
}

GuidanceMask object_mask(const SceneSpec& s, double margin) {
    const Dims& d = s.dims;
    GuidanceMask m = uniform_mask(d.w, d.h, d.l, 0.0f);
    const double reach = s.radius + margin * d.w / 16.0;
    const auto path = s.trajectory();
    for (std::uint32_t l = 0; l < d.l; ++l)
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t x = 0; x < d.w; ++x)
                if (std::abs(x + 0.5 - path[l].first) <= reach && std::abs(y + 0.5 - path[l].second) <= reach)
                    m.values[(std::size_t(l) * d.h + y) * d.w + x] = 1.0f;
    return m;
}

std::vector<std::pair<double, double>> centroid_trajectory(const LatentTensor& v, Color c) {
    const Dims& d = v.dims();
    const auto fg = color_rgb(c);
    std::vector<std::pair<double, double>> out;
    for (std::uint32_t l = 0; l < d.l; ++l) {
        double sw = 0, sx = 0, sy = 0;
        for (std::uint32_t y = 0; y < d.h; ++y)
            for (std::uint32_t x = 0; x < d.w; ++x) {
                double dist2 = 0;
                for (std::uint32_t k = 0; k < 3; ++k) {
                    const double e = v.at(x, y, l, k) - fg[k];
                    dist2 += e * e;
                }
                const double w = std::max(0.0, 1.0 - std::sqrt(dist2) / kCentroidColorRadius);
                sw += w * w;
                sx += w * w * (x + 0.5);
                sy += w * w * (y + 0.5);
            }
        // No matching pixels: report the frame centre so the distance stays finite.
        if (sw > 0) out.emplace_back(sx / sw, sy / sw);
        else out.emplace_back(d.w / 2.0, d.h / 2.0);
    }
    return out;
}

double trajectory_distance(const std::vector<std::pair<double, double>>& a, const std::vector<std::pair<double, double>>& b) {
    if (a.size() != b.size()) throw Error(ErrorKind::dims_mismatch, "trajectory_distance: frame counts differ");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double dx = a[i].first - b[i].first, dy = a[i].second - b[i].second;
        s += dx * dx + dy * dy;
    }
    return std::sqrt(s);
}

} // namespace dni
