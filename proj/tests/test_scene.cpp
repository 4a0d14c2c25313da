// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dni/guidance.hpp"
#include "dni/scene.hpp"

using namespace dni;

namespace {

SceneSpec scene(Verb v, Color c = Color::green) {
    SceneSpec s;
    s.prompt = ToyPrompt{Shape::circle, c, v, Style::plain};
    s.cx = 15.3, s.cy = 16.8;
    s.texture_seed = 99;
    return s;
}

} // namespace

TEST_CASE("prompts parse in any order and print canonically") {
    const ToyPrompt p = parse_prompt("slide, red square plain");
    CHECK(p == ToyPrompt{Shape::square, Color::red, Verb::slide, Style::plain});
    CHECK(p.text() == "red square slide plain");
    CHECK(parse_prompt(p.text()) == p);
    CHECK_THROWS_AS(parse_prompt("red square slide"), Error);
    CHECK_THROWS_AS(parse_prompt("red blue square slide plain"), Error);
    CHECK_THROWS_AS(parse_prompt("red square slide purple"), Error);
    CHECK(token_category(token_from_word("jump")) == WordCategory::non_rigid);
    CHECK(token_category(token_from_word("circle")) == WordCategory::rigid);
}

TEST_CASE("static scenes repeat the same frame") {
    const LatentTensor v = render(scene(Verb::static_));
    const Dims& d = v.dims();
    const std::size_t frame = std::size_t(d.w) * d.h * d.c;
    for (std::uint32_t l = 1; l < d.l; ++l)
        for (std::size_t i = 0; i < frame; ++i) CHECK(v.data()[l * frame + i] == v.data()[i]);
}

TEST_CASE("verb paths") {
    const auto slide = verb_trajectory(Verb::slide, 16, 16, 32, 8);
    for (std::size_t i = 1; i < slide.size(); ++i) {
        CHECK(slide[i].first > slide[i - 1].first);
        CHECK(slide[i].second == 16.0);
    }
    CHECK(slide.front().first == doctest::Approx(8.0));
    CHECK(slide.back().first == doctest::Approx(24.0));
    // Jump shares the horizontal sweep and rises in the middle.
    const auto jump = verb_trajectory(Verb::jump, 16, 16, 32, 8);
    for (std::size_t i = 0; i < jump.size(); ++i) CHECK(jump[i].first == doctest::Approx(slide[i].first));
    CHECK(jump[3].second < jump[0].second - 4.0);
    CHECK(jump[0].second == doctest::Approx(jump[7].second));
    const auto bounce = verb_trajectory(Verb::bounce, 16, 16, 32, 8);
    for (const auto& p : bounce) CHECK(p.second <= 16.0);
}

TEST_CASE("rendering is deterministic and centroids follow the path") {
    for (Verb v : {Verb::static_, Verb::slide, Verb::bounce, Verb::jump}) {
        const SceneSpec s = scene(v);
        const LatentTensor a = render(s), b = render(s);
        CHECK(a.values() == b.values());
        const auto c = centroid_trajectory(a, s.prompt.color);
        const auto path = s.trajectory();
        for (std::size_t l = 0; l < path.size(); ++l) {
            CHECK(std::abs(c[l].first - path[l].first) < 0.5);
            CHECK(std::abs(c[l].second - path[l].second) < 0.5);
        }
        CHECK(trajectory_distance(c, path) < 1.0);
    }
    CHECK_THROWS_AS(render([] { SceneSpec s; s.dims.c = 2; return s; }()), Error);
}

TEST_CASE("trajectory distance is the root of summed squared offsets") {
    const std::vector<std::pair<double, double>> a = {{0, 0}, {1, 1}}, b = {{3, 4}, {1, 1}};
    CHECK(trajectory_distance(a, b) == doctest::Approx(5.0));
    CHECK_THROWS_AS(trajectory_distance(a, {{0, 0}}), Error);
}

TEST_CASE("object mask covers the object with a margin") {
    const SceneSpec s = scene(Verb::slide);
    const GuidanceMask m = object_mask(s, 1.0);
    const auto path = s.trajectory();
    for (std::uint32_t l = 0; l < s.dims.l; ++l) {
        const auto px = std::uint32_t(path[l].first), py = std::uint32_t(path[l].second);
        CHECK(m.at(px, py, l) == 1.0f);
        CHECK(m.at(0, 0, l) == 0.0f);
    }
    double covered = 0;
    for (float v : m.values) covered += v;
    // (2 * (radius + 2))^2 cells per frame, give or take a row or column.
    const double side = 2 * (s.radius + 2.0);
    CHECK(covered / s.dims.l == doctest::Approx(side * side).epsilon(0.25));
}

TEST_CASE("datasets are reproducible per seed") {
    DatasetConfig cfg;
    const auto a = gen_dataset(3, 5, cfg), b = gen_dataset(3, 5, cfg), c = gen_dataset(4, 5, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].video.values() == b[i].video.values());
        CHECK(a[i].scene.prompt == b[i].scene.prompt);
        CHECK(std::abs(a[i].scene.cx - 16.0) <= 2.0);
    }
    CHECK(a[0].video.values() != c[0].video.values());
    cfg.dims.w = 20;
    CHECK_THROWS_AS(gen_dataset(1, 1, cfg), Error);
    CHECK_THROWS_AS(gen_dataset(1, 0, DatasetConfig{}), Error);
}
