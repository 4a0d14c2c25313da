// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dni/denoiser.hpp"
#include "dni/edit.hpp"

using namespace dni;

namespace {

ModelConfig small_config() {
    ModelConfig mc;
    mc.dims = Dims{16, 16, 4, 3};
    mc.f1 = 6;
    mc.f2 = 8;
    return mc;
}

std::vector<std::vector<float>> zero_grads(const ToyDenoiser& m) {
    std::vector<std::vector<float>> g(m.params().size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i].assign(m.params()[i].w.size(), 0.0f);
    return g;
}

} // namespace

TEST_CASE("default model size") {
    const ToyDenoiser m(ModelConfig{}, make_schedule(), 0);
    CHECK(m.parameter_count() == 158055);
    ModelConfig bad;
    bad.dims.w = 30;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("analytic gradients match central differences") {
    const ModelConfig mc = small_config();
    const NoiseSchedule s = make_schedule();
    ToyDenoiser m(mc, s, 7);
    DatasetConfig dc;
    dc.dims = mc.dims;
    const auto data = gen_dataset(1, 2, dc);
    const LatentTensor e0 = random_gaussian(mc.dims, 11), e1 = random_gaussian(mc.dims, 12);
    const std::vector<const LatentTensor*> xs{&data[0].video, &data[1].video}, es{&e0, &e1};
    const std::vector<ToyPrompt> ps{data[0].scene.prompt, data[1].scene.prompt};
    const std::vector<int> ts{300, 800};
    auto g = zero_grads(m);
    m.loss_and_grad(xs, ps, ts, es, g);

    auto& P = m.params();
    Rng r(3);
    double worst = 0;
    for (std::size_t i = 0; i < P.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            std::size_t j = r.below(std::uint32_t(P[i].w.size()));
            // Only rows of tokens that occur in the batch receive gradient.
            if (P[i].name == "tok") j = std::size_t(ps[0].tokens()[k % 4]) * P[i].cols + r.below(P[i].cols);
            const float orig = P[i].w[j];
            const double h = 1e-2 * std::max(1.0, double(std::abs(orig)));
            auto dummy = zero_grads(m);
            P[i].w[j] = float(orig + h);
            const double lp = m.loss_and_grad(xs, ps, ts, es, dummy);
            P[i].w[j] = float(orig - h);
            const double lm = m.loss_and_grad(xs, ps, ts, es, dummy);
            P[i].w[j] = orig;
            const double fd = (lp - lm) / (2 * h), an = g[i][j];
            const double rel = std::abs(fd - an) / std::max(1e-4, std::abs(fd) + std::abs(an));
            INFO(P[i].name, "[", j, "] fd=", fd, " an=", an);
            CHECK(rel < 2e-2);
            worst = std::max(worst, rel);
        }
    MESSAGE("worst relative gradient error " << worst);
}

TEST_CASE("checkpoints round trip bit-identically") {
    const ModelConfig mc = small_config();
    const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
    const ToyDenoiser m(mc, s, 5);
    const auto dir = (std::filesystem::temp_directory_path() / "dni_test_ckpt").string();
    std::filesystem::remove_all(dir);
    m.save(dir);
    const ToyDenoiser back = ToyDenoiser::load(dir);
    CHECK(back.schedule().T == 200);
    REQUIRE(back.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(back.params()[i].name == m.params()[i].name);
        CHECK(back.params()[i].w == m.params()[i].w);
    }
    const LatentTensor x = random_gaussian(mc.dims, 1);
    const ToyPrompt p = parse_prompt("red circle slide plain");
    CHECK(m.predict_eps(x, 100, p).values() == back.predict_eps(x, 100, p).values());
    std::filesystem::remove(std::filesystem::path(dir) / "manifest.json");
    CHECK_THROWS_AS(ToyDenoiser::load(dir), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("attention capture shapes, block M is twice as coarse as block D") {
    const ModelConfig mc = small_config();
    const ToyDenoiser m(mc, make_schedule(), 2);
    AttentionCapture cap;
    m.predict_eps(random_gaussian(mc.dims, 3), 500, ToyPrompt{}, &cap);
    CHECK(cap.w_down == 4);
    CHECK(cap.h_down == 4);
    CHECK(cap.w_mid == 2);
    CHECK(cap.l == 4);
    CHECK(cap.down.size() == std::size_t(4 * 4 * 4 * kPromptSlots));
    CHECK(cap.mid.size() == std::size_t(4 * 2 * 2 * kPromptSlots));
    // Softmax rows sum to one (head mean preserves that).
    for (std::size_t i = 0; i < cap.down.size(); i += kPromptSlots) {
        double s = 0;
        for (int k = 0; k < kPromptSlots; ++k) s += cap.down[i + k];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("a short training run lowers the loss and is reproducible") {
    const ModelConfig mc = small_config();
    const NoiseSchedule s = make_schedule();
    DatasetConfig dc;
    dc.dims = mc.dims;
    const auto data = gen_dataset(4, 16, dc);
    TrainConfig tc;
    tc.steps = 150;
    tc.seed = 9;
    ToyDenoiser a(mc, s, 1), b(mc, s, 1);
    const TrainResult ra = train(a, data, tc);
    const TrainResult rb = train(b, data, tc);
    CHECK(ra.losses.size() == 150);
    CHECK(ra.final_loss < 0.8 * ra.initial_loss);
    CHECK(ra.losses == rb.losses);
    CHECK(a.params()[3].w == b.params()[3].w);
}

TEST_CASE("reference slots and the zero-guidance edit") {
    const ToyPrompt src = parse_prompt("red circle slide plain"), tgt = parse_prompt("blue circle jump plain");
    CHECK(reference_slots(src, tgt) == std::vector<int>{1, 2});
    CHECK(reference_slots(src, src).empty());

    const ModelConfig mc = small_config();
    const NoiseSchedule s = make_schedule();
    const ToyDenoiser m(mc, s, 4);
    SceneSpec sc;
    sc.dims = mc.dims;
    sc.prompt = src;
    sc.cx = sc.cy = 8.0;
    sc.radius = 2.6;
    const LatentTensor x0 = render(sc);
    const int steps = 10;

    // alpha = beta = 0, gamma = 1 must be plain inversion followed by plain sampling.
    DilutionConfig off;
    off.alpha = 0.0;
    const LatentTensor plain = ddim_sample(ddim_invert(x0, src, m, s, steps), tgt, m, s, steps);
    const EditResult r = edit_video_traced(x0, src, tgt, m, off, s, steps);
    CHECK(r.video.values() == plain.values());
    REQUIRE(r.maps.size() == 2);
    CHECK(r.maps[0].word == "red");
    CHECK(r.maps[0].block == "down");
    CHECK(r.maps[0].w == 4);
    CHECK(r.maps[1].word == "slide");
    CHECK(r.maps[1].block == "mid");
    CHECK(r.maps[1].w == 2);

    DilutionConfig on;
    on.alpha = 0.8, on.beta = 0.5, on.seed = 2;
    const EditResult e = edit_video_traced(x0, src, tgt, m, on, s, steps);
    CHECK(e.video.values() != plain.values());
    CHECK(edit_video(x0, src, tgt, m, on, s, steps).values() == e.video.values());

    try {
        edit_video(x0, src, src, m, on, s, steps);
        FAIL("expected an error");
    } catch (const Error& err) {
        CHECK(std::string(err.what()).find("nothing to edit") != std::string::npos);
    }
}
