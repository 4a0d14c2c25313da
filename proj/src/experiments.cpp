// SPDX-License-Identifier: Apache-2.0
#include "dni/experiments.hpp"

#include "dni/metrics.hpp"
#include "dni/spectral.hpp"

namespace dni {

ToySetup default_setup() {
    ToySetup s;
    s.data.dims = Dims{32, 32, 8, 3};
    s.model.dims = s.data.dims;
    return s;
}

TrainedToy train_toy(const ToySetup& setup, std::uint64_t seed) {
    NoiseSchedule sched = make_schedule(setup.T);
    ToyDenoiser model(setup.model, sched, seed);
    auto data = gen_dataset(seed, setup.dataset_size, setup.data);
    TrainConfig tc = setup.train;
    tc.seed = seed;
    TrainResult r = train(model, data, tc);
    return {std::move(sched), std::move(model), std::move(data), std::move(r)};
}

StructureResidual structure_residual(const Denoiser& model, const NoiseSchedule& s, const SceneSpec& scene, std::uint64_t eps_seed,
                                     int steps) {
    const LatentTensor x0 = render(scene);
    const LatentTensor z = ddim_invert(x0, scene.prompt, model, s, steps);
    const LatentTensor eps = random_gaussian(x0.dims(), eps_seed);
    StructureResidual r;
    r.corr_z = band_correlation(z, x0, kStructureBand);
    r.corr_eps = band_correlation(eps, x0, kStructureBand);
    r.round_trip = rel_l2(ddim_sample(z, scene.prompt, model, s, steps), x0);
    return r;
}

std::vector<FilterRow> compare_filters(const LatentTensor& z, const LatentTensor& x0) {
    require_same_dims(z.dims(), x0.dims(), "compare_filters");
    const LatentTensor ref = standardize(x0);
    std::vector<FilterRow> rows;
    rows.push_back({"asf", 0.0, psnr(standardize(apply_filter(z, build_asf(x0))), ref)});
    for (double sigma : kGlpfSigmas) rows.push_back({"glpf", sigma, psnr(standardize(apply_filter(z, build_glpf(z.dims(), sigma))), ref)});
    return rows;
}

std::vector<EditCase> rigid_cases(std::uint64_t seed, std::size_t n, const DatasetConfig& cfg) {
    Rng rng(seed);
    std::vector<EditCase> out;
    for (std::size_t i = 0; i < n; ++i) {
        EditCase c{random_scene(rng, cfg), {}};
        c.target = c.scene.prompt;
        c.target.color = Color((int(c.scene.prompt.color) + 1 + int(rng.below(3))) % 4);
        out.push_back(c);
    }
    return out;
}

std::vector<EditCase> nonrigid_cases(std::uint64_t seed, std::size_t n, const DatasetConfig& cfg) {
    Rng rng(seed);
    std::vector<EditCase> out;
    for (std::size_t i = 0; i < n; ++i) {
        EditCase c{random_scene(rng, cfg), {}};
        c.scene.prompt.verb = Verb::slide;
        c.target = c.scene.prompt;
        c.target.verb = Verb::jump;
        out.push_back(c);
    }
    return out;
}

namespace {

EditMeasure measure(const LatentTensor& out, const LatentTensor& x0, const GuidanceMask& obj, const EditCase& c) {
    const auto target_path = verb_trajectory(c.target.verb, c.scene.cx, c.scene.cy, c.scene.dims.w, c.scene.dims.l);
    return {masked_mse(out, x0, obj, Region::inside), masked_mse(out, x0, obj, Region::outside),
            trajectory_distance(centroid_trajectory(out, c.target.color), target_path)};
}

} // namespace

CaseResult run_edit_case(const Denoiser& model, const NoiseSchedule& s, const EditCase& c, const std::vector<DilutionConfig>& cfgs, int steps) {
    const LatentTensor x0 = render(c.scene);
    const auto slots = reference_slots(c.scene.prompt, c.target);
    if (slots.empty()) throw Error(ErrorKind::invalid_argument, "nothing to edit: source and target prompts are identical");
    AttentionCapture cap;
    int n = 0;
    const LatentTensor z = ddim_invert(x0, c.scene.prompt, model, s, steps, &cap, &n);
    const auto maps = collect_attention(cap, n, c.scene.prompt, slots);
    const GuidanceMask obj = object_mask(c.scene, kObjectMaskMargin);
    CaseResult r;
    DilutionConfig base;
    base.alpha = base.beta = 0.0;
    const LatentTensor plain = edit_from_inversion(x0, z, maps, c.target, model, base, s, steps).video;
    r.base = measure(plain, x0, obj, c);
    for (const auto& cfg : cfgs) {
        const LatentTensor out = edit_from_inversion(x0, z, maps, c.target, model, cfg, s, steps).video;
        r.edits.push_back(measure(out, x0, obj, c));
        r.edits.back().base_dev = masked_mse(out, plain, obj, Region::inside);
    }
    return r;
}

std::vector<SweepCell> sweep(const Denoiser& model, const NoiseSchedule& s, const std::string& param, const std::vector<double>& values,
                             const std::vector<EditCase>& cases, double fixed_other, std::uint64_t seed, int steps) {
    if (param != "alpha" && param != "beta") throw Error(ErrorKind::invalid_argument, "sweep: param must be alpha or beta, got '" + param + "'");
    if (values.empty() || cases.empty()) throw Error(ErrorKind::invalid_argument, "sweep: need at least one value and one case");
    std::vector<SweepCell> cells(values.size());
    for (std::size_t k = 0; k < cases.size(); ++k) {
        std::vector<DilutionConfig> cfgs;
        for (double v : values) {
            DilutionConfig d;
            d.seed = seed + k;
            d.alpha = param == "alpha" ? v : fixed_other;
            d.beta = param == "beta" ? v : fixed_other;
            d.validate();
            cfgs.push_back(d);
        }
        const CaseResult r = run_edit_case(model, s, cases[k], cfgs, steps);
        for (std::size_t i = 0; i < values.size(); ++i) {
            cells[i].in_mse += r.edits[i].in_mse;
            cells[i].out_mse += r.edits[i].out_mse;
            cells[i].traj_dist += r.edits[i].traj_dist;
            cells[i].efficacy += r.base.traj_dist - r.edits[i].traj_dist;
            cells[i].edit_effect += r.edits[i].base_dev;
        }
    }
    const double n = double(cases.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& c = cells[i];
        c.value = values[i];
        c.in_mse /= n;
        c.out_mse /= n;
        c.traj_dist /= n;
        c.efficacy /= n;
        c.edit_effect /= n;
    }
    return cells;
}

} // namespace dni
