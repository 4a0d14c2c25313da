// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dni/denoiser.hpp"
#include "dni/dilution.hpp"
#include "dni/edit.hpp"

namespace dni {

// Settings shared by the bundled experiments and the CLI defaults.
struct ToySetup {
    DatasetConfig data;          // 32x32x8x3 scenes
    ModelConfig model;
    TrainConfig train;
    std::size_t dataset_size = 64;
    int T = 1000;
    int ddim_steps = kDefaultDdimSteps;
};

ToySetup default_setup();

struct TrainedToy {
    NoiseSchedule schedule;
    ToyDenoiser model;
    std::vector<Example> data;
    TrainResult result;
};

TrainedToy train_toy(const ToySetup& setup, std::uint64_t seed);

// Low-band magnitude correlation with x0 for the inverted latent and for a fresh Gaussian draw.
inline constexpr double kStructureBand = 0.125;
struct StructureResidual {
    double corr_z = 0, corr_eps = 0;
    double round_trip = 0; // rel L2 of sample(invert(x0)) against x0
};
StructureResidual structure_residual(const Denoiser& model, const NoiseSchedule& s, const SceneSpec& scene, std::uint64_t eps_seed,
                                     int steps);

struct FilterRow {
    std::string filter; // "asf" or "glpf"
    double sigma = 0;   // glpf only
    double psnr = 0;
};
inline constexpr double kGlpfSigmas[] = {1, 3, 5, 10};
// PSNR of the standardized visual branch of z against standardized x0, ASF first then each GLPF sigma.
std::vector<FilterRow> compare_filters(const LatentTensor& z, const LatentTensor& x0);

struct EditCase {
    SceneSpec scene;
    ToyPrompt target;
};
// Colour swaps (rigid) and slide-to-jump (non-rigid) on fresh scenes.
std::vector<EditCase> rigid_cases(std::uint64_t seed, std::size_t n, const DatasetConfig& cfg);
std::vector<EditCase> nonrigid_cases(std::uint64_t seed, std::size_t n, const DatasetConfig& cfg);

inline constexpr double kObjectMaskMargin = 1.0;
struct EditMeasure {
    double in_mse = 0, out_mse = 0; // against the input, split by the object mask
    double traj_dist = 0;           // centroid path against the target verb's path
    double base_dev = 0;            // inside-mask MSE against the undiluted edit
};
struct CaseResult {
    EditMeasure base; // alpha = beta = 0
    std::vector<EditMeasure> edits;
};
// Inverts once, then denoises the baseline and one edit per config.
CaseResult run_edit_case(const Denoiser& model, const NoiseSchedule& s, const EditCase& c, const std::vector<DilutionConfig>& cfgs, int steps);

struct SweepCell {
    double value = 0;
    double in_mse = 0, out_mse = 0, traj_dist = 0;
    double edit_effect = 0; // mean base_dev: how far the mask moves the edit inside the object
    double efficacy = 0;    // mean trajectory gain over the baseline
};
// param "alpha": rigid cases with beta = 0. param "beta": non-rigid cases with alpha = fixed_other.
std::vector<SweepCell> sweep(const Denoiser& model, const NoiseSchedule& s, const std::string& param, const std::vector<double>& values,
                             const std::vector<EditCase>& cases, double fixed_other, std::uint64_t seed, int steps);

} // namespace dni
