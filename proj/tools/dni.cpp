// SPDX-License-Identifier: Apache-2.0
// dni: command-line front end. Every output is a DNIT tensor or a CSV file.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dni/denoiser.hpp"
#include "dni/dilution.hpp"
#include "dni/edit.hpp"
#include "dni/experiments.hpp"
#include "dni/metrics.hpp"
#include "dni/spectral.hpp"

namespace fs = std::filesystem;
using namespace dni;

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Writes to the file if a path is given, otherwise to stdout.
class CsvOut {
public:
    explicit CsvOut(const std::string& path) : path_(path) {}
    void row(std::initializer_list<std::string> cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) os_ << ',';
            os_ << c;
            first = false;
        }
        os_ << '\n';
    }
    void metric(const std::string& metric, const std::string& name, double v) { row({metric, name, num(v)}); }
    void flush() {
        if (path_.empty()) {
            std::cout << os_.str();
            return;
        }
        std::ofstream f(path_, std::ios::trunc);
        if (!f || !(f << os_.str())) throw Error(ErrorKind::io, "cannot write " + path_);
    }

private:
    std::string path_;
    std::ostringstream os_;
};

struct Common {
    std::uint64_t seed = 0;
    int T = 1000;
    bool T_set = false;
};

struct ToyFlags {
    int res = 32, frames = 8;
    void add(CLI::App* app) {
        app->add_option("--res", res, "Frame width and height (multiple of 8)")->check(CLI::Range(8, 256));
        app->add_option("--frames", frames, "Frames per video")->check(CLI::Range(1, 256));
    }
    ToySetup setup() const {
        if (res % 8) throw Error(ErrorKind::invalid_argument, "--res must be a multiple of 8");
        ToySetup s = default_setup();
        s.data.dims = Dims{std::uint32_t(res), std::uint32_t(res), std::uint32_t(frames), 3};
        s.model.dims = s.data.dims;
        return s;
    }
};

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(ErrorKind::invalid_argument, "bad number '" + item + "' in --values");
        }
    }
    if (out.empty()) throw Error(ErrorKind::invalid_argument, "--values is empty");
    return out;
}

ToyDenoiser load_model(const std::string& dir, const Common& c) {
    ToyDenoiser m = ToyDenoiser::load(dir);
    if (c.T_set && c.T != m.schedule().T)
        throw Error(ErrorKind::invalid_argument, "--T " + std::to_string(c.T) + " does not match the checkpoint's T = " + std::to_string(m.schedule().T));
    return m;
}

// Checkpoint from --model, or a freshly trained default model when none is given.
ToyDenoiser model_or_train(const std::string& dir, const Common& c, const ToyFlags& tf) {
    if (!dir.empty()) return load_model(dir, c);
    ToySetup s = tf.setup();
    s.T = c.T;
    std::cerr << "dni: no --model given, training the default toy model (seed " << c.seed << ")\n";
    return std::move(train_toy(s, c.seed).model);
}

LatentTensor read_checked(const std::string& path, const Dims& want, const char* what) {
    LatentTensor t = read_tensor(path);
    require_same_dims(t.dims(), want, what);
    return t;
}

// gen-data writes video_NNN.dnit plus index.csv describing each scene.
const char* kIndexHeader = "file,prompt,cx,cy,radius,texture,texture_seed";

std::vector<Example> read_dataset(const std::string& dir) {
    const fs::path idx = fs::path(dir) / "index.csv";
    std::ifstream f(idx);
    if (!f) throw Error(ErrorKind::io, "cannot open " + idx.string());
    std::string line;
    std::getline(f, line);
    if (line != kIndexHeader) throw Error(ErrorKind::invalid_argument, idx.string() + ": unexpected header");
    std::vector<Example> out;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw Error(ErrorKind::invalid_argument, idx.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
        Example ex;
        ex.video = read_tensor((fs::path(dir) / cells[0]).string());
        ex.scene.prompt = parse_prompt(cells[1]);
        ex.scene.dims = ex.video.dims();
        try {
            ex.scene.cx = std::stod(cells[2]);
            ex.scene.cy = std::stod(cells[3]);
            ex.scene.radius = std::stod(cells[4]);
            ex.scene.texture = std::stod(cells[5]);
            ex.scene.texture_seed = std::stoull(cells[6]);
        } catch (const std::exception&) {
            throw Error(ErrorKind::invalid_argument, idx.string() + ":" + std::to_string(lineno) + ": bad number");
        }
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw Error(ErrorKind::invalid_argument, idx.string() + ": no videos");
    return out;
}

void write_dataset(const std::vector<Example>& data, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create " + dir);
    std::ostringstream os;
    os << kIndexHeader << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "video_%03zu.dnit", i);
        write_tensor(data[i].video, (fs::path(dir) / name).string());
        const SceneSpec& s = data[i].scene;
        os << name << ',' << s.prompt.text() << ',' << num(s.cx) << ',' << num(s.cy) << ',' << num(s.radius) << ',' << num(s.texture) << ','
           << s.texture_seed << '\n';
    }
    std::ofstream f(fs::path(dir) / "index.csv", std::ios::trunc);
    if (!f || !(f << os.str())) throw Error(ErrorKind::io, "cannot write index.csv in " + dir);
}

AsfNorm parse_norm(const std::string& s) {
    if (s == "per-channel") return AsfNorm::per_channel;
    if (s == "global") return AsfNorm::global;
    throw Error(ErrorKind::invalid_argument, "--norm must be per-channel or global");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dilutional noise initialization toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "key=value configuration file");

    Common common;
    app.add_option("--seed", common.seed, "Random seed")->envname("DNI_SEED");
    app.add_option_function<int>(
        "--T", [&](const int& t) { common.T = t, common.T_set = true; }, "Diffusion timesteps");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Render a synthetic toy video dataset");
    ToyFlags gen_tf;
    std::size_t gen_n = 8;
    std::string gen_out;
    gen->add_option("--n", gen_n, "Number of videos")->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen_tf.add(gen);

    // train
    auto* tr = app.add_subcommand("train", "Train the toy denoiser");
    ToyFlags tr_tf;
    std::string tr_data, tr_out, tr_log;
    std::size_t tr_n = 64;
    int tr_steps = 2000, tr_batch = 8, tr_f1 = 12, tr_f2 = 32;
    double tr_lr = 3e-3;
    tr->add_option("--data", tr_data, "Dataset directory from gen-data (default: generate --n videos from --seed)");
    tr->add_option("--n", tr_n, "Generated dataset size")->check(CLI::PositiveNumber);
    tr->add_option("--steps", tr_steps, "Optimizer steps")->check(CLI::PositiveNumber);
    tr->add_option("--batch", tr_batch, "Batch size")->check(CLI::PositiveNumber);
    tr->add_option("--lr", tr_lr, "Adam learning rate")->check(CLI::PositiveNumber);
    tr->add_option("--f1", tr_f1, "Full-resolution width")->check(CLI::PositiveNumber);
    tr->add_option("--f2", tr_f2, "Low-resolution width")->check(CLI::PositiveNumber);
    tr->add_option("--out", tr_out, "Checkpoint directory")->required();
    tr->add_option("--log", tr_log, "Per-step loss CSV");
    tr_tf.add(tr);

    // invert
    auto* inv = app.add_subcommand("invert", "DDIM-invert a video under its prompt");
    std::string inv_model, inv_x0, inv_prompt, inv_out, inv_maps, inv_words;
    int inv_steps = kDefaultDdimSteps;
    inv->add_option("--model", inv_model, "Checkpoint directory")->required();
    inv->add_option("--x0", inv_x0, "Input video (DNIT)")->required();
    inv->add_option("--prompt", inv_prompt, "Prompt, e.g. \"red square slide plain\"")->required();
    inv->add_option("--steps", inv_steps, "DDIM steps")->check(CLI::PositiveNumber);
    inv->add_option("--out", inv_out, "Inverted latent (DNIT)")->required();
    inv->add_option("--maps-out", inv_maps, "Also write attention maps and a manifest here");
    inv->add_option("--words", inv_words, "Comma separated prompt words to export maps for (default: all)");

    // sample
    auto* smp = app.add_subcommand("sample", "DDIM-denoise a latent under a prompt");
    std::string smp_model, smp_z, smp_prompt, smp_out;
    int smp_steps = kDefaultDdimSteps;
    smp->add_option("--model", smp_model, "Checkpoint directory")->required();
    smp->add_option("--z", smp_z, "Initial latent (DNIT); omit to draw Gaussian noise from --seed");
    smp->add_option("--prompt", smp_prompt, "Prompt")->required();
    smp->add_option("--steps", smp_steps, "DDIM steps")->check(CLI::PositiveNumber);
    smp->add_option("--out", smp_out, "Output video (DNIT)")->required();

    // edit
    auto* ed = app.add_subcommand("edit", "Edit a video by swapping prompt words");
    std::string ed_model, ed_x0, ed_src, ed_tgt, ed_out, ed_zstar, ed_mask;
    int ed_steps = kDefaultDdimSteps;
    DilutionConfig ed_cfg;
    ed->add_option("--model", ed_model, "Checkpoint directory")->required();
    ed->add_option("--x0", ed_x0, "Input video (DNIT)")->required();
    ed->add_option("--source", ed_src, "Prompt describing the input")->required();
    ed->add_option("--target", ed_tgt, "Prompt describing the edit")->required();
    ed->add_option("--alpha", ed_cfg.alpha, "Rigid mask weight")->check(CLI::Range(0.0, 1.0));
    ed->add_option("--beta", ed_cfg.beta, "Non-rigid mask weight")->check(CLI::Range(0.0, 1.0));
    ed->add_option("--gamma", ed_cfg.gamma, "Gaussian branch weight, in (0,2)");
    ed->add_option("--steps", ed_steps, "DDIM steps")->check(CLI::PositiveNumber);
    ed->add_option("--out", ed_out, "Edited video (DNIT)")->required();
    ed->add_option("--z-star-out", ed_zstar, "Also write the diluted noise");
    ed->add_option("--mask-out", ed_mask, "Also write the guidance mask as a (W,H,L,1) tensor");

    // disentangle
    auto* dis = app.add_subcommand("disentangle", "Split a latent into visual and Gaussian branches");
    std::string dis_z, dis_z0, dis_v, dis_g, dis_filter = "asf", dis_norm = "per-channel";
    double dis_sigma = 5.0;
    dis->add_option("--z", dis_z, "Latent to split (DNIT)")->required();
    dis->add_option("--z0", dis_z0, "Clean latent the ASF is built from (required for asf)");
    dis->add_option("--filter", dis_filter, "asf or glpf")->check(CLI::IsMember({"asf", "glpf"}));
    dis->add_option("--sigma", dis_sigma, "GLPF sigma")->check(CLI::PositiveNumber);
    dis->add_option("--norm", dis_norm, "ASF normalisation: per-channel or global");
    dis->add_option("--out-v", dis_v, "Visual branch (DNIT)")->required();
    dis->add_option("--out-g", dis_g, "Gaussian branch (DNIT)")->required();

    // dilute
    auto* dil = app.add_subcommand("dilute", "Build dilutional noise from a latent and attention maps");
    std::string dil_z, dil_z0, dil_maps, dil_out, dil_norm = "per-channel";
    DilutionConfig dil_cfg;
    dil->add_option("--z", dil_z, "Inverted latent (DNIT)")->required();
    dil->add_option("--z0", dil_z0, "Clean latent (DNIT)")->required();
    dil->add_option("--maps-manifest", dil_maps, "Attention map manifest (omit for an all-zero mask)");
    dil->add_option("--alpha", dil_cfg.alpha, "Rigid mask weight")->check(CLI::Range(0.0, 1.0));
    dil->add_option("--beta", dil_cfg.beta, "Non-rigid mask weight")->check(CLI::Range(0.0, 1.0));
    dil->add_option("--gamma", dil_cfg.gamma, "Gaussian branch weight, in (0,2)");
    dil->add_option("--norm", dil_norm, "ASF normalisation: per-channel or global");
    dil->add_option("--out", dil_out, "Diluted noise (DNIT)")->required();

    // analyze
    auto* an = app.add_subcommand("analyze", "Metrics and spectral profiles as metric,name,value CSV");
    std::string an_x, an_ref, an_out;
    an->add_option("--x", an_x, "Tensor to analyse (DNIT)")->required();
    an->add_option("--ref", an_ref, "Reference tensor for pairwise metrics");
    an->add_option("--out", an_out, "CSV path (default stdout)");

    // compare-filters
    auto* cf = app.add_subcommand("compare-filters", "ASF against GLPF on an inverted toy video");
    ToyFlags cf_tf;
    std::string cf_model, cf_x0, cf_prompt, cf_out;
    int cf_steps = kDefaultDdimSteps;
    cf->add_option("--model", cf_model, "Checkpoint directory (default: train one)");
    cf->add_option("--x0", cf_x0, "Video (DNIT); default: a random scene from --seed");
    cf->add_option("--prompt", cf_prompt, "Prompt for --x0");
    cf->add_option("--steps", cf_steps, "DDIM steps")->check(CLI::PositiveNumber);
    cf->add_option("--out", cf_out, "CSV path (default stdout)");
    cf_tf.add(cf);

    // sweep
    auto* sw = app.add_subcommand("sweep", "Edit strength sweep over alpha or beta");
    ToyFlags sw_tf;
    std::string sw_model, sw_param = "alpha", sw_values = "0.1,0.3,0.5,0.7,0.9", sw_out;
    std::size_t sw_scenes = 10;
    double sw_other = -1;
    int sw_steps = kDefaultDdimSteps;
    sw->add_option("--model", sw_model, "Checkpoint directory (default: train one)");
    sw->add_option("--param", sw_param, "alpha or beta")->check(CLI::IsMember({"alpha", "beta"}));
    sw->add_option("--values", sw_values, "Comma separated grid");
    sw->add_option("--scenes", sw_scenes, "Scenes per cell")->check(CLI::PositiveNumber);
    sw->add_option("--other", sw_other, "Fixed value of the other weight (default: beta 0 for alpha sweeps, alpha 0.3 for beta sweeps)");
    sw->add_option("--steps", sw_steps, "DDIM steps")->check(CLI::PositiveNumber);
    sw->add_option("--out", sw_out, "CSV path (default stdout)");
    sw_tf.add(sw);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "dni: error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*gen) {
            ToySetup s = gen_tf.setup();
            write_dataset(gen_dataset(common.seed, gen_n, s.data), gen_out);
        } else if (*tr) {
            ToySetup s = tr_tf.setup();
            s.T = common.T;
            s.model.f1 = tr_f1;
            s.model.f2 = tr_f2;
            std::vector<Example> data = tr_data.empty() ? gen_dataset(common.seed, tr_n, s.data) : read_dataset(tr_data);
            s.model.dims = data.front().video.dims();
            const NoiseSchedule sched = make_schedule(s.T);
            ToyDenoiser model(s.model, sched, common.seed);
            TrainConfig tc = s.train;
            tc.seed = common.seed;
            tc.steps = tr_steps;
            tc.batch = tr_batch;
            tc.lr = tr_lr;
            const TrainResult r = train(model, data, tc, [&](int step, double loss) {
                if (step % 100 == 0 || step == tc.steps) std::cerr << "step " << step << " loss " << num(loss) << "\n";
            });
            model.save(tr_out);
            if (!tr_log.empty()) {
                CsvOut log(tr_log);
                log.row({"step", "loss"});
                for (std::size_t i = 0; i < r.losses.size(); ++i) log.row({std::to_string(i + 1), num(r.losses[i])});
                log.flush();
            }
            CsvOut out("");
            out.metric("train", "initial_loss", r.initial_loss);
            out.metric("train", "final_loss", r.final_loss);
            out.metric("train", "parameters", double(model.parameter_count()));
            out.flush();
        } else if (*inv) {
            const ToyDenoiser model = load_model(inv_model, common);
            const LatentTensor x0 = read_checked(inv_x0, model.config().dims, "--x0 vs model");
            const ToyPrompt p = parse_prompt(inv_prompt);
            AttentionCapture cap;
            int n = 0;
            const LatentTensor z = ddim_invert(x0, p, model, model.schedule(), inv_steps, &cap, &n);
            write_tensor(z, inv_out);
            if (!inv_maps.empty()) {
                std::vector<int> slots;
                const auto toks = p.tokens();
                if (inv_words.empty()) {
                    for (int k = 0; k < kPromptSlots; ++k) slots.push_back(k);
                } else {
                    std::stringstream ss(inv_words);
                    std::string w;
                    while (std::getline(ss, w, ',')) {
                        const int t = token_from_word(w);
                        int found = -1;
                        for (int k = 0; k < kPromptSlots; ++k)
                            if (toks[k] == t) found = k;
                        if (found < 0) throw Error(ErrorKind::invalid_argument, "word '" + w + "' is not in the prompt");
                        slots.push_back(found);
                    }
                }
                const auto maps = collect_attention(cap, n, p, slots);
                for (const auto& m : maps)
                    if (m.degenerate) std::cerr << "dni: warning: attention map for '" << m.word << "' is constant\n";
                write_maps_manifest(maps, inv_maps, fs::path(inv_maps).stem().string());
            }
        } else if (*smp) {
            const ToyDenoiser model = load_model(smp_model, common);
            const LatentTensor z = smp_z.empty() ? random_gaussian(model.config().dims, common.seed) : read_checked(smp_z, model.config().dims, "--z vs model");
            write_tensor(ddim_sample(z, parse_prompt(smp_prompt), model, model.schedule(), smp_steps), smp_out);
        } else if (*ed) {
            const ToyDenoiser model = load_model(ed_model, common);
            const LatentTensor x0 = read_checked(ed_x0, model.config().dims, "--x0 vs model");
            ed_cfg.seed = common.seed;
            const EditResult r = edit_video_traced(x0, parse_prompt(ed_src), parse_prompt(ed_tgt), model, ed_cfg, model.schedule(), ed_steps);
            for (const auto& m : r.maps)
                if (m.degenerate) std::cerr << "dni: warning: attention map for '" << m.word << "' is constant\n";
            write_tensor(r.video, ed_out);
            if (!ed_zstar.empty()) write_tensor(r.z_star, ed_zstar);
            if (!ed_mask.empty()) write_tensor(LatentTensor(Dims{r.mask.w, r.mask.h, r.mask.l, 1}, r.mask.values), ed_mask);
        } else if (*dis) {
            const LatentTensor z = read_tensor(dis_z);
            SpectralFilter f;
            if (dis_filter == "asf") {
                if (dis_z0.empty()) throw Error(ErrorKind::invalid_argument, "--filter asf needs --z0");
                f = build_asf(read_checked(dis_z0, z.dims(), "--z0 vs --z"), parse_norm(dis_norm));
            } else {
                f = build_glpf(z.dims(), dis_sigma);
            }
            const auto [v, g] = disentangle(z, f);
            write_tensor(v, dis_v);
            write_tensor(g, dis_g);
        } else if (*dil) {
            const LatentTensor z = read_tensor(dil_z);
            const LatentTensor z0 = read_checked(dil_z0, z.dims(), "--z0 vs --z");
            dil_cfg.seed = common.seed;
            dil_cfg.norm = parse_norm(dil_norm);
            const auto maps = dil_maps.empty() ? std::vector<AttentionMap>{} : read_maps_manifest(dil_maps);
            write_tensor(make_dilutional_noise(z, z0, maps, dil_cfg).z_star, dil_out);
        } else if (*an) {
            const LatentTensor x = read_tensor(an_x);
            CsvOut out(an_out);
            out.row({"metric", "name", "value"});
            out.metric("stats", "l2_norm", l2_norm(x));
            const SpectralProfile prof = spectral_profile(x);
            for (std::size_t i = 0; i < prof.radial.size(); ++i) out.metric("radial", std::to_string(i), prof.radial[i]);
            for (std::size_t i = 0; i < prof.temporal.size(); ++i) out.metric("temporal", std::to_string(i), prof.temporal[i]);
            if (!an_ref.empty()) {
                const LatentTensor ref = read_checked(an_ref, x.dims(), "--ref vs --x");
                out.metric("pair", "mse", mse(x, ref));
                out.metric("pair", "psnr", psnr(x, ref));
                out.metric("pair", "psnr_standardized", psnr(standardize(x), standardize(ref)));
                out.metric("pair", "ssim", ssim_video(x, ref));
                out.metric("pair", "rel_l2", rel_l2(x, ref));
                out.metric("pair", "band_correlation", band_correlation(x, ref, kStructureBand));
            }
            out.flush();
        } else if (*cf) {
            const ToyDenoiser model = model_or_train(cf_model, common, cf_tf);
            LatentTensor x0;
            ToyPrompt p;
            if (!cf_x0.empty()) {
                if (cf_prompt.empty()) throw Error(ErrorKind::invalid_argument, "--x0 needs --prompt");
                x0 = read_checked(cf_x0, model.config().dims, "--x0 vs model");
                p = parse_prompt(cf_prompt);
            } else {
                DatasetConfig dc;
                dc.dims = model.config().dims;
                Rng rng(common.seed);
                const SceneSpec sc = random_scene(rng, dc);
                x0 = render(sc);
                p = sc.prompt;
            }
            const LatentTensor z = ddim_invert(x0, p, model, model.schedule(), cf_steps);
            CsvOut out(cf_out);
            out.row({"filter", "sigma", "psnr"});
            for (const auto& r : compare_filters(z, x0)) out.row({r.filter, r.filter == "asf" ? "" : num(r.sigma), num(r.psnr)});
            out.flush();
        } else if (*sw) {
            const ToyDenoiser model = model_or_train(sw_model, common, sw_tf);
            const auto values = parse_values(sw_values);
            DatasetConfig dc;
            dc.dims = model.config().dims;
            const bool alpha = sw_param == "alpha";
            const double other = sw_other >= 0 ? sw_other : (alpha ? 0.0 : 0.3);
            const auto cases = alpha ? rigid_cases(common.seed, sw_scenes, dc) : nonrigid_cases(common.seed, sw_scenes, dc);
            const auto cells = sweep(model, model.schedule(), sw_param, values, cases, other, common.seed, sw_steps);
            CsvOut out(sw_out);
            out.row({"param", "value", "inside_mse", "outside_mse", "traj_dist", "edit_effect", "efficacy"});
            for (const auto& c : cells)
                out.row({sw_param, num(c.value), num(c.in_mse), num(c.out_mse), num(c.traj_dist), num(c.edit_effect), num(c.efficacy)});
            out.flush();
        }
    } catch (const std::exception& e) {
        std::cerr << "dni: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
