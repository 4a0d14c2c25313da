// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dni/spectral.hpp"

namespace fs = std::filesystem;
using namespace dni;

namespace {

const fs::path& work() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "dni_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

struct Run {
    int code;
    std::string out, err;
};

Run dni_run(const std::string& args) {
    const fs::path o = work() / "stdout.txt", e = work() / "stderr.txt";
    const std::string cmd = std::string("cd '") + work().string() + "' && '" + DNI_CLI_PATH + "' " + args + " >'" + o.string() + "' 2>'" +
                            e.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

// Trains the small checkpoint shared by the tests below, once.
void ensure_model() {
    static bool done = false;
    if (done) return;
    const Run r = dni_run("--seed 3 train --res 16 --frames 4 --n 4 --steps 20 --f1 4 --f2 8 --out model --log loss.csv");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    REQUIRE(dni_run("--seed 3 gen-data --n 2 --res 16 --frames 4 --out data").code == 0);
    done = true;
}

std::string prompt_of(const std::string& file) {
    std::istringstream is(slurp(work() / "data" / "index.csv"));
    std::string line;
    while (std::getline(is, line))
        if (line.rfind(file + ",", 0) == 0) return line.substr(file.size() + 1, line.find(',', file.size() + 1) - file.size() - 1);
    return {};
}

} // namespace

TEST_CASE("help and usage errors") {
    const Run h = dni_run("--help");
    CHECK(h.code == 0);
    CHECK(h.out.find("disentangle") != std::string::npos);
    const Run none = dni_run("");
    CHECK(none.code == 2);
    CHECK(none.err.rfind("dni: error: ", 0) == 0);
    const Run bad = dni_run("frobnicate");
    CHECK(bad.code == 2);
}

TEST_CASE("runtime errors are one line on stderr with exit 1") {
    const Run r = dni_run("disentangle --z missing.dnit --filter glpf --out-v v.dnit --out-g g.dnit");
    CHECK(r.code == 1);
    CHECK(r.err.rfind("dni: error: ", 0) == 0);
    CHECK(r.err.find("missing.dnit") != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("gen-data writes an index and is seed deterministic") {
    REQUIRE(dni_run("--seed 5 gen-data --n 3 --res 16 --frames 4 --out d1").code == 0);
    REQUIRE(dni_run("--seed 5 gen-data --n 3 --res 16 --frames 4 --out d2").code == 0);
    const std::string idx = slurp(work() / "d1" / "index.csv");
    CHECK(idx.rfind("file,prompt,cx,cy,radius,texture,texture_seed\n", 0) == 0);
    CHECK(idx == slurp(work() / "d2" / "index.csv"));
    for (const char* f : {"video_000.dnit", "video_002.dnit"}) CHECK(slurp(work() / "d1" / f) == slurp(work() / "d2" / f));
    CHECK(read_tensor((work() / "d1" / "video_000.dnit").string()).dims() == Dims{16, 16, 4, 3});
}

TEST_CASE("disentangle branches add back to the input") {
    ensure_model();
    const std::string z = "data/video_000.dnit";
    REQUIRE(dni_run("--seed 1 sample --model model --prompt 'red circle slide plain' --steps 5 --out z.dnit").code == 0);
    const Run r = dni_run("disentangle --z z.dnit --z0 " + z + " --filter asf --out-v v.dnit --out-g g.dnit");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const LatentTensor zt = read_tensor((work() / "z.dnit").string());
    const LatentTensor v = read_tensor((work() / "v.dnit").string()), g = read_tensor((work() / "g.dnit").string());
    LatentTensor sum(zt.dims());
    for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] = v.data()[i] + g.data()[i];
    CHECK(rel_l2(sum, zt) < 1e-5);
    CHECK(dni_run("disentangle --z z.dnit --filter asf --out-v v.dnit --out-g g.dnit").code == 1);
    CHECK(dni_run("disentangle --z z.dnit --filter box --out-v v.dnit --out-g g.dnit").code == 2);
}

TEST_CASE("model subcommands are deterministic for a fixed seed") {
    ensure_model();
    const std::string x0 = "data/video_000.dnit", p = prompt_of("video_000.dnit");
    REQUIRE_FALSE(p.empty());
    for (int k = 0; k < 2; ++k) {
        const std::string s = std::to_string(k);
        REQUIRE(dni_run("invert --model model --x0 " + x0 + " --prompt '" + p + "' --steps 5 --out inv" + s + ".dnit --maps-out maps" + s +
                        "/maps.txt")
                    .code == 0);
        // Swap the colour word for the edit target.
        std::string tgt = p;
        const std::string col = tgt.substr(0, tgt.find(' '));
        tgt.replace(0, col.size(), col == "red" ? "blue" : "red");
        const Run e = dni_run("--seed 4 edit --model model --x0 " + x0 + " --source '" + p + "' --target '" + tgt +
                              "' --alpha 0.6 --steps 5 --out ed" + s + ".dnit --z-star-out zs" + s + ".dnit --mask-out m" + s + ".dnit");
        REQUIRE_MESSAGE(e.code == 0, e.err);
        REQUIRE(dni_run("--seed 4 dilute --z inv" + s + ".dnit --z0 " + x0 + " --maps-manifest maps" + s +
                        "/maps.txt --alpha 0.5 --beta 0.5 --out dil" + s + ".dnit")
                    .code == 0);
        REQUIRE(dni_run("analyze --x ed" + s + ".dnit --ref " + x0 + " --out an" + s + ".csv").code == 0);
    }
    for (const char* f : {"inv", "ed", "zs", "m", "dil"}) CHECK(slurp(work() / (std::string(f) + "0.dnit")) == slurp(work() / (std::string(f) + "1.dnit")));
    CHECK(slurp(work() / "maps0" / "maps.txt") == slurp(work() / "maps1" / "maps.txt"));
    CHECK(slurp(work() / "an0.csv") == slurp(work() / "an1.csv"));
    CHECK(slurp(work() / "an0.csv").rfind("metric,name,value\n", 0) == 0);
    CHECK(read_tensor((work() / "m0.dnit").string()).dims() == Dims{16, 16, 4, 1});
}

TEST_CASE("checkpoint schedule must match --T") {
    ensure_model();
    const Run r = dni_run("--T 500 sample --model model --prompt 'red circle slide plain' --steps 5 --out s.dnit");
    CHECK(r.code == 1);
    CHECK(r.err.find("T") != std::string::npos);
}

TEST_CASE("csv experiments with a small model") {
    ensure_model();
    const Run c = dni_run("--seed 2 compare-filters --model model --steps 5");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(c.out.rfind("filter,sigma,psnr\nasf,,", 0) == 0);
    CHECK(std::count(c.out.begin(), c.out.end(), '\n') == 6);
    const Run s = dni_run("--seed 2 sweep --model model --param alpha --values 0.2,0.6 --scenes 2 --steps 5");
    REQUIRE_MESSAGE(s.code == 0, s.err);
    CHECK(s.out.rfind("param,value,inside_mse,outside_mse,traj_dist,edit_effect,efficacy\nalpha,0.2,", 0) == 0);
    CHECK(s.out == dni_run("--seed 2 sweep --model model --param alpha --values 0.2,0.6 --scenes 2 --steps 5").out);
}

TEST_CASE("options can come from a config file") {
    ensure_model();
    std::ofstream(work() / "run.ini") << "seed=1\n";
    const Run a = dni_run("--config run.ini sample --model model --prompt 'red circle slide plain' --steps 5 --out c1.dnit");
    REQUIRE_MESSAGE(a.code == 0, a.err);
    REQUIRE(dni_run("--seed 1 sample --model model --prompt 'red circle slide plain' --steps 5 --out c2.dnit").code == 0);
    CHECK(slurp(work() / "c1.dnit") == slurp(work() / "c2.dnit"));
}
