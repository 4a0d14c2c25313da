// SPDX-License-Identifier: Apache-2.0
#include "dni/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace dni {

std::string category_name(WordCategory c) { return c == WordCategory::rigid ? "rigid" : "non-rigid"; }

WordCategory parse_category(const std::string& s) {
    if (s == "rigid") return WordCategory::rigid;
    if (s == "non-rigid" || s == "nonrigid" || s == "non_rigid") return WordCategory::non_rigid;
    throw Error(ErrorKind::invalid_argument, "unknown word category '" + s + "'");
}

GuidanceMask uniform_mask(std::uint32_t w, std::uint32_t h, std::uint32_t l, float v) {
    return GuidanceMask{w, h, l, std::vector<float>(std::size_t(w) * h * l, v)};
}

void normalize_map(AttentionMap& m) {
    if (m.values.empty()) throw Error(ErrorKind::invalid_argument, "normalize_map: empty map for '" + m.word + "'");
    const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
    const double a = *lo, b = *hi;
    if (!std::isfinite(a) || !std::isfinite(b)) throw Error(ErrorKind::non_finite, "attention map '" + m.word + "' is not finite");
    if (!(b > a)) {
        std::fill(m.values.begin(), m.values.end(), 0.0f);
        m.degenerate = true;
        return;
    }
    for (auto& v : m.values) v = float((v - a) / (b - a));
}

AttentionMap pool_maps(const std::vector<AttentionMap>& maps, WordCategory category) {
    if (maps.empty()) throw Error(ErrorKind::invalid_argument, "pool_maps: no maps");
    const auto& first = maps.front();
    std::vector<double> acc(first.values.size(), 0.0);
    for (const auto& m : maps) {
        if (m.w != first.w || m.h != first.h || m.l != first.l)
            throw Error(ErrorKind::dims_mismatch, "pool_maps: mixed map dims for '" + m.word + "'");
        if (m.category != category) throw Error(ErrorKind::invalid_argument, "pool_maps: '" + m.word + "' has the wrong category");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.values[i];
    }
    AttentionMap out = first;
    out.degenerate = false;
    if (maps.size() > 1) {
        out.word.clear();
        for (const auto& m : maps) out.word += (out.word.empty() ? "" : "+") + m.word;
    }
    for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = float(acc[i] / double(maps.size()));
    return out;
}

AttentionMap resize_map(const AttentionMap& m, std::uint32_t w, std::uint32_t h) {
    if (w < m.w || h < m.h)
        throw Error(ErrorKind::invalid_argument, "resize_map: downscale " + std::to_string(m.w) + "x" + std::to_string(m.h) + " -> " +
                                                     std::to_string(w) + "x" + std::to_string(h) + " not supported");
    AttentionMap out = m;
    out.w = w;
    out.h = h;
    out.values.assign(std::size_t(w) * h * m.l, 0.0f);
    // Pixel-centre alignment: output centre (x + 0.5) maps to source coordinate (x + 0.5) * sw / w - 0.5.
    auto axis = [](std::uint32_t i, std::uint32_t dst, std::uint32_t src, std::uint32_t& i0, std::uint32_t& i1, double& t) {
        double s = (i + 0.5) * double(src) / double(dst) - 0.5;
        s = std::clamp(s, 0.0, double(src - 1));
        i0 = std::uint32_t(std::floor(s));
        i1 = std::min(i0 + 1, src - 1);
        t = s - i0;
    };
    for (std::uint32_t f = 0; f < m.l; ++f)
        for (std::uint32_t y = 0; y < h; ++y) {
            std::uint32_t y0, y1;
            double ty;
            axis(y, h, m.h, y0, y1, ty);
            for (std::uint32_t x = 0; x < w; ++x) {
                std::uint32_t x0, x1;
                double tx;
                axis(x, w, m.w, x0, x1, tx);
                const double top = (1 - tx) * m.at(x0, y0, f) + tx * m.at(x1, y0, f);
                const double bot = (1 - tx) * m.at(x0, y1, f) + tx * m.at(x1, y1, f);
                out.at(x, y, f) = float((1 - ty) * top + ty * bot);
            }
        }
    return out;
}

GuidanceMask combine_masks(const AttentionMap* m_rgd, const AttentionMap* m_nonrgd, double alpha, double beta) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::invalid_argument, "combine_masks: alpha outside [0,1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::invalid_argument, "combine_masks: beta outside [0,1]");
    if (!m_rgd && !m_nonrgd) throw Error(ErrorKind::invalid_argument, "combine_masks: no maps");
    if (m_rgd && m_nonrgd && (m_rgd->w != m_nonrgd->w || m_rgd->h != m_nonrgd->h || m_rgd->l != m_nonrgd->l))
        throw Error(ErrorKind::dims_mismatch, "combine_masks: rigid and non-rigid maps differ in size");
    const AttentionMap& ref = m_rgd ? *m_rgd : *m_nonrgd;
    GuidanceMask out{ref.w, ref.h, ref.l, std::vector<float>(ref.values.size(), 0.0f)};
    // beta == 0 must not read the non-rigid map at all.
    const bool use_rgd = m_rgd && alpha != 0.0, use_non = m_nonrgd && beta != 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double v = 0.0;
        if (use_rgd) v += alpha * m_rgd->values[i];
        if (use_non) v += beta * m_nonrgd->values[i];
        out.values[i] = float(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

GuidanceMask build_guidance(const std::vector<AttentionMap>& maps, std::uint32_t w, std::uint32_t h, double alpha, double beta) {
    std::vector<AttentionMap> rgd, non;
    for (const auto& m : maps) (m.category == WordCategory::rigid ? rgd : non).push_back(m);
    std::optional<AttentionMap> r, n;
    if (!rgd.empty()) r = resize_map(pool_maps(rgd, WordCategory::rigid), w, h);
    if (!non.empty()) n = resize_map(pool_maps(non, WordCategory::non_rigid), w, h);
    if (r && n && r->l != n->l) throw Error(ErrorKind::dims_mismatch, "build_guidance: frame counts differ between categories");
    return combine_masks(r ? &*r : nullptr, n ? &*n : nullptr, alpha, beta);
}

AttentionMap synth_attention(const SceneSpec& scene, const std::string& word) {
    const int tok = token_from_word(word);
    const auto toks = scene.prompt.tokens();
    if (std::find(toks.begin(), toks.end(), tok) == toks.end())
        throw Error(ErrorKind::invalid_argument, "unknown word '" + word + "' for prompt '" + scene.prompt.text() + "'");
    const WordCategory cat = token_category(tok);
    const std::uint32_t n = cat == WordCategory::rigid ? 16 : 8;
    const double scale = double(n) / scene.dims.w;
    const double sigma = (cat == WordCategory::rigid ? kSynthRigidSigma : kSynthNonRigidSigma) * scene.radius * scale;
    AttentionMap m{n, n, scene.dims.l, std::vector<float>(std::size_t(n) * n * scene.dims.l), word, cat,
                   cat == WordCategory::rigid ? "down" : "mid", false};
    const auto path = scene.trajectory();
    for (std::uint32_t f = 0; f < scene.dims.l; ++f) {
        const double px = path[f].first * scale, py = path[f].second * double(n) / scene.dims.h;
        for (std::uint32_t y = 0; y < n; ++y)
            for (std::uint32_t x = 0; x < n; ++x) {
                const double dx = x + 0.5 - px, dy = y + 0.5 - py;
                m.at(x, y, f) = float(std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
            }
    }
    normalize_map(m);
    return m;
}

AttentionMap map_from_tensor(const LatentTensor& t, const std::string& word, WordCategory cat, const std::string& block) {
    if (t.dims().c != 1) throw Error(ErrorKind::dims_mismatch, "attention map '" + word + "' must have one channel, got " + t.dims().str());
    AttentionMap m{t.dims().w, t.dims().h, t.dims().l, t.values(), word, cat, block, false};
    normalize_map(m);
    return m;
}

LatentTensor map_to_tensor(const AttentionMap& m) { return LatentTensor(Dims{m.w, m.h, m.l, 1}, m.values); }

std::vector<AttentionMap> read_maps_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io, "cannot open manifest " + path);
    const auto base = std::filesystem::path(path).parent_path();
    std::vector<AttentionMap> maps;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream is(line);
        std::map<std::string, std::string> kv;
        std::string item;
        while (is >> item) {
            const auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0)
                throw Error(ErrorKind::invalid_argument, path + ":" + std::to_string(lineno) + ": expected key=value, got '" + item + "'");
            kv[item.substr(0, eq)] = item.substr(eq + 1);
        }
        if (kv.empty()) continue;
        for (const char* key : {"file", "word", "category"})
            if (!kv.count(key)) throw Error(ErrorKind::invalid_argument, path + ":" + std::to_string(lineno) + ": missing '" + key + "'");
        std::filesystem::path file = kv["file"];
        if (file.is_relative()) file = base / file;
        const std::string block = kv.count("block") ? kv["block"] : "";
        maps.push_back(map_from_tensor(read_tensor(file.string()), kv["word"], parse_category(kv["category"]), block));
    }
    if (maps.empty()) throw Error(ErrorKind::invalid_argument, "manifest " + path + " lists no maps");
    return maps;
}

void write_maps_manifest(const std::vector<AttentionMap>& maps, const std::string& path, const std::string& stem) {
    const auto dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ostringstream os;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const std::string name = stem + "_" + std::to_string(i) + ".dnit";
        write_tensor(map_to_tensor(maps[i]), (dir / name).string());
        os << "file=" << name << " word=" << maps[i].word << " category=" << category_name(maps[i].category);
        if (!maps[i].block.empty()) os << " block=" << maps[i].block;
        os << "\n";
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(ErrorKind::io, "cannot open " + path + " for writing");
    f << os.str();
    if (!f) throw Error(ErrorKind::io, "write failed: " + path);
}

} // namespace dni
