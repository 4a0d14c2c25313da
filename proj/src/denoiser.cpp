// SPDX-License-Identifier: Apache-2.0
#include "dni/denoiser.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace dni {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecR = Eigen::Matrix<float, 1, Eigen::Dynamic>;

enum Slot {
    TOK, CIN_W, CIN_B, POS1,
    T1_W, T1_B, T2_W, T2_B, T3_W, T3_B,
    G1_W, G1_B, G2_W, G2_B, G3_W, G3_B,
    DOWN_W, DOWN_B, POS2, CD_W, CD_B,
    XD_Q, XD_K, XD_V, XD_OW, XD_OB,
    XM_Q, XM_K, XM_V, XM_OW, XM_OB,
    UPL_W, UPL_B, CO1_W, CO1_B, CO_W, CO_B,
    NSLOT
};

const char* kSlotNames[NSLOT] = {
    "tok", "c_in.w", "c_in.b", "pos1",
    "t1.w", "t1.b", "t2.w", "t2.b", "t3.w", "t3.b",
    "g1.w", "g1.b", "g2.w", "g2.b", "g3.w", "g3.b",
    "down.w", "down.b", "pos2", "c_d.w", "c_d.b",
    "xd.q", "xd.k", "xd.v", "xd.o.w", "xd.o.b",
    "xm.q", "xm.k", "xm.v", "xm.o.w", "xm.o.b",
    "upl.w", "upl.b", "c_out1.w", "c_out1.b", "c_out.w", "c_out.b",
};

struct Geo {
    int L, H, W, H4, W4, H8, W8, P1, P2, P3;
    explicit Geo(const Dims& d)
        : L(int(d.l)), H(int(d.h)), W(int(d.w)), H4(H / 4), W4(W / 4), H8(H / 8), W8(W / 8), P1(L * H * W), P2(L * H4 * W4),
          P3(L * H8 * W8) {}
};

// (rows, cols, fan_in for uniform init; 0 = zeros, -1 = standard normal)
struct Shape2 {
    int rows, cols, fan_in;
};

std::vector<Shape2> param_shapes(const ModelConfig& c) {
    const Geo g(c.dims);
    const int C = int(c.dims.c), E = c.emb, K = kPromptSlots, HD = c.heads * c.dk, HV = c.heads * c.f2;
    std::vector<Shape2> s(NSLOT);
    s[TOK] = {kVocabSize, E, -1};
    s[CIN_W] = {27 * C, c.f1, 27 * C};
    s[CIN_B] = {1, c.f1, 27 * C};
    s[POS1] = {g.P1, c.f1, 0};
    s[T1_W] = {c.temb, c.f1, c.temb};
    s[T1_B] = {1, c.f1, c.temb};
    s[T2_W] = {c.temb, c.f2, c.temb};
    s[T2_B] = {1, c.f2, c.temb};
    s[T3_W] = {c.temb, c.f1, c.temb};
    s[T3_B] = {1, c.f1, c.temb};
    s[G1_W] = {K * E, c.f1, K * E};
    s[G1_B] = {1, c.f1, K * E};
    s[G2_W] = {K * E, c.f2, K * E};
    s[G2_B] = {1, c.f2, K * E};
    s[G3_W] = {K * E, c.f1, K * E};
    s[G3_B] = {1, c.f1, K * E};
    s[DOWN_W] = {c.f1, c.f2, c.f1};
    s[DOWN_B] = {1, c.f2, c.f1};
    s[POS2] = {g.P2, c.f2, 0};
    s[CD_W] = {27 * c.f2, c.f2, 27 * c.f2};
    s[CD_B] = {1, c.f2, 27 * c.f2};
    for (int base : {int(XD_Q), int(XM_Q)}) {
        s[base + 0] = {c.f2, HD, c.f2};
        s[base + 1] = {E, HD, E};
        s[base + 2] = {E, HV, E};
        s[base + 3] = {HV, c.f2, HV};
        s[base + 4] = {1, c.f2, HV};
    }
    s[UPL_W] = {c.f2, c.f1, c.f2};
    s[UPL_B] = {1, c.f1, c.f2};
    s[CO1_W] = {c.head_temporal * 9 * c.f1, c.f1, c.head_temporal * 9 * c.f1};
    s[CO1_B] = {1, c.f1, c.head_temporal * 9 * c.f1};
    s[CO_W] = {c.f1, C, c.f1};
    s[CO_B] = {1, C, c.f1};
    return s;
}

MatR silu(const MatR& x) { return (x.array() / (1.0f + (-x.array()).exp())).matrix(); }
MatR silu_grad(const MatR& x) {
    const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s = (1.0f + (-x.array()).exp()).inverse();
    return (s * (1.0f + x.array() * (1.0f - s))).matrix();
}

// kt x 3 x 3 patches, kt in {1, 3}:
// cols[p, ((dl * 3 + dh) * 3 + dw) * C + c] = in[l + dl - kt/2, y + dh - 1, x + dw - 1, c], zero padded.
void im2col3(const float* in, int L, int H, int W, int C, int kt, float* cols) {
    const int K = kt * 9 * C;
    for (int l = 0; l < L; ++l)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float* row = cols + (std::size_t((l * H + y) * W + x)) * K;
                for (int dl = 0; dl < kt; ++dl)
                    for (int dh = 0; dh < 3; ++dh)
                        for (int dw = 0; dw < 3; ++dw) {
                            float* dst = row + ((dl * 3 + dh) * 3 + dw) * C;
                            const int sl = l + dl - kt / 2, sy = y + dh - 1, sx = x + dw - 1;
                            if (sl < 0 || sl >= L || sy < 0 || sy >= H || sx < 0 || sx >= W) {
                                std::fill(dst, dst + C, 0.0f);
                            } else {
                                const float* src = in + (std::size_t((sl * H + sy) * W + sx)) * C;
                                std::copy(src, src + C, dst);
                            }
                        }
            }
}

void col2im3_add(const float* cols, int L, int H, int W, int C, int kt, float* din) {
    const int K = kt * 9 * C;
    for (int l = 0; l < L; ++l)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const float* row = cols + (std::size_t((l * H + y) * W + x)) * K;
                for (int dl = 0; dl < kt; ++dl)
                    for (int dh = 0; dh < 3; ++dh)
                        for (int dw = 0; dw < 3; ++dw) {
                            const int sl = l + dl - kt / 2, sy = y + dh - 1, sx = x + dw - 1;
                            if (sl < 0 || sl >= L || sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            const float* src = row + ((dl * 3 + dh) * 3 + dw) * C;
                            float* dst = din + (std::size_t((sl * H + sy) * W + sx)) * C;
                            for (int c = 0; c < C; ++c) dst[c] += src[c];
                        }
            }
}

void pool(const MatR& in, int L, int H, int W, int p, MatR& out) {
    const int h = H / p, w = W / p, C = int(in.cols());
    out.setZero(std::size_t(L) * h * w, C);
    const float inv = 1.0f / float(p * p);
    for (int l = 0; l < L; ++l)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out.row((l * h + y / p) * w + x / p) += in.row((l * H + y) * W + x) * inv;
}

void pool_back_add(const MatR& dout, int L, int H, int W, int p, MatR& din) {
    const int h = H / p, w = W / p;
    const float inv = 1.0f / float(p * p);
    for (int l = 0; l < L; ++l)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) din.row((l * H + y) * W + x) += dout.row((l * h + y / p) * w + x / p) * inv;
}

struct Tap {
    int i0, i1;
    float t;
};

// Pixel-centre bilinear taps, same convention as resize_map.
std::vector<Tap> taps(int n_in, int n_out) {
    std::vector<Tap> v(n_out);
    for (int o = 0; o < n_out; ++o) {
        double s = (o + 0.5) * double(n_in) / n_out - 0.5;
        s = std::clamp(s, 0.0, double(n_in - 1));
        const int i0 = int(std::floor(s));
        v[o] = {i0, std::min(i0 + 1, n_in - 1), float(s - i0)};
    }
    return v;
}

void upsample(const MatR& in, int L, int h, int w, int H, int W, MatR& out) {
    const auto ty = taps(h, H), tx = taps(w, W);
    out.resize(std::size_t(L) * H * W, in.cols());
    for (int l = 0; l < L; ++l)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const Tap a = ty[y], b = tx[x];
                const auto r = [&](int yy, int xx) { return in.row((l * h + yy) * w + xx); };
                out.row((l * H + y) * W + x) = (1 - a.t) * ((1 - b.t) * r(a.i0, b.i0) + b.t * r(a.i0, b.i1)) +
                                               a.t * ((1 - b.t) * r(a.i1, b.i0) + b.t * r(a.i1, b.i1));
            }
}

void upsample_back_add(const MatR& dout, int L, int h, int w, int H, int W, MatR& din) {
    const auto ty = taps(h, H), tx = taps(w, W);
    for (int l = 0; l < L; ++l)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const Tap a = ty[y], b = tx[x];
                const auto g = dout.row((l * H + y) * W + x);
                din.row((l * h + a.i0) * w + b.i0) += (1 - a.t) * (1 - b.t) * g;
                din.row((l * h + a.i0) * w + b.i1) += (1 - a.t) * b.t * g;
                din.row((l * h + a.i1) * w + b.i0) += a.t * (1 - b.t) * g;
                din.row((l * h + a.i1) * w + b.i1) += a.t * b.t * g;
            }
}

// g += A^T B, evaluated as (B^T A)^T: the tall-skinny operands stream better that way.
void add_AtB(MapR g, const MatR& A, const MatR& B) {
    const MatR t = B.transpose() * A;
    g += t.transpose();
}

struct XCache {
    MatR q, k, v, A, o; // A: P x (heads * K)
};

} // namespace

struct ToyDenoiser::Impl {
    const ToyDenoiser& m;
    Geo g;
    int C, F1, F2, E, K, heads, dk;

    explicit Impl(const ToyDenoiser& model)
        : m(model), g(model.cfg_.dims), C(int(model.cfg_.dims.c)), F1(model.cfg_.f1), F2(model.cfg_.f2), E(model.cfg_.emb),
          K(kPromptSlots), heads(model.cfg_.heads), dk(model.cfg_.dk) {}

    CMapR P(int s) const {
        const Param& p = m.params_[m.slot_[s]];
        return CMapR(p.w.data(), p.rows, p.cols);
    }
    static MapR G(std::vector<std::vector<float>>& grads, const ToyDenoiser& m, int s) {
        const Param& p = m.params_[m.slot_[s]];
        return MapR(grads[m.slot_[s]].data(), p.rows, p.cols);
    }

    struct Cache {
        VecR te, gv;
        MatR e;
        MatR cols_in, cols_d, cols_out, dcols; // im2col buffers, reused across samples
        MatR x, h1pre, h1, p, d0, d1pre, d1, d2, mm, am, d3, u, h2, h3pre, h3, net;
        XCache xd, xm;
    };

    VecR time_embedding(int t) const {
        const int half = m.cfg_.temb / 2;
        VecR te(m.cfg_.temb);
        for (int i = 0; i < half; ++i) {
            const double f = std::exp(-std::log(1000.0) * i / half);
            te[i] = float(std::sin(t * f));
            te[half + i] = float(std::cos(t * f));
        }
        return te;
    }

    // cols keeps the im2col matrix for the backward pass.
    MatR conv3(const MatR& in, int L, int H, int W, int kt, int sw, int sb, MatR& cols) const {
        const int Cin = int(in.cols());
        cols.resize(std::size_t(L) * H * W, kt * 9 * Cin);
        im2col3(in.data(), L, H, W, Cin, kt, cols.data());
        MatR out = cols * P(sw);
        out.rowwise() += P(sb).row(0);
        return out;
    }

    // dW += cols^T dout, db += sum dout; returns d(in) if wanted.
    void conv3_back(const MatR& cols, const MatR& dout, int L, int H, int W, int kt, int sw, int sb, std::vector<std::vector<float>>& grads,
                    MatR& dcols, MatR* din) const {
        add_AtB(G(grads, m, sw), cols, dout);
        G(grads, m, sb).row(0) += dout.colwise().sum();
        if (din) {
            dcols.noalias() = dout * P(sw).transpose();
            col2im3_add(dcols.data(), L, H, W, int(din->cols()), kt, din->data());
        }
    }

    MatR xattn(const MatR& h, const MatR& e, int base, XCache& c) const {
        const int Pn = int(h.rows()), F = int(h.cols());
        c.q = h * P(base + 0);
        c.k = e * P(base + 1);
        c.v = e * P(base + 2);
        c.A.resize(Pn, heads * K);
        c.o.setZero(Pn, heads * F);
        const float scale = 1.0f / std::sqrt(float(dk));
        for (int p = 0; p < Pn; ++p)
            for (int hd = 0; hd < heads; ++hd) {
                float logit[kPromptSlots];
                float mx = -INFINITY;
                for (int k = 0; k < K; ++k) {
                    float s = 0;
                    for (int j = 0; j < dk; ++j) s += c.q(p, hd * dk + j) * c.k(k, hd * dk + j);
                    logit[k] = s * scale;
                    mx = std::max(mx, logit[k]);
                }
                float z = 0;
                for (int k = 0; k < K; ++k) z += (logit[k] = std::exp(logit[k] - mx));
                for (int k = 0; k < K; ++k) {
                    const float a = logit[k] / z;
                    c.A(p, hd * K + k) = a;
                    c.o.row(p).segment(hd * F, F) += a * c.v.row(k).segment(hd * F, F);
                }
            }
        MatR out = c.o * P(base + 3);
        out.rowwise() += P(base + 4).row(0);
        return out;
    }

    void xattn_back(const MatR& h, const MatR& e, int base, const XCache& c, const MatR& dout, std::vector<std::vector<float>>& grads,
                    MatR& dh, MatR& de) const {
        const int Pn = int(h.rows()), F = int(h.cols());
        add_AtB(G(grads, m, base + 3), c.o, dout);
        G(grads, m, base + 4).row(0) += dout.colwise().sum();
        const MatR dO = dout * P(base + 3).transpose();
        MatR dq = MatR::Zero(Pn, heads * dk), dkm = MatR::Zero(K, heads * dk), dv = MatR::Zero(K, heads * F);
        const float scale = 1.0f / std::sqrt(float(dk));
        for (int p = 0; p < Pn; ++p)
            for (int hd = 0; hd < heads; ++hd) {
                float dA[kPromptSlots], dot = 0;
                for (int k = 0; k < K; ++k) {
                    const float a = c.A(p, hd * K + k);
                    dA[k] = dO.row(p).segment(hd * F, F).dot(c.v.row(k).segment(hd * F, F));
                    dv.row(k).segment(hd * F, F) += a * dO.row(p).segment(hd * F, F);
                    dot += a * dA[k];
                }
                for (int k = 0; k < K; ++k) {
                    const float dl = c.A(p, hd * K + k) * (dA[k] - dot) * scale;
                    for (int j = 0; j < dk; ++j) {
                        dq(p, hd * dk + j) += dl * c.k(k, hd * dk + j);
                        dkm(k, hd * dk + j) += dl * c.q(p, hd * dk + j);
                    }
                }
            }
        add_AtB(G(grads, m, base + 0), h, dq);
        dh.noalias() += dq * P(base + 0).transpose();
        G(grads, m, base + 1).noalias() += e.transpose() * dkm;
        de.noalias() += dkm * P(base + 1).transpose();
        G(grads, m, base + 2).noalias() += e.transpose() * dv;
        de.noalias() += dv * P(base + 2).transpose();
    }

    void forward(const LatentTensor& x, int t, const ToyPrompt& prompt, Cache& c) const {
        const auto tok = prompt.tokens();
        c.te = time_embedding(t);
        c.e.resize(K, E);
        for (int k = 0; k < K; ++k) c.e.row(k) = P(TOK).row(tok[k]);
        c.gv = Eigen::Map<const VecR>(c.e.data(), K * E);
        const auto bias = [&](int w, int b) -> VecR { return c.te * P(w) + P(b).row(0); };
        const auto gbias = [&](int w, int b) -> VecR { return c.gv * P(w) + P(b).row(0); };

        c.x = CMapR(x.data(), g.P1, C);
        c.h1pre = conv3(c.x, g.L, g.H, g.W, 3, CIN_W, CIN_B, c.cols_in) + P(POS1);
        c.h1pre.rowwise() += bias(T1_W, T1_B) + gbias(G1_W, G1_B);
        c.h1 = silu(c.h1pre);

        pool(c.h1, g.L, g.H, g.W, 4, c.p);
        c.d0 = c.p * P(DOWN_W) + P(POS2);
        c.d0.rowwise() += P(DOWN_B).row(0);
        c.d1pre = conv3(c.d0, g.L, g.H4, g.W4, 3, CD_W, CD_B, c.cols_d);
        c.d1pre.rowwise() += bias(T2_W, T2_B) + gbias(G2_W, G2_B);
        c.d1 = silu(c.d1pre);
        c.d2 = c.d1 + xattn(c.d1, c.e, XD_Q, c.xd);

        pool(c.d2, g.L, g.H4, g.W4, 2, c.mm);
        c.am = xattn(c.mm, c.e, XM_Q, c.xm);
        MatR up_am;
        upsample(c.am, g.L, g.H8, g.W8, g.H4, g.W4, up_am);
        c.d3 = c.d2 + up_am;

        c.u = c.d3 * P(UPL_W);
        c.u.rowwise() += P(UPL_B).row(0);
        MatR up_u;
        upsample(c.u, g.L, g.H4, g.W4, g.H, g.W, up_u);
        c.h2 = c.h1 + up_u;
        c.h3pre = conv3(c.h2, g.L, g.H, g.W, m.cfg_.head_temporal, CO1_W, CO1_B, c.cols_out);
        c.h3pre.rowwise() += bias(T3_W, T3_B) + gbias(G3_W, G3_B);
        c.h3 = silu(c.h3pre) + c.h2;
        c.net = c.h3 * P(CO_W);
        c.net.rowwise() += P(CO_B).row(0);
    }

    // dnet is d(loss)/d(net). Accumulates parameter gradients.
    void backward(const ToyPrompt& prompt, Cache& c, const MatR& dnet, std::vector<std::vector<float>>& grads) const {
        const auto tok = prompt.tokens();
        MatR de = MatR::Zero(K, E);
        VecR dgv = VecR::Zero(K * E);
        const auto bias_back = [&](const MatR& dpre, int tw, int tb, int gw, int gb) {
            const VecR s = dpre.colwise().sum();
            G(grads, m, tw).noalias() += c.te.transpose() * s;
            G(grads, m, tb).row(0) += s;
            G(grads, m, gw).noalias() += c.gv.transpose() * s;
            G(grads, m, gb).row(0) += s;
            dgv.noalias() += s * P(gw).transpose();
        };

        add_AtB(G(grads, m, CO_W), c.h3, dnet);
        G(grads, m, CO_B).row(0) += dnet.colwise().sum();
        const MatR dh3 = dnet * P(CO_W).transpose();
        MatR dh2 = dh3;
        const MatR dh3pre = dh3.cwiseProduct(silu_grad(c.h3pre));
        bias_back(dh3pre, T3_W, T3_B, G3_W, G3_B);
        conv3_back(c.cols_out, dh3pre, g.L, g.H, g.W, m.cfg_.head_temporal, CO1_W, CO1_B, grads, c.dcols, &dh2);

        MatR dh1 = dh2;
        MatR du = MatR::Zero(g.P2, F1);
        upsample_back_add(dh2, g.L, g.H4, g.W4, g.H, g.W, du);
        add_AtB(G(grads, m, UPL_W), c.d3, du);
        G(grads, m, UPL_B).row(0) += du.colwise().sum();
        const MatR dd3 = du * P(UPL_W).transpose();

        MatR dd2 = dd3;
        MatR dam = MatR::Zero(g.P3, F2);
        upsample_back_add(dd3, g.L, g.H8, g.W8, g.H4, g.W4, dam);
        MatR dmm = MatR::Zero(g.P3, F2);
        xattn_back(c.mm, c.e, XM_Q, c.xm, dam, grads, dmm, de);
        pool_back_add(dmm, g.L, g.H4, g.W4, 2, dd2);

        MatR dd1 = dd2;
        xattn_back(c.d1, c.e, XD_Q, c.xd, dd2, grads, dd1, de);
        const MatR dd1pre = dd1.cwiseProduct(silu_grad(c.d1pre));
        bias_back(dd1pre, T2_W, T2_B, G2_W, G2_B);
        MatR dd0 = MatR::Zero(g.P2, F2);
        conv3_back(c.cols_d, dd1pre, g.L, g.H4, g.W4, 3, CD_W, CD_B, grads, c.dcols, &dd0);
        G(grads, m, POS2) += dd0;
        add_AtB(G(grads, m, DOWN_W), c.p, dd0);
        G(grads, m, DOWN_B).row(0) += dd0.colwise().sum();
        const MatR dp = dd0 * P(DOWN_W).transpose();
        pool_back_add(dp, g.L, g.H, g.W, 4, dh1);

        const MatR dh1pre = dh1.cwiseProduct(silu_grad(c.h1pre));
        bias_back(dh1pre, T1_W, T1_B, G1_W, G1_B);
        G(grads, m, POS1) += dh1pre;
        conv3_back(c.cols_in, dh1pre, g.L, g.H, g.W, 3, CIN_W, CIN_B, grads, c.dcols, nullptr);

        de += Eigen::Map<const MatR>(dgv.data(), K, E);
        for (int k = 0; k < K; ++k) G(grads, m, TOK).row(tok[k]) += de.row(k);
    }
};

void ModelConfig::validate() const {
    if (dims.c == 0 || dims.l == 0) throw Error(ErrorKind::invalid_argument, "model dims must be positive, got " + dims.str());
    if (dims.w % 8 || dims.h % 8 || dims.w == 0 || dims.h == 0)
        throw Error(ErrorKind::invalid_argument, "model width and height must be positive multiples of 8, got " + dims.str());
    if (head_temporal != 1 && head_temporal != 3) throw Error(ErrorKind::invalid_argument, "head_temporal must be 1 or 3");
    if (f1 < 1 || f2 < 1 || emb < 1 || heads < 1 || dk < 1 || temb < 2 || temb % 2)
        throw Error(ErrorKind::invalid_argument, "invalid model widths");
}

ToyDenoiser::ToyDenoiser(const ModelConfig& cfg, const NoiseSchedule& s, std::uint64_t init_seed) : cfg_(cfg), sched_(s) {
    cfg_.validate();
    Rng rng(init_seed);
    const auto shapes = param_shapes(cfg_);
    for (int i = 0; i < NSLOT; ++i) {
        Param p{kSlotNames[i], shapes[i].rows, shapes[i].cols, std::vector<float>(std::size_t(shapes[i].rows) * shapes[i].cols)};
        if (shapes[i].fan_in < 0) {
            for (auto& v : p.w) v = float(rng.gaussian());
        } else if (shapes[i].fan_in > 0) {
            const double bound = 1.0 / std::sqrt(double(shapes[i].fan_in));
            for (auto& v : p.w) v = float(bound * (2.0 * rng.uniform() - 1.0));
        }
        params_.push_back(std::move(p));
    }
    index_params();
}

void ToyDenoiser::index_params() {
    slot_.assign(NSLOT, -1);
    for (std::size_t i = 0; i < params_.size(); ++i)
        for (int s = 0; s < NSLOT; ++s)
            if (params_[i].name == kSlotNames[s]) slot_[s] = int(i);
    const auto shapes = param_shapes(cfg_);
    for (int s = 0; s < NSLOT; ++s) {
        if (slot_[s] < 0) throw Error(ErrorKind::invalid_argument, std::string("checkpoint lacks parameter ") + kSlotNames[s]);
        const Param& p = params_[slot_[s]];
        if (p.rows != shapes[s].rows || p.cols != shapes[s].cols)
            throw Error(ErrorKind::dims_mismatch, std::string("parameter ") + kSlotNames[s] + " has the wrong shape");
    }
}

std::size_t ToyDenoiser::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.w.size();
    return n;
}

LatentTensor ToyDenoiser::predict_eps(const LatentTensor& x, int t, const ToyPrompt& prompt, AttentionCapture* capture) const {
    require_same_dims(x.dims(), cfg_.dims, "predict_eps");
    Impl im(*this);
    Impl::Cache c;
    im.forward(x, t, prompt, c);
    const double a = sched_.abar(t), ra = std::sqrt(a), rs = std::sqrt(1.0 - a);
    LatentTensor out(x.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = float(ra * c.net.data()[i] + rs * x.data()[i]);
    if (capture) {
        const Geo& g = im.g;
        const int K = kPromptSlots, H = cfg_.heads;
        capture->l = cfg_.dims.l;
        capture->w_down = std::uint32_t(g.W4);
        capture->h_down = std::uint32_t(g.H4);
        capture->w_mid = std::uint32_t(g.W8);
        capture->h_mid = std::uint32_t(g.H8);
        const auto reduce = [&](const MatR& A, std::vector<float>& dst) {
            dst.assign(std::size_t(A.rows()) * K, 0.0f);
            for (Eigen::Index p = 0; p < A.rows(); ++p)
                for (int k = 0; k < K; ++k) {
                    float s = 0;
                    for (int h = 0; h < H; ++h) s += A(p, h * K + k);
                    dst[std::size_t(p) * K + k] = s / float(H);
                }
        };
        reduce(c.xd.A, capture->down);
        reduce(c.xm.A, capture->mid);
    }
    return out;
}

double ToyDenoiser::loss_and_grad(const std::vector<const LatentTensor*>& x0, const std::vector<ToyPrompt>& prompts,
                                  const std::vector<int>& t, const std::vector<const LatentTensor*>& eps,
                                  std::vector<std::vector<float>>& grads) const {
    const std::size_t B = x0.size();
    if (B == 0 || prompts.size() != B || t.size() != B || eps.size() != B) throw Error(ErrorKind::invalid_argument, "loss_and_grad: batch mismatch");
    Impl im(*this);
    const double n = double(B) * cfg_.dims.count();
    double loss = 0.0;
    Impl::Cache c;
    for (std::size_t b = 0; b < B; ++b) {
        const double a = sched_.abar(t[b]), ra = std::sqrt(a), rs = std::sqrt(1.0 - a);
        // 1/abar weighting turns the eps residual into the v residual, keeping high-t steps informative.
        const double w = 1.0 / a;
        const LatentTensor xt = q_sample(*x0[b], t[b], *eps[b], sched_);
        im.forward(xt, t[b], prompts[b], c);
        MatR dnet(c.net.rows(), c.net.cols());
        for (Eigen::Index i = 0; i < dnet.size(); ++i) {
            const double r = ra * c.net.data()[i] + rs * xt.data()[i] - eps[b]->data()[i];
            loss += w * r * r;
            dnet.data()[i] = float(2.0 * w * r * ra / n);
        }
        im.backward(prompts[b], c, dnet, grads);
    }
    return loss / n;
}

TrainResult train(ToyDenoiser& model, const std::vector<Example>& data, const TrainConfig& cfg, const std::function<void(int, double)>& on_step) {
    if (data.empty()) throw Error(ErrorKind::invalid_argument, "train: empty dataset");
    if (cfg.steps < 1 || cfg.batch < 1 || !(cfg.lr > 0)) throw Error(ErrorKind::invalid_argument, "train: steps, batch and lr must be positive");
    for (const auto& ex : data) require_same_dims(ex.video.dims(), model.config().dims, "train example");
    auto& params = model.params();
    std::vector<std::vector<float>> grads(params.size()), m1(params.size()), m2(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        grads[i].assign(params[i].w.size(), 0.0f);
        m1[i].assign(params[i].w.size(), 0.0f);
        m2[i].assign(params[i].w.size(), 0.0f);
    }
    Rng rng(cfg.seed);
    const int T = model.schedule().T;
    TrainResult res;
    std::vector<LatentTensor> eps(cfg.batch);
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<const LatentTensor*> xs, es;
        std::vector<ToyPrompt> ps;
        std::vector<int> ts;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& ex = data[rng.below(std::uint32_t(data.size()))];
            ts.push_back(1 + int(rng.below(std::uint32_t(T))));
            eps[b] = random_gaussian(ex.video.dims(), rng);
            xs.push_back(&ex.video);
            ps.push_back(ex.scene.prompt);
            es.push_back(&eps[b]);
        }
        for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
        const double loss = model.loss_and_grad(xs, ps, ts, es, grads);
        if (!std::isfinite(loss)) throw Error(ErrorKind::numeric, "training diverged at step " + std::to_string(step));
        res.losses.push_back(loss);
        const double c1 = 1.0 - std::pow(cfg.beta1, step), c2 = 1.0 - std::pow(cfg.beta2, step);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& w = params[i].w;
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double gj = grads[i][j];
                m1[i][j] = float(cfg.beta1 * m1[i][j] + (1 - cfg.beta1) * gj);
                m2[i][j] = float(cfg.beta2 * m2[i][j] + (1 - cfg.beta2) * gj * gj);
                w[j] -= float(cfg.lr * (m1[i][j] / c1) / (std::sqrt(m2[i][j] / c2) + cfg.adam_eps));
            }
        }
        if (on_step) on_step(step, loss);
    }
    const auto mean = [&](std::size_t from, std::size_t to) {
        double s = 0;
        for (std::size_t i = from; i < to; ++i) s += res.losses[i];
        return s / double(to - from);
    };
    const std::size_t n = res.losses.size();
    res.initial_loss = mean(0, std::min<std::size_t>(20, n));
    res.final_loss = mean(n - std::min<std::size_t>(50, n), n);
    return res;
}

void ToyDenoiser::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create checkpoint directory " + dir);
    nlohmann::ordered_json j;
    j["format"] = "dni-checkpoint";
    j["version"] = 1;
    j["dims"] = {cfg_.dims.w, cfg_.dims.h, cfg_.dims.l, cfg_.dims.c};
    j["f1"] = cfg_.f1;
    j["f2"] = cfg_.f2;
    j["emb"] = cfg_.emb;
    j["temb"] = cfg_.temb;
    j["heads"] = cfg_.heads;
    j["dk"] = cfg_.dk;
    j["head_temporal"] = cfg_.head_temporal;
    j["schedule"] = {{"T", sched_.T}, {"beta_min", sched_.beta.front()}, {"beta_max", sched_.beta.back()}};
    auto& plist = j["params"] = nlohmann::ordered_json::array();
    for (const auto& p : params_) {
        const std::string file = p.name + ".dnit";
        write_tensor(LatentTensor(Dims{std::uint32_t(p.cols), std::uint32_t(p.rows), 1, 1}, p.w), (fs::path(dir) / file).string());
        plist.push_back({{"name", p.name}, {"file", file}, {"rows", p.rows}, {"cols", p.cols}});
    }
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!f) throw Error(ErrorKind::io, "cannot write " + (fs::path(dir) / "manifest.json").string());
    f << j.dump(2) << "\n";
}

ToyDenoiser ToyDenoiser::load(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto mpath = (fs::path(dir) / "manifest.json").string();
    std::ifstream f(mpath);
    if (!f) throw Error(ErrorKind::io, "cannot open " + mpath);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid_argument, mpath + ": " + e.what());
    }
    if (j.value("format", "") != "dni-checkpoint") throw Error(ErrorKind::bad_magic, mpath + ": not a checkpoint manifest");
    ToyDenoiser m;
    try {
        const auto d = j.at("dims");
        m.cfg_.dims = Dims{d.at(0).get<std::uint32_t>(), d.at(1).get<std::uint32_t>(), d.at(2).get<std::uint32_t>(), d.at(3).get<std::uint32_t>()};
        m.cfg_.f1 = j.at("f1");
        m.cfg_.f2 = j.at("f2");
        m.cfg_.emb = j.at("emb");
        m.cfg_.temb = j.at("temb");
        m.cfg_.heads = j.at("heads");
        m.cfg_.dk = j.at("dk");
        m.cfg_.head_temporal = j.at("head_temporal");
        const auto& s = j.at("schedule");
        m.sched_ = make_schedule(s.at("T"), s.at("beta_min"), s.at("beta_max"));
        m.cfg_.validate();
        for (const auto& p : j.at("params")) {
            const LatentTensor t = read_tensor((fs::path(dir) / p.at("file").get<std::string>()).string());
            Param prm{p.at("name"), p.at("rows"), p.at("cols"), t.values()};
            if (t.size() != std::size_t(prm.rows) * prm.cols) throw Error(ErrorKind::dims_mismatch, "parameter " + prm.name + " size mismatch");
            m.params_.push_back(std::move(prm));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid_argument, mpath + ": " + e.what());
    }
    m.index_params();
    return m;
}

} // namespace dni
